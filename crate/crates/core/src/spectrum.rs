//! Principal Dirichlet eigenvalue of `−½Δ + V` on a ball, by finite
//! differences on `hℤ^d`.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::{Environment, Potential, PotentialError, PotentialSpec};
use crate::rng::environment_seed;
use crate::stats::pairwise_sum;

const MISSING: u32 = u32::MAX;

/// Largest number of grid nodes a problem may allocate.
pub const MAX_NODES: usize = 20_000_000;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid needs {nodes} nodes, more than the budget of {MAX_NODES}")]
    MemoryBudget { nodes: usize },
    #[error("potential is negative or not finite ({value}) at node {position:?}")]
    BadPotential { value: f64, position: Vec<f64> },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("principal eigenvector changes sign (min/max = {ratio:e}); grid too coarse?")]
    NotPerron { ratio: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Nodes of `hℤ^d ∩ B(0, R)` with the potential sampled on them.
#[derive(Debug, Clone)]
pub struct GridProblem {
    dimension: usize,
    radius: f64,
    h: f64,
    /// Integer coordinates of each node.
    cells: Vec<[i32; 3]>,
    potential: Vec<f64>,
    neighbors: Vec<[u32; 6]>,
}

impl GridProblem {
    /// Sample `potential` on the nodes inside `B(0, radius)`.
    pub fn new<P: Potential + ?Sized>(dimension: usize, radius: f64, h: f64, potential: &P) -> Result<Self, SpectrumError> {
        Self::from_fn(dimension, radius, h, |x| potential.value(x))
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(dimension: usize, radius: f64, h: f64, f: F) -> Result<Self, SpectrumError> {
        if !(1..=3).contains(&dimension) {
            return Err(SpectrumError::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dimension}")));
        }
        if !(radius > 0.0 && h > 0.0) {
            return Err(SpectrumError::InvalidGrid(format!("radius and h must be positive, got {radius}, {h}")));
        }
        if h > radius / 16.0 * (1.0 + 1e-12) {
            return Err(SpectrumError::InvalidGrid(format!("h = {h} exceeds R/16 = {}", radius / 16.0)));
        }
        let n = (radius / h).ceil() as i64;
        let side = (2 * n + 1) as usize;
        let estimate = (side as f64).powi(dimension as i32) * crate::quad::unit_ball_volume(dimension) / 2f64.powi(dimension as i32);
        if estimate > MAX_NODES as f64 {
            return Err(SpectrumError::MemoryBudget { nodes: estimate as usize });
        }
        let r2 = radius * radius;
        let mut cells = Vec::new();
        let mut lookup = vec![MISSING; side.pow(dimension as u32)];
        let flat = |c: &[i32; 3]| -> usize { (0..dimension).fold(0usize, |acc, k| acc * side + (c[k] as i64 + n) as usize) };
        let mut c = [0i32; 3];
        let total = side.pow(dimension as u32);
        for lin in 0..total {
            let mut rest = lin;
            for k in (0..dimension).rev() {
                c[k] = (rest % side) as i32 - n as i32;
                rest /= side;
            }
            let x2: f64 = (0..dimension).map(|k| (c[k] as f64 * h).powi(2)).sum();
            if x2 < r2 {
                lookup[lin] = cells.len() as u32;
                cells.push(c);
            }
        }
        let neighbors: Vec<[u32; 6]> = cells
            .iter()
            .map(|c| {
                let mut nb = [MISSING; 6];
                for k in 0..dimension {
                    for (s, delta) in [-1i32, 1].iter().enumerate() {
                        let mut m = *c;
                        m[k] += delta;
                        if (m[k] as i64).abs() <= n {
                            nb[2 * k + s] = lookup[flat(&m)];
                        }
                    }
                }
                nb
            })
            .collect();
        let potential: Vec<f64> = cells
            .par_iter()
            .map(|c| {
                let x: Vec<f64> = (0..dimension).map(|k| c[k] as f64 * h).collect();
                f(&x)
            })
            .collect();
        for (i, v) in potential.iter().enumerate() {
            if !(v.is_finite() && *v >= 0.0) {
                let position = (0..dimension).map(|k| cells[i][k] as f64 * h).collect();
                return Err(SpectrumError::BadPotential { value: *v, position });
            }
        }
        Ok(Self { dimension, radius, h, cells, potential, neighbors })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn position(&self, i: usize) -> Vec<f64> {
        (0..self.dimension).map(|k| self.cells[i][k] as f64 * self.h).collect()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// The same grid with `V + c`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.potential.iter_mut().for_each(|v| *v += c);
        out
    }

    /// The same grid with a different potential.
    pub fn with_potential(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.len());
        let mut out = self.clone();
        out.potential = values;
        out
    }

    fn diagonal(&self, i: usize) -> f64 {
        self.dimension as f64 / (self.h * self.h) + self.potential[i]
    }

    /// `y = (−½Δ_h + V) x` with zero Dirichlet data outside the ball.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let off = 0.5 / (self.h * self.h);
        let m = 2 * self.dimension;
        y.par_iter_mut().enumerate().with_min_len(4096).for_each(|(i, yi)| {
            let nb = &self.neighbors[i];
            let mut s = 0.0;
            for &j in &nb[..m] {
                if j != MISSING {
                    s += x[j as usize];
                }
            }
            *yi = self.diagonal(i) * x[i] - off * s;
        });
    }

    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        dot(x, &y) / dot(x, x)
    }
}

/// Inner product summed over fixed chunks, so the result does not depend on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a.par_chunks(2048).zip(b.par_chunks(2048)).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).collect();
    pairwise_sum(&partial)
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x).with_min_len(4096).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Diagonally preconditioned conjugate gradients for `A y = b`, starting at `y`.
fn cg(problem: &GridProblem, b: &[f64], y: &mut [f64], rel_tol: f64, max_iter: usize) -> usize {
    let n = b.len();
    let inv_diag: Vec<f64> = (0..n).map(|i| 1.0 / problem.diagonal(i)).collect();
    let mut ay = vec![0.0; n];
    problem.apply(y, &mut ay);
    let mut r: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
    let b_norm = dot(b, b).sqrt();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if dot(&r, &r).sqrt() <= rel_tol * b_norm {
            return it;
        }
        problem.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, y);
        axpy(-alpha, &ap, &mut r);
        z.par_iter_mut().zip(&r).zip(&inv_diag).with_min_len(4096).for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).with_min_len(4096).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    max_iter
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Target for `‖A x − λ x‖` with `‖x‖ = 1`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub block_size: usize,
    /// Largest tolerated `−min(x)/max(x)` of the principal eigenvector.
    pub perron_tolerance: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 300, block_size: 4, perron_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub cg_iterations: usize,
    /// Unit-norm, positive principal eigenvector.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

fn orthonormalize(block: &mut [Vec<f64>]) {
    for j in 0..block.len() {
        for _ in 0..2 {
            for i in 0..j {
                let (head, tail) = block.split_at_mut(j);
                let c = dot(&head[i], &tail[0]);
                axpy(-c, &head[i], &mut tail[0]);
            }
        }
        let norm = dot(&block[j], &block[j]).sqrt();
        block[j].par_iter_mut().for_each(|v| *v /= norm);
    }
}

/// Smallest eigenvalue of the grid operator by block inverse iteration with
/// Rayleigh–Ritz acceleration.
pub fn principal_eigenvalue(problem: &GridProblem, options: &EigenOptions) -> Result<EigenResult, SpectrumError> {
    let n = problem.len();
    if n == 0 {
        return Err(SpectrumError::InvalidGrid("no nodes inside the ball".into()));
    }
    let b = options.block_size.clamp(1, n);
    // Start from the positive bump plus deterministic oscillating modes.
    let mut block: Vec<Vec<f64>> = (0..b)
        .map(|j| {
            (0..n)
                .map(|i| {
                    let x = problem.position(i);
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt() / problem.radius;
                    let bump = (0.5 * std::f64::consts::PI * r).cos();
                    let wave: f64 = x.iter().enumerate().map(|(k, v)| ((j + k + 1) as f64 * v / problem.radius * 2.3 + k as f64).sin()).sum();
                    if j == 0 { bump } else { bump * wave }
                })
                .collect()
        })
        .collect();
    orthonormalize(&mut block);
    let mut theta: Vec<f64> = block.iter().map(|x| problem.rayleigh_quotient(x)).collect();
    let mut residual = f64::INFINITY;
    let mut cg_total = 0;
    let mut iterations = 0;
    let mut ax = vec![vec![0.0; n]; b];

    while iterations < options.max_iterations {
        iterations += 1;
        let cg_tol = (1e-3 * residual).clamp(1e-14, 1e-6);
        let solved: Vec<(Vec<f64>, usize)> = block
            .iter()
            .zip(&theta)
            .map(|(x, &t)| {
                let mut y: Vec<f64> = x.iter().map(|v| v / t.max(1e-300)).collect();
                let its = cg(problem, x, &mut y, cg_tol, 20 * n + 1000);
                (y, its)
            })
            .collect();
        cg_total += solved.iter().map(|s| s.1).sum::<usize>();
        let mut ys: Vec<Vec<f64>> = solved.into_iter().map(|s| s.0).collect();
        orthonormalize(&mut ys);
        let mut ay = vec![vec![0.0; n]; b];
        for (y, a) in ys.iter().zip(ay.iter_mut()) {
            problem.apply(y, a);
        }
        let h = DMatrix::from_fn(b, b, |i, j| 0.5 * (dot(&ys[i], &ay[j]) + dot(&ys[j], &ay[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        for (slot, &k) in order.iter().enumerate() {
            let coeffs: Vec<f64> = (0..b).map(|i| eig.eigenvectors[(i, k)]).collect();
            block[slot] = (0..n).into_par_iter().map(|p| (0..b).map(|i| coeffs[i] * ys[i][p]).sum()).collect();
            ax[slot] = (0..n).into_par_iter().map(|p| (0..b).map(|i| coeffs[i] * ay[i][p]).sum()).collect();
            theta[slot] = eig.eigenvalues[k];
        }
        let r: Vec<f64> = ax[0].iter().zip(&block[0]).map(|(a, x)| a - theta[0] * x).collect();
        residual = dot(&r, &r).sqrt() / dot(&block[0], &block[0]).sqrt();
        if residual <= options.tolerance {
            break;
        }
    }
    if residual > options.tolerance {
        return Err(SpectrumError::NotConverged { iterations, residual });
    }
    let mut v = std::mem::take(&mut block[0]);
    if pairwise_sum(&v) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let norm = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -options.perron_tolerance * max {
        return Err(SpectrumError::NotPerron { ratio: min / max });
    }
    Ok(EigenResult { lambda: theta[0], residual, iterations, cg_iterations: cg_total, eigenvector: v })
}

/// `(e^{−tA} 1)(0)` for each `t` in `times`: the survival function of the
/// grid walk killed at rate `V` and on leaving the ball. Crank–Nicolson with
/// step `tau`, each step solved by conjugate gradients.
pub fn grid_survival(problem: &GridProblem, times: &[f64], tau: f64) -> Result<Vec<f64>, SpectrumError> {
    if !(tau > 0.0) || times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| *t < 0.0) {
        return Err(SpectrumError::InvalidGrid("times must be non-negative and sorted, tau positive".into()));
    }
    let origin = (0..problem.len()).find(|&i| problem.cells[i].iter().all(|c| *c == 0)).expect("origin is a node");
    let n = problem.len();
    let mut u = vec![1.0; n];
    let mut au = vec![0.0; n];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        while t < target - 1e-12 {
            let step = tau.min(target - t);
            problem.apply(&u, &mut au);
            let rhs: Vec<f64> = u.iter().zip(&au).map(|(a, b)| a - 0.5 * step * b).collect();
            let system = ScaledOperator { problem, scale: 0.5 * step };
            let mut next = rhs.clone();
            system.solve(&rhs, &mut next);
            u = next;
            t += step;
        }
        out.push(u[origin]);
    }
    Ok(out)
}

/// `I + s·A`.
struct ScaledOperator<'a> {
    problem: &'a GridProblem,
    scale: f64,
}

impl ScaledOperator<'_> {
    fn solve(&self, b: &[f64], y: &mut [f64]) {
        let n = b.len();
        let apply = |x: &[f64], out: &mut [f64]| {
            self.problem.apply(x, out);
            out.iter_mut().zip(x).for_each(|(o, xi)| *o = xi + self.scale * *o);
        };
        let mut ay = vec![0.0; n];
        apply(y, &mut ay);
        let mut r: Vec<f64> = b.iter().zip(&ay).map(|(bi, ai)| bi - ai).collect();
        let b_norm = dot(b, b).sqrt();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut ap = vec![0.0; n];
        for _ in 0..10 * n + 100 {
            if rr.sqrt() <= 1e-14 * b_norm {
                break;
            }
            apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            axpy(alpha, &p, y);
            axpy(-alpha, &ap, &mut r);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        }
    }
}

/// How the grid spacing depends on the radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum HPolicy {
    /// The same spacing for every radius, so the node sets are nested.
    Fixed { h: f64 },
    /// `h = R / nodes_per_radius`.
    PerRadius { nodes_per_radius: f64 },
}

impl HPolicy {
    pub fn spacing(&self, radius: f64) -> f64 {
        match *self {
            HPolicy::Fixed { h } => h,
            HPolicy::PerRadius { nodes_per_radius } => radius / nodes_per_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub env_seed: u64,
    pub radius: f64,
    pub h: f64,
    pub lambda_hat: f64,
    pub residual: f64,
    pub iterations: usize,
}

impl EigenRow {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{:e},{}", self.env_seed, self.radius, self.h, self.lambda_hat, self.residual, self.iterations)
    }
}

pub const EIGEN_CSV_HEADER: &str = "env_seed,R,h,lambda_hat,residual,iters";

pub fn write_csv<W: Write>(mut w: W, rows: &[EigenRow]) -> io::Result<()> {
    writeln!(w, "{EIGEN_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSequence {
    pub env_seed: u64,
    pub rows: Vec<EigenRow>,
    /// Largest increase `λ̂(R_{k+1}) − λ̂(R_k)` along the grid (≤ 0 when monotone).
    pub max_increase: f64,
    /// `L` from fitting `λ̂(R) = L + c/R²` through the last two radii.
    pub extrapolated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub sequences: Vec<EnvSequence>,
    /// `[mean extrapolated limit, mean λ̂(R_max)]`.
    pub interval: (f64, f64),
    /// Standard deviation of `λ̂(R_max)` across environments.
    pub spread: f64,
}

/// `λ̂(R)` over a radius grid for `n_env` environments with seeds derived from `master_seed`.
pub fn lambda_v_limit(spec: &PotentialSpec, radii: &[f64], n_env: usize, master_seed: u64, policy: HPolicy, options: &EigenOptions) -> Result<LimitReport, SpectrumError> {
    if radii.len() < 3 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpectrumError::InvalidGrid("radius grid must be increasing with at least 3 values".into()));
    }
    if n_env == 0 {
        return Err(SpectrumError::InvalidGrid("n_env must be positive".into()));
    }
    let r_max = *radii.last().expect("non-empty");
    let mut sequences = Vec::with_capacity(n_env);
    for e in 0..n_env {
        let seed = if spec.is_random() { environment_seed(master_seed, e as u64) } else { 0 };
        let env = Environment::sample(spec, r_max + 1.0, seed)?;
        let mut rows = Vec::with_capacity(radii.len());
        for &r in radii {
            let h = policy.spacing(r);
            let grid = GridProblem::new(spec.dimension, r, h, &env)?;
            let res = principal_eigenvalue(&grid, options)?;
            rows.push(EigenRow { env_seed: seed, radius: r, h, lambda_hat: res.lambda, residual: res.residual, iterations: res.iterations });
        }
        let max_increase = rows.windows(2).map(|w| w[1].lambda_hat - w[0].lambda_hat).fold(f64::NEG_INFINITY, f64::max);
        let (a, b) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        let (ra, rb) = (a.radius * a.radius, b.radius * b.radius);
        let extrapolated = ((b.lambda_hat * rb - a.lambda_hat * ra) / (rb - ra)).min(b.lambda_hat);
        sequences.push(EnvSequence { env_seed: seed, rows, max_increase, extrapolated });
    }
    let n = sequences.len() as f64;
    let last: Vec<f64> = sequences.iter().map(|s| s.rows.last().expect("rows").lambda_hat).collect();
    let mean_last = pairwise_sum(&last) / n;
    let mean_extrap = pairwise_sum(&sequences.iter().map(|s| s.extrapolated).collect::<Vec<_>>()) / n;
    let spread = if last.len() > 1 { (pairwise_sum(&last.iter().map(|v| (v - mean_last).powi(2)).collect::<Vec<_>>()) / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(LimitReport { sequences, interval: (mean_extrap, mean_last), spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::unit_ball_dirichlet_eigenvalue;

    #[test]
    fn interval_eigenvalue() {
        let g = GridProblem::from_fn(1, 1.0, 1.0 / 256.0, |_| 0.0).unwrap();
        let r = principal_eigenvalue(&g, &EigenOptions::default()).unwrap();
        let exact = unit_ball_dirichlet_eigenvalue(1);
        assert!((r.lambda / exact - 1.0).abs() < 0.005, "{}", r.lambda);
        assert!(r.residual <= 1e-10);
        assert!(r.eigenvector.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn constant_shift_is_exact() {
        let g = GridProblem::from_fn(2, 1.0, 1.0 / 32.0, |_| 0.0).unwrap();
        let a = principal_eigenvalue(&g, &EigenOptions::default()).unwrap();
        let b = principal_eigenvalue(&g.shifted(0.7), &EigenOptions::default()).unwrap();
        assert!((b.lambda - a.lambda - 0.7).abs() < 1e-9);
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(matches!(GridProblem::from_fn(2, 1.0, 0.1, |_| 0.0), Err(SpectrumError::InvalidGrid(_))));
        assert!(matches!(GridProblem::from_fn(2, 1.0, 1.0 / 32.0, |_| -1.0), Err(SpectrumError::BadPotential { .. })));
        assert!(matches!(GridProblem::from_fn(3, 1000.0, 0.01, |_| 0.0), Err(SpectrumError::MemoryBudget { .. })));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &[EigenRow { env_seed: 3, radius: 4.0, h: 0.125, lambda_hat: 0.5, residual: 1e-11, iterations: 7 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "env_seed,R,h,lambda_hat,residual,iters\n3,4,0.125,0.5,1e-11,7\n");
    }
}
