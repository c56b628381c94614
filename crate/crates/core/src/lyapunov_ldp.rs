//! Lyapunov exponents `α_λ(x)` from the hitting functionals, the shape
//! diagnostic, the rate function `I(x) = sup_λ(α_λ(x) − λ) − V̲`, the dual
//! norm `α*_λ` and the ballistic/sub-ballistic phase of drifted motion.
//!
//! Everything runs on the shifted potential `Ṽ = V − V̲` with `V̲` the
//! essential infimum of the family, so the `λ` grids here start at 0.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feynman_kac::{endpoint_in_ball, halton_ball, hitting_profile, survival, FkConfig, FunctionalEstimate, HittingProfile};
use crate::paths::PathError;
use crate::potentials::{Environment, Potential, PotentialError, PotentialSpec};
use crate::quad::unit_ball_dirichlet_eigenvalue;
use crate::rng::{environment_seed, mix64};
use crate::stats::{bootstrap_mean_se, concave_nondecreasing_projection, isotonic_decreasing, MeanEstimate, Z95};

pub const DEFAULT_LAMBDAS: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
pub const ALPHA_CSV_HEADER: &str = "lambda,scale,direction_index,a_over_r,stderr,n_env,n_paths";

#[derive(Debug, Error)]
pub enum LyapunovError {
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

type Result<T> = std::result::Result<T, LyapunovError>;

/// Drift speed toward the target for each hitting simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum TiltRule {
    /// `max(√(2λ), floor)`.
    Default { floor: f64 },
    Speed { speed: f64 },
    /// `max(√(2λ), floor)` at the first scale, then the per-unit-length
    /// estimate of the previous scale.
    Adaptive { floor: f64 },
}

impl TiltRule {
    fn initial(&self, mu: f64) -> f64 {
        match self {
            TiltRule::Default { floor } | TiltRule::Adaptive { floor } => (2.0 * mu).sqrt().max(*floor),
            TiltRule::Speed { speed } => *speed,
        }
    }

    fn next(&self, mu: f64, previous: f64) -> f64 {
        match self {
            TiltRule::Adaptive { floor } if previous.is_finite() => previous.max(*floor),
            _ => self.initial(mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSettings {
    /// Grid on the shifted potential.
    pub lambdas: Vec<f64>,
    pub scales: Vec<f64>,
    pub n_env: usize,
    pub n_paths: usize,
    /// Step, minimum horizon and master seed.
    pub fk: FkConfig,
    pub tilt: TiltRule,
    /// Horizon `max(fk.t_max, horizon_factor · distance / speed)`; `fk.t_max`
    /// for speed 0, which is exact for constant potentials with completion.
    pub horizon_factor: f64,
    /// Environments are sampled on `B(0, r_k·|x| + window_margin)`.
    pub window_margin: f64,
    pub bootstrap: usize,
}

impl AlphaSettings {
    pub fn new(n_env: usize, n_paths: usize, fk: FkConfig) -> Self {
        Self {
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            scales: vec![8.0, 16.0, 32.0],
            n_env,
            n_paths,
            fk,
            tilt: TiltRule::Adaptive { floor: 0.5 },
            horizon_factor: 4.0,
            window_margin: 8.0,
            bootstrap: 200,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.scales.len() < 3 {
            out.push(format!("at least 3 scales are needed, got {}", self.scales.len()));
        }
        if self.scales.iter().any(|r| !(*r > 0.0)) || self.scales.windows(2).any(|w| w[1] <= w[0]) {
            out.push("scales must be positive and strictly increasing".into());
        }
        if self.lambdas.is_empty() {
            out.push("lambda grid is empty".into());
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) || self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            out.push("lambda grid must be finite, non-negative and strictly increasing".into());
        }
        if self.n_env == 0 {
            out.push("n_env must be at least 1".into());
        }
        if self.n_paths == 0 {
            out.push("n_paths must be at least 1".into());
        }
        if self.bootstrap == 0 {
            out.push("bootstrap must be at least 1".into());
        }
        if !(self.horizon_factor > 0.0) {
            out.push(format!("horizon_factor must be positive, got {}", self.horizon_factor));
        }
        if !(self.window_margin >= 0.0) {
            out.push(format!("window_margin must be non-negative, got {}", self.window_margin));
        }
        let speed_ok = match &self.tilt {
            TiltRule::Default { floor } | TiltRule::Adaptive { floor } => *floor >= 0.0,
            TiltRule::Speed { speed } => *speed >= 0.0,
        };
        if !speed_ok {
            out.push("tilt speeds must be non-negative".into());
        }
        if !(self.fk.dt > 0.0) {
            out.push(format!("dt must be positive, got {}", self.fk.dt));
        }
        out
    }

    fn check(&self) -> Result<()> {
        match self.violations().as_slice() {
            [] => Ok(()),
            v => Err(LyapunovError::InvalidSettings(v.join("; "))),
        }
    }
}

/// Equiangular directions in d = 2, the 26 normalized cube directions in d = 3, `±e₁` in d = 1.
pub fn direction_grid(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 8.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(26);
            for i in -1i32..=1 {
                for j in -1i32..=1 {
                    for k in -1i32..=1 {
                        if (i, j, k) == (0, 0, 0) {
                            continue;
                        }
                        let n = ((i * i + j * j + k * k) as f64).sqrt();
                        out.push(vec![i as f64 / n, j as f64 / n, k as f64 / n]);
                    }
                }
            }
            out
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sample_environments(spec: &PotentialSpec, n_env: usize, window: f64, master: u64) -> Result<Vec<Environment>> {
    (0..n_env as u64).map(|i| Ok(Environment::sample(spec, window, environment_seed(master, i))?)).collect()
}

/// `â(0, r·x)/r` averaged over environments for one `(λ, r, direction)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCell {
    pub lambda: f64,
    pub scale: f64,
    pub direction_index: usize,
    pub a_over_r: f64,
    pub std_error: f64,
    pub n_env: usize,
    pub n_paths: usize,
    pub tilt_speed: f64,
    pub per_env: Vec<f64>,
    /// Environments in which no path contributed.
    pub censored_envs: usize,
    pub window_exits: usize,
}

impl AlphaCell {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{},{},{}", self.lambda, self.scale, self.direction_index, self.a_over_r, self.std_error, self.n_env, self.n_paths)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub lambda: f64,
    /// `â/r` at the largest scale.
    pub alpha: f64,
    /// Environment bootstrap standard error (path error when `n_env = 1`).
    pub std_error: f64,
    pub ci: f64,
    pub cells: Vec<AlphaCell>,
    /// Weighted non-increasing fit of the per-scale means.
    pub monotone_fit: Vec<f64>,
    /// An increase across scales beyond `3·SE + 2α̂(u)/r`, the slack from
    /// the unit target ball. Points at too few paths or a poor tilt.
    pub monotone_violation: bool,
    pub censored: bool,
}

/// Environments, settings and stream bookkeeping shared by the estimators.
struct Lab<'a> {
    envs: Vec<Environment>,
    settings: &'a AlphaSettings,
    floor: f64,
}

impl<'a> Lab<'a> {
    fn new(spec: &PotentialSpec, settings: &'a AlphaSettings, reach: f64) -> Result<Self> {
        settings.check()?;
        spec.validate()?;
        let window = settings.scales.last().unwrap() * reach + settings.window_margin;
        let envs = sample_environments(spec, settings.n_env, window, settings.fk.master_seed)?;
        Ok(Self { envs, settings, floor: spec.essential_infimum() })
    }

    fn profile(&self, env: &Environment, target: &[f64], speed: f64, stream: u64) -> Result<HittingProfile> {
        let dist = norm(target);
        if dist <= 1.0 {
            return Err(LyapunovError::InvalidSettings(format!("target at distance {dist} lies in the unit ball")));
        }
        let drift: Vec<f64> = target.iter().map(|v| speed * v / dist).collect();
        let mut cfg = self.settings.fk.clone().with_stream(stream);
        if speed > 0.0 {
            cfg.t_max = cfg.t_max.max(self.settings.horizon_factor * dist / speed);
        }
        let origin = vec![0.0; target.len()];
        Ok(hitting_profile(env, &origin, target, self.settings.n_paths, drift, &cfg)?)
    }

    fn stream(&self, scale_index: usize, direction_index: usize, lane: u64) -> u64 {
        mix64(self.settings.fk.stream ^ mix64(lane << 48 | (scale_index as u64) << 24 | direction_index as u64))
    }

    fn cell(&self, x: &[f64], direction_index: usize, mu: f64, scale_index: usize, speed: f64) -> Result<AlphaCell> {
        let r = self.settings.scales[scale_index];
        let target: Vec<f64> = x.iter().map(|v| v * r).collect();
        let stream = self.stream(scale_index, direction_index, 0);
        let mut per_env = Vec::with_capacity(self.envs.len());
        let mut path_se = Vec::with_capacity(self.envs.len());
        let (mut censored_envs, mut window_exits) = (0, 0);
        for env in &self.envs {
            let est = self.profile(env, &target, speed, stream)?.estimate(mu - self.floor)?;
            censored_envs += est.upper_bound_only as usize;
            window_exits += est.window_exits;
            per_env.push(-est.log_value / r);
            path_se.push(if est.relative_error.is_finite() { est.relative_error / r } else { 0.0 });
        }
        let m = MeanEstimate::from_samples(&per_env);
        let std_error = if per_env.len() > 1 { m.std_error } else { path_se[0] };
        Ok(AlphaCell {
            lambda: mu,
            scale: r,
            direction_index,
            a_over_r: m.mean,
            std_error,
            n_env: self.envs.len(),
            n_paths: self.settings.n_paths,
            tilt_speed: speed,
            per_env,
            censored_envs,
            window_exits,
        })
    }

    fn alpha(&self, x: &[f64], direction_index: usize, mu: f64) -> Result<AlphaEstimate> {
        let magnitude = norm(x);
        let mut cells: Vec<AlphaCell> = Vec::with_capacity(self.settings.scales.len());
        for k in 0..self.settings.scales.len() {
            let speed = match cells.last() {
                Some(c) => self.settings.tilt.next(mu, c.a_over_r / magnitude),
                None => self.settings.tilt.initial(mu),
            };
            cells.push(self.cell(x, direction_index, mu, k, speed)?);
        }
        let last = cells.last().unwrap();
        let std_error = if last.per_env.len() > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(mix64(self.settings.fk.master_seed ^ mu.to_bits() ^ (direction_index as u64).rotate_left(32)));
            bootstrap_mean_se(&last.per_env, self.settings.bootstrap, &mut rng)
        } else {
            last.std_error
        };
        let means: Vec<f64> = cells.iter().map(|c| c.a_over_r).collect();
        let weights: Vec<f64> = cells.iter().map(|c| 1.0 / c.std_error.max(1e-12).powi(2)).collect();
        let monotone_fit = isotonic_decreasing(&means, &weights);
        let monotone_violation = cells.windows(2).any(|w| {
            let joint = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            w[1].a_over_r > w[0].a_over_r + 3.0 * joint + 2.0 * w[1].a_over_r / magnitude / w[0].scale
        });
        Ok(AlphaEstimate {
            lambda: mu,
            alpha: last.a_over_r,
            std_error,
            ci: Z95 * std_error,
            censored: cells.iter().any(|c| c.censored_envs > 0),
            cells,
            monotone_fit,
            monotone_violation,
        })
    }
}

/// `α̂_λ(x)` for one `λ` (on the shifted potential) from the scale ladder in `settings`.
pub fn estimate_alpha(spec: &PotentialSpec, x: &[f64], lambda: f64, settings: &AlphaSettings) -> Result<AlphaEstimate> {
    check_point(spec, x)?;
    let lab = Lab::new(spec, settings, norm(x))?;
    lab.alpha(x, 0, lambda)
}

fn check_point(spec: &PotentialSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dimension {
        return Err(LyapunovError::InvalidSettings(format!("point has dimension {}, potential has {}", x.len(), spec.dimension)));
    }
    if !(norm(x) > 0.0) {
        return Err(LyapunovError::InvalidSettings("x must be non-zero".into()));
    }
    Ok(())
}

/// `λ ↦ α̂_λ(x)` over a grid, for `x = magnitude·direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCurve {
    pub direction: Vec<f64>,
    pub magnitude: f64,
    pub direction_index: usize,
    /// `V̲`; the grid is on the shifted potential.
    pub floor: f64,
    pub estimates: Vec<AlphaEstimate>,
}

/// Weighted concave non-decreasing projection of an `α̂` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub values: Vec<f64>,
    /// Largest change made by the projection.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveChecks {
    pub non_decreasing: bool,
    pub concave: bool,
    pub projection_distance: f64,
    pub median_ci: f64,
    /// Slope at the largest `λ` is below the slope at the smallest.
    pub flattening: bool,
}

impl LyapunovCurve {
    /// A curve from known values, for example a closed form.
    pub fn from_values(direction: Vec<f64>, magnitude: f64, direction_index: usize, lambdas: &[f64], alphas: &[f64], std_errors: &[f64]) -> Self {
        let estimates = lambdas
            .iter()
            .zip(alphas)
            .zip(std_errors)
            .map(|((&lambda, &alpha), &se)| AlphaEstimate {
                lambda,
                alpha,
                std_error: se,
                ci: Z95 * se,
                cells: Vec::new(),
                monotone_fit: Vec::new(),
                monotone_violation: false,
                censored: false,
            })
            .collect();
        Self { direction, magnitude, direction_index, floor: 0.0, estimates }
    }

    pub fn point(&self) -> Vec<f64> {
        self.direction.iter().map(|u| u * self.magnitude).collect()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.lambda).collect()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.alpha).collect()
    }

    pub fn projection(&self) -> Projection {
        let ws: Vec<f64> = self.estimates.iter().map(|e| 1.0 / e.std_error.max(1e-9).powi(2)).collect();
        let raw = self.alphas();
        let values = concave_nondecreasing_projection(&self.lambdas(), &raw, &ws);
        let distance = values.iter().zip(&raw).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Projection { values, distance }
    }

    /// Piecewise-linear interpolant of the projection; `None` off the grid.
    pub fn interpolate(&self, lambda: f64) -> Option<f64> {
        interpolate(&self.lambdas(), &self.projection().values, lambda)
    }

    fn interpolate_se(&self, lambda: f64) -> Option<f64> {
        let ses: Vec<f64> = self.estimates.iter().map(|e| e.std_error).collect();
        interpolate(&self.lambdas(), &ses, lambda)
    }

    pub fn checks(&self) -> CurveChecks {
        let e = &self.estimates;
        let mu = self.lambdas();
        let non_decreasing = e.windows(2).all(|w| {
            let joint = Z95 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
            w[1].alpha >= w[0].alpha - joint
        });
        let concave = (0..e.len().saturating_sub(2)).all(|i| {
            let q = (mu[i + 2] - mu[i + 1]) / (mu[i + 1] - mu[i]);
            let second = e[i + 2].alpha - e[i + 1].alpha - q * (e[i + 1].alpha - e[i].alpha);
            let se = (e[i + 2].std_error.powi(2) + ((1.0 + q) * e[i + 1].std_error).powi(2) + (q * e[i].std_error).powi(2)).sqrt();
            second <= 3.0 * Z95 * se
        });
        let mut cis: Vec<f64> = e.iter().map(|x| x.ci).collect();
        cis.sort_by(f64::total_cmp);
        let median_ci = if cis.is_empty() { 0.0 } else { cis[cis.len() / 2] };
        let n = e.len();
        let flattening = n >= 3 && {
            let first = (e[1].alpha - e[0].alpha) / (mu[1] - mu[0]);
            let last = (e[n - 1].alpha - e[n - 2].alpha) / (mu[n - 1] - mu[n - 2]);
            last < first
        };
        CurveChecks { non_decreasing, concave, projection_distance: self.projection().distance, median_ci, flattening }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x < xs[0] || x > *xs.last().unwrap() {
        return None;
    }
    if xs.len() == 1 {
        return Some(ys[0]);
    }
    let i = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let s = (x - x0) / (x1 - x0);
    Some(ys[i - 1] + s * (ys[i] - ys[i - 1]))
}

/// Curves for several points `x`, all on the same environments and common
/// random numbers across `λ`.
pub fn lyapunov_curves(spec: &PotentialSpec, points: &[Vec<f64>], settings: &AlphaSettings) -> Result<Vec<LyapunovCurve>> {
    for x in points {
        check_point(spec, x)?;
    }
    let reach = points.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let lab = Lab::new(spec, settings, reach)?;
    points
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let magnitude = norm(x);
            let estimates = settings.lambdas.iter().map(|&mu| lab.alpha(x, j, mu)).collect::<Result<Vec<_>>>()?;
            Ok(LyapunovCurve { direction: x.iter().map(|v| v / magnitude).collect(), magnitude, direction_index: j, floor: lab.floor, estimates })
        })
        .collect()
}

pub fn lyapunov_curve(spec: &PotentialSpec, x: &[f64], settings: &AlphaSettings) -> Result<LyapunovCurve> {
    Ok(lyapunov_curves(spec, &[x.to_vec()], settings)?.remove(0))
}

pub fn write_alpha_csv<W: Write>(mut w: W, curves: &[LyapunovCurve]) -> io::Result<()> {
    writeln!(w, "{ALPHA_CSV_HEADER}")?;
    for c in curves {
        for e in &c.estimates {
            for cell in &e.cells {
                writeln!(w, "{}", cell.csv_row())?;
            }
        }
    }
    Ok(())
}

/// Largest `|v_j − reference_j|` over directions.
pub fn max_directional_deviation(values: &[f64], reference: &[f64]) -> f64 {
    values.iter().zip(reference).map(|(v, r)| (v - r).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionDeviation {
    pub direction_index: usize,
    /// Largest deviation over environments.
    pub deviation: f64,
    /// 95% interval of that deviation under the null of no deviation.
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeRow {
    pub scale: f64,
    /// Mean over environments of the largest directional deviation.
    pub deviation: f64,
    pub deviation_se: f64,
    pub per_env: Vec<f64>,
    pub per_direction: Vec<DirectionDeviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeReport {
    pub lambda: f64,
    pub rows: Vec<ShapeRow>,
    /// Deviation at the largest scale is below the smallest.
    pub trending_down: bool,
}

/// Per environment `ω` and scale `r`, `max_j |â(0, r u_j, ω)/r − α̂(u_j)|` with
/// `α̂(u_j)` the mean over the other environments at the same scale.
pub fn shape_diagnostic(spec: &PotentialSpec, lambda: f64, directions: &[Vec<f64>], settings: &AlphaSettings) -> Result<ShapeReport> {
    if directions.len() < 8 {
        return Err(LyapunovError::InvalidSettings(format!("at least 8 directions are needed, got {}", directions.len())));
    }
    if settings.n_env < 2 {
        return Err(LyapunovError::InvalidSettings("the shape diagnostic needs at least 2 environments".into()));
    }
    for u in directions {
        check_point(spec, u)?;
        if (norm(u) - 1.0).abs() > 1e-9 {
            return Err(LyapunovError::InvalidSettings("directions must be unit vectors".into()));
        }
    }
    let lab = Lab::new(spec, settings, 1.0)?;
    let n = settings.n_env;
    let mut speeds: Vec<f64> = vec![settings.tilt.initial(lambda); directions.len()];
    let mut rows = Vec::with_capacity(settings.scales.len());
    for k in 0..settings.scales.len() {
        let cells = directions
            .iter()
            .enumerate()
            .map(|(j, u)| lab.cell(u, j, lambda, k, speeds[j]))
            .collect::<Result<Vec<_>>>()?;
        let mut per_env = vec![0.0; n];
        let mut per_direction = Vec::with_capacity(directions.len());
        for (j, c) in cells.iter().enumerate() {
            let total: f64 = c.per_env.iter().sum();
            let sd = c.std_error * (n as f64).sqrt();
            let mut worst = DirectionDeviation { direction_index: j, deviation: 0.0, ci: 0.0 };
            for (i, v) in c.per_env.iter().enumerate() {
                let reference = (total - v) / (n - 1) as f64;
                let dev = (v - reference).abs();
                per_env[i] = f64::max(per_env[i], dev);
                if dev >= worst.deviation {
                    let joint = (sd * sd * (1.0 + 1.0 / (n - 1) as f64)).sqrt();
                    worst = DirectionDeviation { direction_index: j, deviation: dev, ci: Z95 * joint };
                }
            }
            per_direction.push(worst);
            speeds[j] = settings.tilt.next(lambda, c.a_over_r);
        }
        let m = MeanEstimate::from_samples(&per_env);
        rows.push(ShapeRow { scale: settings.scales[k], deviation: m.mean, deviation_se: m.std_error, per_env, per_direction });
    }
    let trending_down = rows.last().unwrap().deviation < rows[0].deviation;
    Ok(ShapeReport { lambda, rows, trending_down })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateVerdicts {
    pub non_negative: bool,
    pub above_lower: bool,
    pub below_upper: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunctionReport {
    pub x: Vec<f64>,
    pub rate: f64,
    pub rate_se: f64,
    /// Maximizing `λ` on the unshifted scale, `≥ −V̲`.
    pub lambda_star: f64,
    /// `|x|²/2`.
    pub lower_bound: f64,
    /// `|x|²/2 + λ_d + Ê sup_{B(0)} Ṽ`, when the expectation is supplied.
    pub upper_bound: Option<f64>,
    pub projection_distance: f64,
    /// The supremum sits at the end of the grid: `rate` is a lower bound.
    pub censored: bool,
    pub verdicts: RateVerdicts,
}

/// `Î(x) = sup_{λ ≥ −V̲}(α̂_λ(x) − λ) − V̲`, by ternary search over the
/// concave projection. On the shifted grid this is `sup_{μ ≥ 0}(α̃_μ − μ)`.
pub fn rate_function(curve: &LyapunovCurve, sup_mean: Option<f64>) -> Result<RateFunctionReport> {
    let mu = curve.lambdas();
    if mu.first() != Some(&0.0) {
        return Err(LyapunovError::InvalidSettings("the lambda grid must start at 0 (λ = −V̲)".into()));
    }
    let proj = curve.projection();
    let objective = |m: f64| interpolate(&mu, &proj.values, m).unwrap() - m;
    let (mut lo, mut hi) = (0.0, *mu.last().unwrap());
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if objective(a) < objective(b) {
            lo = a;
        } else {
            hi = b;
        }
    }
    let mut best = 0.5 * (lo + hi);
    for &m in &mu {
        if objective(m) > objective(best) {
            best = m;
        }
    }
    let mu_max = *mu.last().unwrap();
    let n = mu.len();
    let censored = n < 2 || (best >= mu_max - 1e-9 && proj.values[n - 1] - proj.values[n - 2] >= mu[n - 1] - mu[n - 2]);
    let rate = objective(best);
    let rate_se = curve.interpolate_se(best).unwrap_or(0.0);
    let x = curve.point();
    let x2 = x.iter().map(|v| v * v).sum::<f64>();
    let lower_bound = 0.5 * x2;
    let upper_bound = sup_mean.map(|e| lower_bound + unit_ball_dirichlet_eigenvalue(x.len()) + e);
    let verdicts = RateVerdicts {
        non_negative: rate + 3.0 * rate_se >= 0.0,
        above_lower: rate + 3.0 * rate_se >= lower_bound,
        below_upper: upper_bound.map(|u| rate - 3.0 * rate_se <= u),
    };
    Ok(RateFunctionReport {
        x,
        rate,
        rate_se,
        lambda_star: best - curve.floor,
        lower_bound,
        upper_bound,
        projection_distance: proj.distance,
        censored,
        verdicts,
    })
}

/// Rate function from Monte Carlo curves, doubling the top of the `λ` grid
/// while the supremum sits at its end (at most `max_extensions` times).
pub fn estimate_rate(spec: &PotentialSpec, x: &[f64], settings: &AlphaSettings, sup_mean: Option<f64>, max_extensions: usize) -> Result<(LyapunovCurve, RateFunctionReport)> {
    check_point(spec, x)?;
    let lab = Lab::new(spec, settings, norm(x))?;
    let magnitude = norm(x);
    let estimates = settings.lambdas.iter().map(|&mu| lab.alpha(x, 0, mu)).collect::<Result<Vec<_>>>()?;
    let mut curve = LyapunovCurve { direction: x.iter().map(|v| v / magnitude).collect(), magnitude, direction_index: 0, floor: lab.floor, estimates };
    let mut report = rate_function(&curve, sup_mean)?;
    for _ in 0..max_extensions {
        if !report.censored {
            break;
        }
        let top = curve.estimates.last().unwrap().lambda;
        curve.estimates.push(lab.alpha(x, 0, (2.0 * top).max(1.0))?);
        report = rate_function(&curve, sup_mean)?;
    }
    Ok((curve, report))
}

/// `+∞` arises when `α̂_λ(u) = 0` in a direction with `u·h > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualValue {
    Finite(f64),
    Infinite,
}

impl DualValue {
    pub fn exceeds(self, v: f64) -> bool {
        match self {
            DualValue::Finite(x) => x > v,
            DualValue::Infinite => true,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            DualValue::Finite(x) => Some(x),
            DualValue::Infinite => None,
        }
    }
}

fn dual_from(alphas: &[(Vec<f64>, f64)], h: &[f64]) -> (DualValue, Option<usize>) {
    let mut best = (DualValue::Finite(0.0), None);
    for (j, (u, a)) in alphas.iter().enumerate() {
        let uh: f64 = u.iter().zip(h).map(|(x, y)| x * y).sum();
        if uh <= 0.0 {
            continue;
        }
        if *a <= 0.0 {
            return (DualValue::Infinite, Some(j));
        }
        let v = uh / a;
        if best.0.finite().is_some_and(|b| v > b) {
            best = (DualValue::Finite(v), Some(j));
        }
    }
    best
}

/// `α̂*_λ(h) = max_j (u_j·h)/α̂_λ(u_j)` over the curves' directions, `λ` on the shifted scale.
pub fn dual_norm(curves: &[LyapunovCurve], lambda: f64, h: &[f64]) -> Result<DualValue> {
    Ok(dual_with_argmax(curves, lambda, h)?.0)
}

fn dual_with_argmax(curves: &[LyapunovCurve], lambda: f64, h: &[f64]) -> Result<(DualValue, Option<usize>)> {
    let alphas = curves
        .iter()
        .map(|c| {
            let a = c.interpolate(lambda).ok_or_else(|| LyapunovError::InvalidSettings(format!("lambda {lambda} lies outside the curve grid")))?;
            Ok((c.direction.clone(), a / c.magnitude))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(dual_from(&alphas, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    SubBallistic,
    Ballistic,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensorInterval {
    pub lower: f64,
    /// `None` for `+∞`.
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub h: Vec<f64>,
    /// `α̂*` at `λ = −V̲`.
    pub dual_at_floor: DualValue,
    pub phase: Phase,
    /// Root of `α̂*_λ(h) = 1` on the unshifted scale, when ballistic.
    pub lambda_h: Option<f64>,
    /// Free-energy rate: `λ_h + V̲` when ballistic, 0 when sub-ballistic.
    pub free_energy: Option<f64>,
    pub censoring: Option<CensorInterval>,
}

const BISECTION_TOLERANCE: f64 = 1e-4;

fn bisect<F: FnMut(f64) -> Result<DualValue>>(mut dual: F, mut lo: f64, mut hi: f64) -> Result<f64> {
    while hi - lo > BISECTION_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if dual(mid)?.exceeds(1.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn verdict(h: &[f64], floor: f64, dual_at_floor: DualValue, censored: bool, root: Option<std::result::Result<f64, f64>>) -> PhaseVerdict {
    let mut v = PhaseVerdict { h: h.to_vec(), dual_at_floor, phase: Phase::Undetermined, lambda_h: None, free_energy: None, censoring: None };
    if censored {
        v.censoring = Some(CensorInterval { lower: 0.0, upper: None });
        return v;
    }
    if !dual_at_floor.exceeds(1.0) {
        v.phase = Phase::SubBallistic;
        v.free_energy = Some(0.0);
        return v;
    }
    match root {
        Some(Ok(mu)) => {
            v.phase = Phase::Ballistic;
            v.lambda_h = Some(mu - floor);
            v.free_energy = Some(mu);
        }
        Some(Err(top)) => v.censoring = Some(CensorInterval { lower: top, upper: None }),
        None => {}
    }
    v
}

/// Sub-ballistic iff `α̂*(h) ≤ 1` at `λ = −V̲`; otherwise `λ_h` by bisection
/// on the interpolated curves.
pub fn phase_verdict(curves: &[LyapunovCurve], h: &[f64]) -> Result<PhaseVerdict> {
    let first = curves.first().ok_or_else(|| LyapunovError::InvalidSettings("no curves".into()))?;
    let floor = first.floor;
    let censored = curves.iter().any(|c| c.estimates.first().is_some_and(|e| e.censored));
    let dual_at_floor = dual_norm(curves, 0.0, h)?;
    let top = curves.iter().map(|c| *c.lambdas().last().unwrap()).fold(f64::INFINITY, f64::min);
    let root = if dual_at_floor.exceeds(1.0) && !censored {
        if dual_norm(curves, top, h)?.exceeds(1.0) {
            Some(Err(top))
        } else {
            Some(Ok(bisect(|m| dual_norm(curves, m, h), 0.0, top)?))
        }
    } else {
        None
    };
    Ok(verdict(h, floor, dual_at_floor, censored, root))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub verdict: PhaseVerdict,
    pub floor_curves: Vec<LyapunovCurve>,
    /// Scale at which `λ_h` was bisected.
    pub scale: f64,
}

/// Monte Carlo phase diagram point: the dual at `λ = −V̲` from the scale
/// ladder, then bisection for `λ_h` on one path set per environment and
/// direction at the largest scale, tilted at speed `max(|h|, floor)`, so
/// that every bisection step reuses the same paths.
pub fn estimate_phase(spec: &PotentialSpec, h: &[f64], directions: &[Vec<f64>], settings: &AlphaSettings) -> Result<PhaseReport> {
    if h.len() != spec.dimension {
        return Err(LyapunovError::InvalidSettings("h has the wrong dimension".into()));
    }
    let floor_settings = AlphaSettings { lambdas: vec![0.0], ..settings.clone() };
    let floor_curves = lyapunov_curves(spec, directions, &floor_settings)?;
    let dual_at_floor = dual_norm(&floor_curves, 0.0, h)?;
    let censored = floor_curves.iter().any(|c| c.estimates[0].censored);
    let scale = *settings.scales.last().unwrap();
    let mut root = None;
    if dual_at_floor.exceeds(1.0) && !censored {
        let lab = Lab::new(spec, settings, 1.0)?;
        let speed = settings.tilt.initial(0.0).max(norm(h));
        let active: Vec<(usize, &Vec<f64>)> = directions.iter().enumerate().filter(|(_, u)| u.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() > 0.0).collect();
        let mut profiles = Vec::with_capacity(active.len());
        for &(j, u) in &active {
            let target: Vec<f64> = u.iter().map(|v| v * scale).collect();
            let stream = lab.stream(settings.scales.len() - 1, j, 1);
            let per_env = lab.envs.iter().map(|env| lab.profile(env, &target, speed, stream)).collect::<Result<Vec<_>>>()?;
            profiles.push((u.clone(), norm(u), per_env));
        }
        let dual = |mu: f64| -> Result<DualValue> {
            let alphas = profiles
                .iter()
                .map(|(u, mag, per_env)| {
                    let vals = per_env.iter().map(|p| Ok(-p.estimate(mu - lab.floor)?.log_value / scale / mag)).collect::<Result<Vec<_>>>()?;
                    Ok((u.clone(), MeanEstimate::from_samples(&vals).mean))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(dual_from(&alphas, h).0)
        };
        let mut hi = (0.5 * h.iter().map(|v| v * v).sum::<f64>()).max(0.25);
        let mut doublings = 0;
        while dual(hi)?.exceeds(1.0) && doublings < 16 {
            hi *= 2.0;
            doublings += 1;
        }
        root = Some(if dual(hi)?.exceeds(1.0) { Err(hi) } else { Ok(bisect(dual, 0.0, hi)?) });
    }
    let verdict = verdict(h, spec.essential_infimum(), dual_at_floor, censored, root);
    Ok(PhaseReport { verdict, floor_curves, scale })
}

/// `Ê sup_{B(0,1)} Ṽ`, the supremum taken over `n_points` Halton points of
/// the unit ball and its center.
pub fn sup_unit_ball_mean(spec: &PotentialSpec, n_env: usize, n_points: usize, master: u64) -> Result<MeanEstimate> {
    if n_env == 0 || n_points == 0 {
        return Err(LyapunovError::InvalidSettings("n_env and n_points must be positive".into()));
    }
    let mut points = halton_ball(spec.dimension, n_points);
    points.push(vec![0.0; spec.dimension]);
    let floor = spec.essential_infimum();
    let envs = sample_environments(spec, n_env, 1.0, master)?;
    let sups: Vec<f64> = envs.iter().map(|env| points.iter().map(|p| env.value(p) - floor).fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(MeanEstimate::from_samples(&sups))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointRow {
    pub t: f64,
    /// `(1/t) log Q̂_t(Z_t ∈ tB(v, r))`; `None` when no path ended in the ball.
    pub rate: Option<f64>,
    pub std_error: f64,
    pub hits: usize,
    pub endpoint: FunctionalEstimate,
    pub survival: FunctionalEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointReport {
    pub v: Vec<f64>,
    pub r: f64,
    pub rows: Vec<EndpointRow>,
    /// `−inf_{B(v,r)} Î` when supplied.
    pub reference: Option<f64>,
    /// The gap to the reference shrinks from the first to the last time.
    pub trending: Option<bool>,
}

/// Empirical endpoint rates `(1/t) log Q_{t,ω}(Z_t ∈ tB(v, r))`, with
/// `Q_{t,ω}` the path measure reweighted by `exp(−∫V)/S_t`. Paths are tilted
/// toward the point of `B(v, r)` nearest the origin.
pub fn endpoint_ldp_check(env: &Environment, v: &[f64], r: f64, ts: &[f64], n_paths: usize, cfg: &FkConfig, reference: Option<f64>) -> Result<EndpointReport> {
    if v.len() != env.spec().dimension || ts.is_empty() || ts.iter().any(|t| !(*t > 0.0)) {
        return Err(LyapunovError::InvalidSettings("endpoint check needs a point of the right dimension and positive times".into()));
    }
    let vn = norm(v);
    let drift: Vec<f64> = if vn > r { v.iter().map(|x| x * (vn - r) / vn).collect() } else { vec![0.0; v.len()] };
    let mut rows = Vec::with_capacity(ts.len());
    for (k, &t) in ts.iter().enumerate() {
        let sub = cfg.clone().with_stream(cfg.stream.wrapping_add(k as u64));
        let center: Vec<f64> = v.iter().map(|x| x * t).collect();
        let endpoint = endpoint_in_ball(env, t, &center, r * t, n_paths, drift.clone(), &sub)?;
        let surv = survival(env, t, n_paths, &sub)?;
        let rate = (endpoint.value > 0.0 && surv.value > 0.0).then(|| (endpoint.log_value - surv.log_value) / t);
        let std_error = (endpoint.relative_error.powi(2) + surv.relative_error.powi(2)).sqrt() / t;
        rows.push(EndpointRow { t, rate, std_error, hits: endpoint.hits, endpoint, survival: surv });
    }
    let trending = reference.and_then(|target| {
        let first = rows.first()?.rate?;
        let last = rows.last()?.rate?;
        Some((last - target).abs() <= (first - target).abs())
    });
    Ok(EndpointReport { v: v.to_vec(), r, rows, reference, trending })
}
