//! Potential evaluation over a sampled cloud.

use super::cloud::{sample_cloud, PointCloud};
use super::{Family, PotentialError, PotentialSpec};

/// A non-negative field `x ↦ V(x)` that path simulations can query.
///
/// Implementations must be safe for concurrent read-only use. `value` returns
/// a non-finite number outside the region where it is guaranteed exact.
pub trait Potential: Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Radius of the centered ball where `value` is exact.
    fn safe_radius(&self) -> f64 {
        f64::INFINITY
    }

    /// `Some(c)` when the field is the constant `c` everywhere.
    fn constant_value(&self) -> Option<f64> {
        None
    }
}

/// Adapter for closures.
pub struct FnPotential<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Potential for FnPotential<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

#[derive(Debug, Clone)]
enum Evaluator {
    Constant(f64),
    Balls(BallIndex),
    Shots { d: usize, centers: Vec<f64>, gamma: f64, c9: f64 },
    Lines { lines: Vec<[f64; 3]>, width: f64, low: f64, high: f64 },
}

/// One realization `V(·, ω)` ready for evaluation.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: PotentialSpec,
    cloud: Option<PointCloud>,
    evaluator: Evaluator,
    seed: u64,
}

impl Environment {
    /// Sample a fresh environment. Deterministic families ignore the window;
    /// their seed still keys the path streams.
    pub fn sample(spec: &PotentialSpec, window_radius: f64, seed: u64) -> Result<Self, PotentialError> {
        if spec.is_random() {
            Self::new(spec, Some(sample_cloud(spec, window_radius, seed)?))
        } else {
            Ok(Self { seed, ..Self::new(spec, None)? })
        }
    }

    pub fn new(spec: &PotentialSpec, cloud: Option<PointCloud>) -> Result<Self, PotentialError> {
        let n = cloud.as_ref().map_or(0, |c| c.len());
        Self::with_center_cutoff_count(spec, cloud, n)
    }

    /// Evaluate using only the centers with `|ω| ≤ cutoff`.
    pub fn with_center_cutoff(spec: &PotentialSpec, cloud: PointCloud, cutoff: f64) -> Result<Self, PotentialError> {
        let n = cloud.prefix_within(cutoff);
        Self::with_center_cutoff_count(spec, Some(cloud), n)
    }

    fn with_center_cutoff_count(spec: &PotentialSpec, cloud: Option<PointCloud>, n: usize) -> Result<Self, PotentialError> {
        spec.validate()?;
        let evaluator = match (spec.family, cloud.as_ref()) {
            (Family::Zero, _) => Evaluator::Constant(0.0),
            (Family::Constant { c }, _) => Evaluator::Constant(c),
            (Family::Lacoin { gamma, .. }, Some(c)) => Evaluator::Balls(BallIndex::build(c, n, gamma)),
            (Family::PolyTail { gamma, c9 }, Some(c)) => Evaluator::Shots { d: c.dimension, centers: c.centers[..n * c.dimension].to_vec(), gamma, c9 },
            (Family::Ruess { m, big_m, width, .. }, Some(c)) => Evaluator::Lines {
                lines: (0..n)
                    .map(|i| {
                        let l = c.center(i);
                        [l[1].sin(), -l[1].cos(), l[0]]
                    })
                    .collect(),
                width,
                low: m,
                high: big_m,
            },
            (_, None) => return Err(PotentialError::InvalidParameters(format!("family {} needs a point cloud", spec.family.name()))),
        };
        if let Some(c) = &cloud {
            if c.dimension != spec.dimension {
                return Err(PotentialError::InvalidParameters(format!("cloud dimension {} differs from spec dimension {}", c.dimension, spec.dimension)));
            }
        }
        let seed = cloud.as_ref().map_or(0, |c| c.seed);
        Ok(Self { spec: *spec, cloud, evaluator, seed })
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn cloud(&self) -> Option<&PointCloud> {
        self.cloud.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<f64, PotentialError> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let window = self.safe_radius();
        if r > window {
            return Err(PotentialError::TruncationViolation { distance: r, window });
        }
        Ok(self.value(x))
    }
}

impl Potential for Environment {
    fn value(&self, x: &[f64]) -> f64 {
        match &self.evaluator {
            Evaluator::Constant(c) => *c,
            Evaluator::Balls(index) => index.value(x),
            Evaluator::Shots { d, centers, gamma, c9 } => {
                let half = -0.5 * gamma;
                let mut sum = 0.0;
                for c in centers.chunks_exact(*d) {
                    let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    sum += if r2 <= 1.0 { 1.0 } else { r2.powf(half) };
                }
                c9 * sum
            }
            Evaluator::Lines { lines, width, low, high } => {
                let near = lines.iter().any(|l| (x[0] * l[0] + x[1] * l[1] - l[2]).abs() < *width);
                if near { *low } else { *high }
            }
        }
    }

    fn safe_radius(&self) -> f64 {
        self.cloud.as_ref().map_or(f64::INFINITY, |c| c.window_radius)
    }

    fn constant_value(&self) -> Option<f64> {
        match self.evaluator {
            Evaluator::Constant(c) => Some(c),
            _ => None,
        }
    }
}

/// Brute-force evaluation over every center with `|ω| ≤ center_cutoff`.
pub fn direct_sum(spec: &PotentialSpec, cloud: Option<&PointCloud>, x: &[f64], center_cutoff: f64) -> f64 {
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    let norm = |a: &[f64]| a.iter().map(|p| p * p).sum::<f64>().sqrt();
    match spec.family {
        Family::Zero => 0.0,
        Family::Constant { c } => c,
        Family::Lacoin { gamma, .. } => {
            let cloud = cloud.expect("lacoin needs a cloud");
            let marks = cloud.marks.as_ref().expect("lacoin cloud has marks");
            (0..cloud.len())
                .filter(|&i| norm(cloud.center(i)) <= center_cutoff)
                .filter(|&i| dist2(cloud.center(i), x) < marks[i] * marks[i])
                .map(|i| marks[i].powf(-gamma))
                .sum()
        }
        Family::PolyTail { gamma, c9 } => {
            let cloud = cloud.expect("polytail needs a cloud");
            (0..cloud.len())
                .filter(|&i| norm(cloud.center(i)) <= center_cutoff)
                .map(|i| c9 * dist2(cloud.center(i), x).sqrt().powf(-gamma).min(1.0))
                .sum()
        }
        Family::Ruess { m, big_m, width, .. } => {
            let cloud = cloud.expect("ruess needs a cloud");
            let near = (0..cloud.len()).filter(|&i| cloud.center(i)[0].abs() <= center_cutoff).any(|i| {
                let (rho, theta) = (cloud.center(i)[0], cloud.center(i)[1]);
                (x[0] * theta.sin() - x[1] * theta.cos() - rho).abs() < width
            });
            if near { m } else { big_m }
        }
    }
}

/// Uniform grid of unit cells over `[-h, h]^d`, `h = ceil(window)`.
///
/// Each cell stores the summed weight of balls that contain it entirely and
/// the list of balls whose boundary crosses it. Balls that contain the whole
/// grid go into a single constant.
#[derive(Debug, Clone)]
struct BallIndex {
    d: usize,
    half: f64,
    side: usize,
    global: f64,
    base: Vec<f64>,
    offsets: Vec<u32>,
    entries: Vec<u32>,
    centers: Vec<f64>,
    radii2: Vec<f64>,
    weights: Vec<f64>,
}

impl BallIndex {
    fn build(cloud: &PointCloud, n: usize, gamma: f64) -> Self {
        let d = cloud.dimension;
        let half = cloud.window_radius.ceil().max(1.0);
        let side = (2.0 * half) as usize;
        let cells = side.pow(d as u32);
        let marks = cloud.marks.as_ref().expect("lacoin cloud has marks");
        let mut global = 0.0;
        let mut base = vec![0.0; cells];
        let mut pairs: Vec<(u32, u32)> = Vec::new();
        let mut centers = Vec::new();
        let mut radii2 = Vec::new();
        let mut weights = Vec::new();

        for i in 0..n {
            let c = cloud.center(i);
            let r = marks[i];
            let w = r.powf(-gamma);
            let r2 = r * r;
            let far2: f64 = c.iter().map(|&x| (x + half).abs().max((x - half).abs()).powi(2)).sum();
            if far2 < r2 {
                global += w;
                continue;
            }
            let near2: f64 = c.iter().map(|&x| (x.abs() - half).max(0.0).powi(2)).sum();
            if near2 >= r2 {
                continue;
            }
            let ball_id = weights.len() as u32;
            let mut partial_used = false;
            let lo: Vec<usize> = c.iter().map(|&x| ((x - r + half).floor().max(0.0)) as usize).collect();
            let hi: Vec<usize> = c.iter().map(|&x| (((x + r + half).floor()) as isize).clamp(0, side as isize - 1) as usize).collect();
            let mut idx = lo.clone();
            'cells: loop {
                let (mut dmin2, mut dmax2) = (0.0, 0.0);
                let mut flat = 0usize;
                for k in 0..d {
                    let a = idx[k] as f64 - half;
                    let b = a + 1.0;
                    let x = c[k];
                    let gap = (a - x).max(x - b).max(0.0);
                    let reach = (x - a).abs().max((x - b).abs());
                    dmin2 += gap * gap;
                    dmax2 += reach * reach;
                    flat = flat * side + idx[k];
                }
                if dmax2 < r2 {
                    base[flat] += w;
                } else if dmin2 < r2 {
                    pairs.push((flat as u32, ball_id));
                    partial_used = true;
                }
                // Odometer over the bounding box.
                let mut k = d;
                loop {
                    if k == 0 {
                        break 'cells;
                    }
                    k -= 1;
                    if idx[k] < hi[k] {
                        idx[k] += 1;
                        break;
                    }
                    idx[k] = lo[k];
                }
            }
            if partial_used {
                centers.extend_from_slice(c);
                radii2.push(r2);
                weights.push(w);
            }
        }

        let mut offsets = vec![0u32; cells + 1];
        for &(cell, _) in &pairs {
            offsets[cell as usize + 1] += 1;
        }
        for i in 0..cells {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut entries = vec![0u32; pairs.len()];
        for (cell, ball) in pairs {
            entries[cursor[cell as usize] as usize] = ball;
            cursor[cell as usize] += 1;
        }
        Self { d, half, side, global, base, offsets, entries, centers, radii2, weights }
    }

    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        let mut flat = 0usize;
        for &xk in &x[..self.d] {
            let i = (xk + self.half).floor();
            if !(i >= 0.0 && i < self.side as f64) {
                return f64::NAN;
            }
            flat = flat * self.side + i as usize;
        }
        let mut v = self.global + self.base[flat];
        let (s, e) = (self.offsets[flat] as usize, self.offsets[flat + 1] as usize);
        for &b in &self.entries[s..e] {
            let b = b as usize;
            let c = &self.centers[b * self.d..(b + 1) * self.d];
            let r2: f64 = c.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum();
            if r2 < self.radii2[b] {
                v += self.weights[b];
            }
        }
        v
    }
}
