//! Sampling and serialization of marked Poisson clouds.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::truncation::{exponential_tail_radius, TruncationPolicy};
use super::{Family, PotentialError, PotentialSpec};
use crate::quad::unit_ball_volume;
use crate::rng::environment_rng;

/// What was left out when sampling a finite piece of an infinite cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudTruncation {
    /// Radius of the ball that contains every sampled center (Lacoin: plus
    /// the mark of that center).
    pub center_radius: f64,
    /// Largest radius sampled (Lacoin only).
    pub mark_cap: Option<f64>,
    /// Lacoin: bound on the expected sup over the window of the omitted
    /// potential. PolyTail: expected omitted potential at the origin.
    pub expected_residual: f64,
    /// Level of the exponential tail rule that picked the PolyTail radius
    /// (zero otherwise). It says nothing about `expected_residual`.
    pub failure_probability: f64,
    pub tail_error: f64,
}

/// A sampled Poisson configuration.
///
/// For Lacoin and PolyTail `centers` holds the points `ω_i`; for Ruess each
/// "center" is a line `(ρ, θ)`. Centers are sorted by `|ω_i|` (Ruess: `|ρ|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub dimension: usize,
    /// Flat coordinates, `dimension` per point.
    pub centers: Vec<f64>,
    pub marks: Option<Vec<f64>>,
    pub window_radius: f64,
    pub seed: u64,
    pub layout: CloudLayout,
    pub truncation: CloudTruncation,
}

/// Whether the rows of a cloud are points in `R^d` or planar lines `(ρ, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudLayout {
    Points,
    Lines,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.centers.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn mark(&self, i: usize) -> Option<f64> {
        self.marks.as_ref().map(|m| m[i])
    }

    /// Number of leading centers with `|ω| ≤ radius` (Ruess: `|ρ| ≤ radius`).
    pub fn prefix_within(&self, radius: f64) -> usize {
        let norm = |i: usize| -> f64 {
            let c = self.center(i);
            if self.layout == CloudLayout::Lines {
                c[0].abs()
            } else {
                c.iter().map(|x| x * x).sum::<f64>().sqrt()
            }
        };
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            if norm(mid) <= radius {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// CSV body with header `x1,..,xd,r`; the `r` column is empty when the
    /// cloud has no marks.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dimension).map(|i| format!("x{i}")).chain(std::iter::once("r".to_string())).collect();
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let coords: Vec<String> = self.center(i).iter().map(|x| format!("{x:?}")).collect();
            let mark = self.mark(i).map(|r| format!("{r:?}")).unwrap_or_default();
            writeln!(w, "{},{}", coords.join(","), mark)?;
        }
        Ok(())
    }

    /// Parse a CSV body written by [`PointCloud::write_csv`]; metadata comes
    /// from the manifest.
    pub fn read_csv<R: BufRead>(r: R, manifest: &CloudManifest) -> Result<Self, PotentialError> {
        let d = manifest.spec.dimension;
        let mut centers = Vec::new();
        let mut marks = Vec::new();
        let mut any_mark = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| PotentialError::Io(e.to_string()))?;
            if lineno == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 1 {
                return Err(PotentialError::Io(format!("line {}: expected {} fields, got {}", lineno + 1, d + 1, fields.len())));
            }
            for f in &fields[..d] {
                centers.push(f.parse::<f64>().map_err(|e| PotentialError::Io(format!("line {}: {e}", lineno + 1)))?);
            }
            if !fields[d].is_empty() {
                any_mark = true;
                marks.push(fields[d].parse::<f64>().map_err(|e| PotentialError::Io(format!("line {}: {e}", lineno + 1)))?);
            }
        }
        Ok(Self {
            dimension: d,
            centers,
            marks: any_mark.then_some(marks),
            window_radius: manifest.window_radius,
            seed: manifest.seed,
            layout: layout_of(&manifest.spec),
            truncation: manifest.truncation,
        })
    }

    pub fn manifest(&self, spec: &PotentialSpec) -> CloudManifest {
        CloudManifest { spec: *spec, window_radius: self.window_radius, seed: self.seed, truncation: self.truncation }
    }
}

/// Sidecar JSON for a cloud CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudManifest {
    #[serde(flatten)]
    pub spec: PotentialSpec,
    pub window_radius: f64,
    pub seed: u64,
    pub truncation: CloudTruncation,
}

/// Knobs for cloud sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    /// Force a Lacoin mark cap instead of deriving one from `residual_tolerance`.
    pub mark_cap: Option<f64>,
    /// Target bound on the expected omitted Lacoin potential.
    pub residual_tolerance: f64,
    /// Upper limit on the expected number of sampled points.
    pub max_expected_points: f64,
    /// Tail error and failure probability for the PolyTail center radius.
    pub polytail_error: f64,
    pub polytail_failure_probability: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            mark_cap: None,
            residual_tolerance: 1e-6,
            max_expected_points: 5e6,
            polytail_error: 1e-3,
            polytail_failure_probability: 1e-6,
        }
    }
}

/// Inverse-CDF draw from `P(r ≥ s) = s^{-δ}`, `s ≥ 1`, given `u ∈ (0, 1]`.
pub fn sample_lacoin_mark(delta: f64, u: f64) -> f64 {
    u.powf(-1.0 / delta)
}

pub fn sample_cloud(spec: &PotentialSpec, window_radius: f64, seed: u64) -> Result<PointCloud, PotentialError> {
    sample_cloud_with(spec, window_radius, seed, &SamplingOptions::default())
}

/// Sample the part of the cloud that can influence `B̄(0, window_radius)`.
///
/// Identical `(spec, window_radius, seed, options)` give identical clouds.
pub fn sample_cloud_with(spec: &PotentialSpec, window_radius: f64, seed: u64, options: &SamplingOptions) -> Result<PointCloud, PotentialError> {
    spec.validate()?;
    if !(window_radius > 0.0 && window_radius.is_finite()) {
        return Err(PotentialError::NonPositiveWindow(window_radius));
    }
    let mut rng = environment_rng(seed);
    let d = spec.dimension;
    let cloud = match spec.family {
        Family::Lacoin { gamma, delta } => sample_lacoin(d, gamma, delta, window_radius, options, &mut rng),
        Family::PolyTail { gamma, c9 } => {
            let policy = TruncationPolicy {
                target_sup_error: options.polytail_error,
                evaluation_radius: window_radius.max(1.0 + 1e-9),
                failure_probability: options.polytail_failure_probability,
            };
            let radius = exponential_tail_radius(&policy, spec)?;
            let mean = unit_ball_volume(d) * radius.powi(d as i32);
            let n = poisson(mean, &mut rng);
            let mut pts: Vec<Vec<f64>> = (0..n).map(|_| uniform_in_ball(d, radius, &mut rng)).collect();
            pts.sort_by(|a, b| norm(a).total_cmp(&norm(b)));
            (
                pts.concat(),
                None,
                CloudTruncation {
                    center_radius: radius,
                    mark_cap: None,
                    expected_residual: polytail_residual(d, gamma, c9, radius),
                    failure_probability: options.polytail_failure_probability,
                    tail_error: options.polytail_error,
                },
            )
        }
        Family::Ruess { nu, width, .. } => {
            // A line (ρ, θ) meets B(0, L') iff |ρ| ≤ L'.
            let reach = window_radius + width;
            let n = poisson(2.0 * nu * reach, &mut rng);
            let mut lines: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(-reach..=reach), rng.random_range(0.0..PI)])
                .collect();
            lines.sort_by(|a, b| a[0].abs().total_cmp(&b[0].abs()));
            (
                lines.concat(),
                None,
                CloudTruncation { center_radius: reach, mark_cap: None, expected_residual: 0.0, failure_probability: 0.0, tail_error: 0.0 },
            )
        }
        Family::Constant { .. } | Family::Zero => return Err(PotentialError::NotRandom(spec.family.name())),
    };
    let (centers, marks, truncation) = cloud;
    Ok(PointCloud { dimension: d, centers, marks, window_radius, seed, layout: layout_of(spec), truncation })
}

fn layout_of(spec: &PotentialSpec) -> CloudLayout {
    match spec.family {
        Family::Ruess { .. } => CloudLayout::Lines,
        _ => CloudLayout::Points,
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn poisson<R: Rng>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let draw: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    draw as usize
}

fn uniform_in_ball<R: Rng>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    if d == 1 {
        return vec![rng.random_range(-radius..=radius)];
    }
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            let u: f64 = rng.random();
            let scale = radius * u.powf(1.0 / d as f64) / n;
            return g.into_iter().map(|x| x * scale).collect();
        }
    }
}

/// Upper bound on the expected omitted potential over `B(0, window)` when
/// marks above `cap ≥ window` are dropped.
fn lacoin_residual(d: usize, gamma: f64, delta: f64, window: f64, cap: f64) -> f64 {
    let excess = gamma + delta - d as f64;
    unit_ball_volume(d) * delta * (1.0 + window / cap).powi(d as i32) * cap.powf(-excess) / excess
}

/// Expected omitted PolyTail potential at the origin when centers beyond
/// `radius ≥ 1` are dropped.
fn polytail_residual(d: usize, gamma: f64, c9: f64, radius: f64) -> f64 {
    c9 * d as f64 * unit_ball_volume(d) * radius.powf(d as f64 - gamma) / (gamma - d as f64)
}

/// Expected number of marked points with `r ≤ cap` whose ball meets the window.
fn lacoin_expected_points(d: usize, delta: f64, window: f64, cap: f64) -> f64 {
    let ld = unit_ball_volume(d);
    crate::quad::integrate(|r| ld * (window + r).powi(d as i32) * delta * r.powf(-delta - 1.0), 1.0, cap.max(1.0), 1e-6, 0.0).unwrap_or(f64::INFINITY)
}

type Sampled = (Vec<f64>, Option<Vec<f64>>, CloudTruncation);

fn sample_lacoin<R: Rng>(d: usize, gamma: f64, delta: f64, window: f64, options: &SamplingOptions, rng: &mut R) -> Sampled {
    let excess = gamma + delta - d as f64;
    let cap = match options.mark_cap {
        Some(c) => c.max(1.0),
        None => {
            let ld = unit_ball_volume(d);
            let solved = (ld * 2f64.powi(d as i32) * delta / (excess * options.residual_tolerance)).powf(1.0 / excess);
            let mut cap = solved.max(window).max(2.0);
            // Keep the sample size bounded; the residual reports what is lost.
            let (mut lo, mut hi) = (1.0f64, cap);
            if lacoin_expected_points(d, delta, window, cap) > options.max_expected_points {
                for _ in 0..60 {
                    let mid = (lo * hi).sqrt();
                    if lacoin_expected_points(d, delta, window, mid) > options.max_expected_points {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                cap = lo;
            }
            cap
        }
    };

    let ld = unit_ball_volume(d);
    let mut points: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let mut lower = 1.0f64;
    // Shell k holds marks in [2^k, 2^{k+1}) ∩ [1, cap].
    while lower < cap {
        let upper = (2.0 * lower).min(cap);
        let (tl, tu) = (lower.powf(-delta), upper.powf(-delta));
        let reach = window + upper;
        let n = poisson(ld * reach.powi(d as i32) * (tl - tu), rng);
        for _ in 0..n {
            let u: f64 = rng.random();
            let r = (tl - u * (tl - tu)).powf(-1.0 / delta);
            let c = uniform_in_ball(d, reach, rng);
            let dist = norm(&c);
            // Keep balls B(c, r) that meet the closed window.
            if dist < window + r {
                points.push((dist, c, r));
            }
        }
        lower = upper;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut centers = Vec::with_capacity(points.len() * d);
    let mut marks = Vec::with_capacity(points.len());
    for (_, c, r) in points {
        centers.extend_from_slice(&c);
        marks.push(r);
    }
    let residual = lacoin_residual(d, gamma, delta, window, cap.max(window));
    let center_radius = window + cap;
    (
        centers,
        Some(marks),
        CloudTruncation { center_radius, mark_cap: Some(cap), expected_residual: residual, failure_probability: 0.0, tail_error: 0.0 },
    )
}
