//! Discretized Brownian trajectories with stopping rules, potential
//! integrals and exponential tilting.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::potentials::{Potential, PotentialError};
use crate::rng::PathStreams;
use crate::stats::{pairwise_sum, MeanEstimate, Z99};

/// Largest number of steps a single trajectory may take.
pub const MAX_STEPS: u64 = 1 << 31;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("invalid path configuration: {0}")]
    InvalidConfig(String),
    #[error("potential is not finite ({value}) at time {time} and position {position:?}; evaluation outside the sampled window?")]
    NonFinitePotential { value: f64, time: f64, position: Vec<f64> },
    #[error("horizon needs {steps} steps, more than the budget of {MAX_STEPS}")]
    StepBudget { steps: u64 },
    #[error("{exits} of {paths} trajectories left the sampled window of radius {window}")]
    WindowExit { exits: usize, paths: usize, window: f64 },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Constant drift `h`; empty means zero drift.
    #[serde(default)]
    pub drift: Vec<f64>,
    #[serde(default)]
    pub bridge_correction: bool,
}

impl PathConfig {
    pub fn new(dt: f64, t_max: f64) -> Self {
        Self { dt, t_max, drift: Vec::new(), bridge_correction: false }
    }

    pub fn with_drift(mut self, drift: Vec<f64>) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn violations(&self, dimension: usize) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            v.push(format!("t_max must be positive, got {}", self.t_max));
        }
        if self.dt > self.t_max {
            v.push(format!("dt ({}) exceeds t_max ({})", self.dt, self.t_max));
        }
        if !self.drift.is_empty() && self.drift.len() != dimension {
            v.push(format!("drift has dimension {}, expected {dimension}", self.drift.len()));
        }
        if self.drift.iter().any(|h| !h.is_finite()) {
            v.push("drift must be finite".into());
        }
        v
    }

    pub fn steps(&self) -> u64 {
        (self.t_max / self.dt - 1e-9).ceil().max(1.0) as u64
    }

    fn check(&self, dimension: usize) -> Result<(), PathError> {
        if !(1..=3).contains(&dimension) {
            return Err(PathError::InvalidConfig(format!("dimension must be 1, 2 or 3, got {dimension}")));
        }
        let v = self.violations(dimension);
        if !v.is_empty() {
            return Err(PathError::InvalidConfig(v.join("; ")));
        }
        let steps = self.steps();
        if steps > MAX_STEPS {
            return Err(PathError::StepBudget { steps });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StoppingSpec {
    /// First entrance into the closed ball `B̄(center, radius)`.
    HitBall { center: Vec<f64>, radius: f64 },
    /// First exit from the open ball `B(center, radius)`.
    ExitBall { center: Vec<f64>, radius: f64 },
    Horizon,
}

impl StoppingSpec {
    pub fn hit_unit_ball(center: Vec<f64>) -> Self {
        StoppingSpec::HitBall { center, radius: 1.0 }
    }

    fn check(&self, dimension: usize, start: &[f64]) -> Result<(), PathError> {
        match self {
            StoppingSpec::HitBall { center, radius } | StoppingSpec::ExitBall { center, radius } => {
                if center.len() != dimension {
                    return Err(PathError::InvalidConfig(format!("ball center has dimension {}, expected {dimension}", center.len())));
                }
                if !(*radius > 0.0) {
                    return Err(PathError::InvalidConfig(format!("ball radius must be positive, got {radius}")));
                }
                let dist = distance(start, center);
                match self {
                    StoppingSpec::HitBall { .. } if dist <= *radius => Err(PathError::InvalidConfig(format!("start lies inside the target ball (distance {dist})"))),
                    StoppingSpec::ExitBall { .. } if dist >= *radius => Err(PathError::InvalidConfig(format!("start lies outside the ball to exit (distance {dist})"))),
                    _ => Ok(()),
                }
            }
            StoppingSpec::Horizon => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopEvent {
    Hit,
    Exit,
    Horizon,
    /// The trajectory left the region where the potential is exact.
    WindowExit,
    /// The observer asked to stop.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub event: StopEvent,
    pub stop_time: f64,
    /// `∫₀^τ V(Z_s) ds` by the trapezoid rule on step endpoints (exact for
    /// constant potentials).
    pub integral_v: f64,
    /// `−h·(Z_τ − Z_0) + |h|²τ/2`.
    pub girsanov_log_weight: f64,
    pub endpoint: Vec<f64>,
    pub steps: u64,
}

/// State handed to an observer after every step (and once at time 0).
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub index: u64,
    pub time: f64,
    pub position: &'a [f64],
    pub potential: f64,
    pub integral_v: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Steps whose endpoints are within this many `√dt` of the stopping boundary
/// are refined by bridge sampling.
const REFINE_MARGIN: f64 = 3.0;
/// Refinement halves a step at most this many times.
const REFINE_DEPTH: u32 = 6;

#[derive(Clone, Copy)]
struct Segment {
    t0: f64,
    x0: [f64; 3],
    m0: f64,
    t1: f64,
    x1: [f64; 3],
    m1: f64,
}

/// First crossing of the stopping boundary by the Brownian bridge over `seg`,
/// located by recursive midpoint sampling. At the finest level a crossing
/// between grid points is accepted with probability `exp(−2 m0 m1 / Δt)`.
fn refine<M: Fn(&[f64]) -> f64, R: Rng>(seg: Segment, d: usize, depth: u32, margin: &M, rng: &mut R) -> Option<(f64, [f64; 3])> {
    let span = seg.t1 - seg.t0;
    if seg.m0 <= 0.0 {
        return Some((seg.t0, seg.x0));
    }
    if seg.m1 > REFINE_MARGIN * span.sqrt() && seg.m0 > REFINE_MARGIN * span.sqrt() {
        return None;
    }
    if depth == 0 {
        if seg.m1 <= 0.0 || rng.random::<f64>() < (-2.0 * seg.m0 * seg.m1 / span).exp() {
            return Some((seg.t1, seg.x1));
        }
        return None;
    }
    let tm = 0.5 * (seg.t0 + seg.t1);
    let sd = (0.25 * span).sqrt();
    let mut xm = [0.0; 3];
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        xm[i] = 0.5 * (seg.x0[i] + seg.x1[i]) + sd * z;
    }
    let mm = margin(&xm[..d]);
    let left = Segment { t1: tm, x1: xm, m1: mm, ..seg };
    if let Some(hit) = refine(left, d, depth - 1, margin, rng) {
        return Some(hit);
    }
    refine(Segment { t0: tm, x0: xm, m0: mm, ..seg }, d, depth - 1, margin, rng)
}

/// Simulate one trajectory.
pub fn simulate<P: Potential + ?Sized>(config: &PathConfig, stop: &StoppingSpec, potential: &P, start: &[f64], streams: &mut PathStreams) -> Result<TrajectoryOutcome, PathError> {
    simulate_observed(config, stop, potential, start, streams, |_| true)
}

/// Simulate one trajectory, calling `observer` on every visited state. The
/// observer returns `false` to stop the path with [`StopEvent::Aborted`].
pub fn simulate_observed<P, O>(config: &PathConfig, stop: &StoppingSpec, potential: &P, start: &[f64], streams: &mut PathStreams, mut observer: O) -> Result<TrajectoryOutcome, PathError>
where
    P: Potential + ?Sized,
    O: FnMut(&StepView) -> bool,
{
    let d = start.len();
    config.check(d)?;
    stop.check(d, start)?;

    let mut h = [0.0; 3];
    h[..config.drift.len()].copy_from_slice(&config.drift);
    let h2: f64 = h.iter().map(|v| v * v).sum();
    let window = potential.safe_radius();
    let constant = potential.constant_value();
    let eval = |x: &[f64], t: f64| -> Result<f64, PathError> {
        if let Some(c) = constant {
            return Ok(c);
        }
        let v = potential.value(x);
        if !v.is_finite() {
            return Err(PathError::NonFinitePotential { value: v, time: t, position: x.to_vec() });
        }
        Ok(v)
    };
    let (target, radius, hitting) = match stop {
        StoppingSpec::HitBall { center, radius } => (Some(center.as_slice()), *radius, true),
        StoppingSpec::ExitBall { center, radius } => (Some(center.as_slice()), *radius, false),
        StoppingSpec::Horizon => (None, 0.0, false),
    };
    // Signed distance to the stopping boundary, positive on the side where the path runs.
    let margin = |x: &[f64]| -> f64 {
        match target {
            Some(c) => {
                let r = distance(x, c);
                if hitting { r - radius } else { radius - r }
            }
            None => f64::INFINITY,
        }
    };

    let mut x = [0.0; 3];
    x[..d].copy_from_slice(start);
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm(&x[..d]) > window {
        return Err(PotentialError::TruncationViolation { distance: norm(&x[..d]), window }.into());
    }
    let mut v_prev = eval(&x[..d], 0.0)?;
    let mut integral = 0.0;
    let mut m_prev = margin(&x[..d]);
    let n = config.steps();
    let mut t = 0.0;
    let mut event = StopEvent::Horizon;
    let mut steps = 0;

    if observer(&StepView { index: 0, time: 0.0, position: &x[..d], potential: v_prev, integral_v: 0.0 }) {
        for k in 0..n {
            let dt = if k + 1 == n { config.t_max - (n - 1) as f64 * config.dt } else { config.dt };
            let sd = dt.sqrt();
            let x_prev = x;
            let t_prev = t;
            for i in 0..d {
                let z: f64 = streams.increments.sample(StandardNormal);
                x[i] += h[i] * dt + sd * z;
            }
            t = if k + 1 == n { config.t_max } else { (k + 1) as f64 * config.dt };
            steps = k + 1;
            if norm(&x[..d]) > window {
                event = StopEvent::WindowExit;
                break;
            }
            let m = margin(&x[..d]);
            let crossing = if config.bridge_correction && target.is_some() {
                let near = REFINE_MARGIN * sd;
                if m_prev < near || m < near {
                    let seg = Segment { t0: t_prev, x0: x_prev, m0: m_prev, t1: t, x1: x, m1: m };
                    refine(seg, d, REFINE_DEPTH, &margin, &mut streams.bridge)
                } else {
                    None
                }
            } else if m <= 0.0 {
                Some((t, x))
            } else {
                None
            };
            if let Some((tc, xc)) = crossing {
                let v = eval(&xc[..d], tc)?;
                integral += 0.5 * (tc - t_prev) * (v_prev + v);
                t = tc;
                x = xc;
                event = if hitting { StopEvent::Hit } else { StopEvent::Exit };
                break;
            }
            let v = eval(&x[..d], t)?;
            integral += 0.5 * dt * (v_prev + v);
            v_prev = v;
            m_prev = m;
            if !observer(&StepView { index: k + 1, time: t, position: &x[..d], potential: v, integral_v: integral }) {
                event = StopEvent::Aborted;
                break;
            }
        }
    } else {
        event = StopEvent::Aborted;
    }

    if let Some(c) = constant {
        integral = c * t;
    }
    let shift: f64 = (0..d).map(|i| h[i] * (x[i] - start[i])).sum();
    Ok(TrajectoryOutcome {
        event,
        stop_time: t,
        integral_v: integral,
        girsanov_log_weight: if h2 == 0.0 { 0.0 } else { -shift + 0.5 * h2 * t },
        endpoint: x[..d].to_vec(),
        steps,
    })
}

/// Simulate `n_paths` trajectories from `start` in parallel. Path `i` uses the
/// streams `(master, env, i)`, so the result does not depend on the thread count.
pub fn simulate_many<P: Potential + ?Sized>(
    config: &PathConfig,
    stop: &StoppingSpec,
    potential: &P,
    start: &[f64],
    n_paths: usize,
    master: u64,
    env: u64,
) -> Result<Vec<TrajectoryOutcome>, PathError> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate(config, stop, potential, start, &mut PathStreams::new(master, env, i)))
        .collect()
}

/// Simulate one trajectory and return every visited position, `d` coordinates per step.
pub fn record_trajectory<P: Potential + ?Sized>(config: &PathConfig, stop: &StoppingSpec, potential: &P, start: &[f64], streams: &mut PathStreams) -> Result<(TrajectoryOutcome, Vec<f64>), PathError> {
    let mut points = Vec::new();
    let outcome = simulate_observed(config, stop, potential, start, streams, |s| {
        points.extend_from_slice(s.position);
        true
    })?;
    if outcome.event != StopEvent::Aborted && outcome.steps > 0 && points.len() / start.len() <= outcome.steps as usize {
        points.extend_from_slice(&outcome.endpoint);
    }
    Ok((outcome, points))
}

/// Write positions as little-endian 64-bit floats.
pub fn write_trajectory<W: Write>(mut w: W, points: &[f64]) -> io::Result<()> {
    for p in points {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_trajectory(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
}

/// Aggregate statistics over a batch of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub n_paths: usize,
    pub hits: usize,
    pub exits: usize,
    pub horizon: usize,
    pub window_exits: usize,
    pub aborted: usize,
    pub mean_stop_time: f64,
    pub mean_integral_v: f64,
    pub mean_weight: MeanEstimate,
}

impl OutcomeSummary {
    pub fn from_outcomes(outcomes: &[TrajectoryOutcome]) -> Self {
        let count = |e| outcomes.iter().filter(|o| o.event == e).count();
        let n = outcomes.len().max(1) as f64;
        let times: Vec<f64> = outcomes.iter().map(|o| o.stop_time).collect();
        let integrals: Vec<f64> = outcomes.iter().map(|o| o.integral_v).collect();
        let weights: Vec<f64> = outcomes.iter().map(|o| o.girsanov_log_weight.exp()).collect();
        Self {
            n_paths: outcomes.len(),
            hits: count(StopEvent::Hit),
            exits: count(StopEvent::Exit),
            horizon: count(StopEvent::Horizon),
            window_exits: count(StopEvent::WindowExit),
            aborted: count(StopEvent::Aborted),
            mean_stop_time: pairwise_sum(&times) / n,
            mean_integral_v: pairwise_sum(&integrals) / n,
            mean_weight: MeanEstimate::from_samples(&weights),
        }
    }
}

/// Monte Carlo probability with a 99% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub ci99: (f64, f64),
    pub n_paths: usize,
    pub dt: f64,
}

impl ProbabilityEstimate {
    fn from_samples(xs: &[f64], dt: f64) -> Self {
        let m = MeanEstimate::from_samples(xs);
        Self { value: m.mean, std_error: m.std_error, ci99: (m.mean - Z99 * m.std_error, m.mean + Z99 * m.std_error), n_paths: xs.len(), dt }
    }
}

/// `P_z[sup_{s≤t} |Z_s − (z + (s/t)(x − z))| < ρ]`.
///
/// The deviation `Z_s − (z + s v)` is a Brownian motion with drift `−v`,
/// `v = (x − z)/t`. It is simulated without drift and reweighted by
/// `exp(−v·B_t − |v|²t/2)`, which stays bounded on the event. Exits between
/// grid times are caught by the bridge correction. The default step is
/// `min(ρ²/100, t/100)`; `dt` overrides it.
pub fn tubular_probability(z: &[f64], x: &[f64], t: f64, rho: f64, n_paths: usize, master: u64, dt: Option<f64>) -> Result<ProbabilityEstimate, PathError> {
    if z.len() != x.len() {
        return Err(PathError::InvalidConfig("z and x differ in dimension".into()));
    }
    if !(t > 0.0 && rho > 0.0) {
        return Err(PathError::InvalidConfig(format!("t and rho must be positive, got {t}, {rho}")));
    }
    if n_paths == 0 {
        return Err(PathError::InvalidConfig("n_paths must be positive".into()));
    }
    let d = z.len();
    let dt = dt.unwrap_or((rho * rho / 100.0).min(t / 100.0));
    let v: Vec<f64> = z.iter().zip(x).map(|(a, b)| (b - a) / t).collect();
    let v2: f64 = v.iter().map(|a| a * a).sum();
    let config = PathConfig::new(dt, t).with_bridge(true);
    let stop = StoppingSpec::ExitBall { center: vec![0.0; d], radius: rho };
    let zero = crate::potentials::FnPotential(|_: &[f64]| 0.0);
    let origin = vec![0.0; d];
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let o = simulate(&config, &stop, &zero, &origin, &mut PathStreams::new(master, 0, i))?;
            Ok(if o.event == StopEvent::Horizon {
                let dot: f64 = v.iter().zip(&o.endpoint).map(|(a, b)| a * b).sum();
                (-dot - 0.5 * v2 * t).exp()
            } else {
                0.0
            })
        })
        .collect::<Result<_, PathError>>()?;
    Ok(ProbabilityEstimate::from_samples(&samples, dt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{Environment, FnPotential, PotentialSpec};

    fn zero() -> FnPotential<impl Fn(&[f64]) -> f64 + Sync> {
        FnPotential(|_: &[f64]| 0.0)
    }

    #[test]
    fn zero_potential_horizon() {
        let o = simulate(&PathConfig::new(0.01, 1.0), &StoppingSpec::Horizon, &zero(), &[0.0, 0.0], &mut PathStreams::new(1, 0, 0)).unwrap();
        assert_eq!(o.event, StopEvent::Horizon);
        assert_eq!(o.integral_v, 0.0);
        assert_eq!(o.stop_time, 1.0);
        assert_eq!(o.girsanov_log_weight, 0.0);
        assert_eq!(o.steps, 100);
    }

    #[test]
    fn partial_last_step_lands_on_horizon() {
        let o = simulate(&PathConfig::new(0.3, 1.0), &StoppingSpec::Horizon, &FnPotential(|_: &[f64]| 2.0), &[0.0], &mut PathStreams::new(1, 0, 0)).unwrap();
        assert_eq!(o.steps, 4);
        assert!((o.integral_v - 2.0).abs() < 1e-12);
        assert_eq!(o.stop_time, 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let p = zero();
        let mut s = PathStreams::new(1, 0, 0);
        assert!(simulate(&PathConfig::new(2.0, 1.0), &StoppingSpec::Horizon, &p, &[0.0], &mut s).is_err());
        assert!(simulate(&PathConfig::new(0.1, 1.0), &StoppingSpec::hit_unit_ball(vec![0.5]), &p, &[0.0], &mut s).is_err());
        assert!(simulate(&PathConfig::new(0.1, 1.0).with_drift(vec![1.0, 0.0]), &StoppingSpec::Horizon, &p, &[0.0], &mut s).is_err());
        assert!(matches!(simulate(&PathConfig::new(1e-12, 1e3), &StoppingSpec::Horizon, &p, &[0.0], &mut s), Err(PathError::StepBudget { .. })));
        let v = PathConfig::new(2.0, 1.0).violations(1);
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("dt") && v[0].contains("t_max"));
    }

    #[test]
    fn non_finite_potential_is_an_error() {
        let p = FnPotential(|x: &[f64]| if x[0] > 0.5 { f64::NAN } else { 0.0 });
        let r = simulate(&PathConfig::new(0.01, 100.0), &StoppingSpec::Horizon, &p, &[0.0], &mut PathStreams::new(1, 0, 0));
        assert!(matches!(r, Err(PathError::NonFinitePotential { .. })));
    }

    #[test]
    fn window_exit_is_reported() {
        let env = Environment::sample(&PotentialSpec::lacoin(1, 2.0, 2.0), 2.0, 4).unwrap();
        let o = simulate(&PathConfig::new(0.01, 1e3), &StoppingSpec::Horizon, &env, &[0.0], &mut PathStreams::new(1, 0, 0)).unwrap();
        assert_eq!(o.event, StopEvent::WindowExit);
        assert!(o.stop_time < 1e3);
    }

    #[test]
    fn endpoint_moments() {
        let h = [0.3, -0.2];
        let config = PathConfig::new(0.01, 2.0).with_drift(h.to_vec());
        let out = simulate_many(&config, &StoppingSpec::Horizon, &zero(), &[0.0, 0.0], 100_000, 3, 0).unwrap();
        for i in 0..2 {
            let xs: Vec<f64> = out.iter().map(|o| o.endpoint[i]).collect();
            assert!(MeanEstimate::from_samples(&xs).within(h[i] * 2.0, 3.0));
            let (var, se) = crate::stats::variance_with_se(&xs);
            assert!((var - 2.0).abs() < 3.0 * se, "{var} ± {se}");
        }
        let summary = OutcomeSummary::from_outcomes(&out);
        assert_eq!(summary.horizon, 100_000);
        assert!(summary.mean_weight.within(1.0, 3.0), "{:?}", summary.mean_weight);
        let json = serde_json::to_string(&summary).unwrap();
        assert!(json.contains("\"horizon\":100000"));
    }

    #[test]
    fn tilted_functional_matches_driftless() {
        let f = |o: &TrajectoryOutcome| (-(o.endpoint[0] - 0.5).powi(2)).exp() * (o.stop_time / 3.0);
        let stop = StoppingSpec::ExitBall { center: vec![0.0], radius: 1.5 };
        let plain = simulate_many(&PathConfig::new(0.01, 3.0), &stop, &zero(), &[0.0], 40_000, 5, 0).unwrap();
        let tilted = simulate_many(&PathConfig::new(0.01, 3.0).with_drift(vec![0.4]), &stop, &zero(), &[0.0], 40_000, 6, 0).unwrap();
        let a = MeanEstimate::from_samples(&plain.iter().map(f).collect::<Vec<_>>());
        let b = MeanEstimate::from_samples(&tilted.iter().map(|o| f(o) * o.girsanov_log_weight.exp()).collect::<Vec<_>>());
        let joint = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 3.0 * joint, "{a:?} {b:?}");
    }

    #[test]
    fn bridge_correction_only_adds_hits() {
        let stop = StoppingSpec::hit_unit_ball(vec![2.0, 0.0]);
        let base = PathConfig::new(0.05, 5.0);
        for i in 0..2000 {
            let a = simulate(&base, &stop, &zero(), &[0.0, 0.0], &mut PathStreams::new(9, 0, i)).unwrap();
            let b = simulate(&base.clone().with_bridge(true), &stop, &zero(), &[0.0, 0.0], &mut PathStreams::new(9, 0, i)).unwrap();
            if a.event == StopEvent::Hit {
                assert_eq!(b.event, StopEvent::Hit);
                assert!(b.stop_time <= a.stop_time);
            }
        }
    }

    #[test]
    fn trajectory_dump_round_trips() {
        let (o, pts) = record_trajectory(&PathConfig::new(0.1, 1.0), &StoppingSpec::Horizon, &zero(), &[0.0, 1.0], &mut PathStreams::new(2, 0, 0)).unwrap();
        assert_eq!(pts.len(), 2 * 11);
        assert_eq!(&pts[20..], o.endpoint.as_slice());
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &pts).unwrap();
        assert_eq!(buf.len(), 8 * 22);
        assert_eq!(read_trajectory(&buf), pts);
    }

    #[test]
    fn tube_around_a_point_is_certain_for_short_times() {
        let p = tubular_probability(&[0.0, 0.0], &[0.0, 0.0], 1e-3, 1.0, 1000, 1, None).unwrap();
        assert_eq!(p.value, 1.0);
    }
}
