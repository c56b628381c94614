//! Monte Carlo estimators of quenched Feynman–Kac functionals: survival
//! `S_t`, hitting transforms `e_λ`, the metric `d` and the Green function.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::paths::{simulate, simulate_observed, PathConfig, PathError, StopEvent, StoppingSpec, TrajectoryOutcome};
use crate::potentials::{Environment, Potential};
use crate::quad::{ln_bessel_k0, unit_ball_volume};
use crate::rng::{mix64, PathStreams};
use crate::stats::{ols, pairwise_sum, Z95};

/// Settings shared by all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkConfig {
    pub dt: f64,
    /// Horizon for hitting problems; survival uses its own `t`.
    pub t_max: f64,
    pub bridge_correction: bool,
    pub master_seed: u64,
    /// Selects an independent family of path streams.
    #[serde(default)]
    pub stream: u64,
    /// For constant potentials, close the horizon gap with the exact
    /// free-space transform from the position at `t_max`.
    #[serde(default = "default_true")]
    pub horizon_completion: bool,
}

fn default_true() -> bool {
    true
}

impl FkConfig {
    pub fn new(dt: f64, t_max: f64, master_seed: u64) -> Self {
        Self { dt, t_max, bridge_correction: true, master_seed, stream: 0, horizon_completion: true }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    fn path_config(&self, t_max: f64, drift: Vec<f64>) -> PathConfig {
        PathConfig { dt: self.dt.min(t_max), t_max, drift, bridge_correction: self.bridge_correction }
    }

    fn key(&self, env_seed: u64, sub: u64) -> u64 {
        mix64(env_seed ^ mix64(self.stream.wrapping_mul(0x1_0000_0001).wrapping_add(sub)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Survival,
    ELambda,
    Metric,
    Green,
    Endpoint,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::Survival => "survival",
            Quantity::ELambda => "e_lambda",
            Quantity::Metric => "metric",
            Quantity::Green => "green",
            Quantity::Endpoint => "endpoint",
        }
    }
}

/// Exponential tilt used for hitting problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tilt {
    /// Speed `√(2λ)` toward the target.
    Default,
    /// Given speed toward the target.
    Speed(f64),
    Drift(Vec<f64>),
}

impl Tilt {
    fn drift(&self, start: &[f64], target: &[f64], lambda: f64) -> Vec<f64> {
        let toward = |speed: f64| {
            let dist = start.iter().zip(target).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
            start.iter().zip(target).map(|(a, b)| speed * (b - a) / dist).collect()
        };
        match self {
            Tilt::Default => toward((2.0 * lambda.max(0.0)).sqrt()),
            Tilt::Speed(s) => toward(*s),
            Tilt::Drift(h) => h.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalEstimate {
    pub quantity: Quantity,
    /// Target point (`x` for `e_λ`, `g` and `d`; the origin for survival).
    pub point: Vec<f64>,
    /// `λ` for `e_λ`, the time `t` for survival, `λ_floor` for the Green function.
    pub lambda: f64,
    pub value: f64,
    /// `ln(value)`, computed without underflow.
    pub log_value: f64,
    pub std_error: f64,
    /// `std_error / value`.
    pub relative_error: f64,
    pub n_paths: usize,
    pub tilt_drift: Vec<f64>,
    pub environment_seed: u64,
    pub hits: usize,
    pub window_exits: usize,
    /// Paths that reached the horizon without stopping.
    pub censored: usize,
    /// Upper bound on the mass lost to the finite horizon.
    pub neglected_bound: f64,
    /// No path contributed: `value` is 0 and `log_value` is the one-sided
    /// bound `−λ·t_max`.
    pub upper_bound_only: bool,
}

impl FunctionalEstimate {
    /// `−log value`, e.g. `a(0,x)` for an `e_λ` estimate.
    pub fn neg_log(&self) -> f64 {
        -self.log_value
    }

    pub fn csv_row(&self) -> String {
        let mut fields = vec![self.quantity.name().to_string()];
        fields.extend(self.point.iter().map(|v| v.to_string()));
        fields.extend([
            self.lambda.to_string(),
            self.value.to_string(),
            self.log_value.to_string(),
            self.std_error.to_string(),
            self.n_paths.to_string(),
            self.environment_seed.to_string(),
        ]);
        fields.join(",")
    }
}

pub fn csv_header(dimension: usize) -> String {
    let mut fields = vec!["quantity".to_string()];
    fields.extend((1..=dimension).map(|i| format!("x{i}")));
    fields.extend(["lambda", "value", "log_value", "stderr", "n_paths", "env_seed"].map(String::from));
    fields.join(",")
}

pub fn write_csv<W: Write>(mut w: W, rows: &[FunctionalEstimate], header: bool) -> io::Result<()> {
    if header {
        let d = rows.first().map_or(1, |r| r.point.len());
        writeln!(w, "{}", csv_header(d))?;
    }
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Mean of `exp(lw_i)` computed as `exp(m)·mean(exp(lw_i − m))`.
struct LogMean {
    value: f64,
    log_value: f64,
    std_error: f64,
    relative_error: f64,
}

fn log_mean_exp(lws: &[f64]) -> LogMean {
    let n = lws.len() as f64;
    let m = lws.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return LogMean { value: 0.0, log_value: f64::NEG_INFINITY, std_error: 0.0, relative_error: f64::INFINITY };
    }
    let scaled: Vec<f64> = lws.iter().map(|v| (v - m).exp()).collect();
    let mean = pairwise_sum(&scaled) / n;
    let var = if lws.len() > 1 {
        pairwise_sum(&scaled.iter().map(|s| (s - mean) * (s - mean)).collect::<Vec<_>>()) / (n - 1.0)
    } else {
        0.0
    };
    let se = (var / n).sqrt();
    LogMean { value: m.exp() * mean, log_value: m + mean.ln(), std_error: m.exp() * se, relative_error: se / mean }
}

fn check_count(n_paths: usize) -> Result<(), PathError> {
    if n_paths == 0 {
        return Err(PathError::InvalidConfig("n_paths must be positive".into()));
    }
    Ok(())
}

fn window_error(exits: usize, paths: usize, env: &Environment) -> PathError {
    PathError::WindowExit { exits, paths, window: env.safe_radius() }
}

/// `S_t = E_0[exp(−∫₀^t V(Z_s) ds)]`.
pub fn survival(env: &Environment, t: f64, n_paths: usize, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    survival_with(env, t, None, n_paths, cfg)
}

/// Survival of paths that are also killed on leaving `B(0, radius)`.
pub fn survival_in_ball(env: &Environment, t: f64, radius: f64, n_paths: usize, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    survival_with(env, t, Some(radius), n_paths, cfg)
}

fn survival_with(env: &Environment, t: f64, radius: Option<f64>, n_paths: usize, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    check_count(n_paths)?;
    let d = env.spec().dimension;
    let origin = vec![0.0; d];
    let stop = match radius {
        Some(r) => StoppingSpec::ExitBall { center: origin.clone(), radius: r },
        None => StoppingSpec::Horizon,
    };
    let pc = cfg.path_config(t, Vec::new());
    let key = cfg.key(env.seed(), 0);
    let outcomes = run_paths(env, &pc, &stop, &origin, n_paths, cfg.master_seed, key)?;
    let exits = outcomes.iter().filter(|o| o.event == StopEvent::WindowExit).count();
    if exits > 0 {
        return Err(window_error(exits, n_paths, env));
    }
    let lws: Vec<f64> = outcomes.iter().map(|o| if o.event == StopEvent::Horizon { -o.integral_v } else { f64::NEG_INFINITY }).collect();
    let lm = log_mean_exp(&lws);
    Ok(FunctionalEstimate {
        quantity: Quantity::Survival,
        point: origin,
        lambda: t,
        value: lm.value,
        log_value: lm.log_value,
        std_error: lm.std_error,
        relative_error: lm.relative_error,
        n_paths,
        tilt_drift: vec![0.0; d],
        environment_seed: env.seed(),
        hits: outcomes.iter().filter(|o| o.event == StopEvent::Exit).count(),
        window_exits: 0,
        censored: outcomes.iter().filter(|o| o.event == StopEvent::Horizon).count(),
        neglected_bound: 0.0,
        upper_bound_only: lm.value == 0.0,
    })
}

/// `E_0[exp(−∫₀^t V) 1{Z_t ∈ B(center, radius)}]`, sampled under the drift
/// `drift` and reweighted.
pub fn endpoint_in_ball(env: &Environment, t: f64, center: &[f64], radius: f64, n_paths: usize, drift: Vec<f64>, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    check_count(n_paths)?;
    if !(radius > 0.0) {
        return Err(PathError::InvalidConfig(format!("radius must be positive, got {radius}")));
    }
    let d = env.spec().dimension;
    let origin = vec![0.0; d];
    let pc = cfg.path_config(t, drift.clone());
    let key = cfg.key(env.seed(), 0x656e64);
    let outcomes = run_paths(env, &pc, &StoppingSpec::Horizon, &origin, n_paths, cfg.master_seed, key)?;
    let exits = outcomes.iter().filter(|o| o.event == StopEvent::WindowExit).count();
    if exits > 0 {
        return Err(window_error(exits, n_paths, env));
    }
    let inside = |o: &TrajectoryOutcome| o.endpoint.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() < radius * radius;
    let lws: Vec<f64> = outcomes.iter().map(|o| if inside(o) { -o.integral_v + o.girsanov_log_weight } else { f64::NEG_INFINITY }).collect();
    let lm = log_mean_exp(&lws);
    Ok(FunctionalEstimate {
        quantity: Quantity::Endpoint,
        point: center.to_vec(),
        lambda: t,
        value: lm.value,
        log_value: lm.log_value,
        std_error: lm.std_error,
        relative_error: lm.relative_error,
        n_paths,
        tilt_drift: if drift.is_empty() { vec![0.0; d] } else { drift },
        environment_seed: env.seed(),
        hits: outcomes.iter().filter(|o| inside(o)).count(),
        window_exits: 0,
        censored: 0,
        neglected_bound: 0.0,
        upper_bound_only: lm.value == 0.0,
    })
}

fn run_paths(env: &Environment, pc: &PathConfig, stop: &StoppingSpec, start: &[f64], n_paths: usize, master: u64, key: u64) -> Result<Vec<TrajectoryOutcome>, PathError> {
    (0..n_paths as u64).into_par_iter().map(|i| simulate(pc, stop, env, start, &mut PathStreams::new(master, key, i))).collect()
}

/// Least-squares fit of `−log Ŝ_t` against `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub ci95: (f64, f64),
    pub estimates: Vec<FunctionalEstimate>,
}

/// Decay rate of the survival function over a time grid, with an
/// independent path set per time. `radius` kills paths on leaving `B(0, radius)`.
pub fn decay_rate(env: &Environment, ts: &[f64], radius: Option<f64>, n_paths: usize, cfg: &FkConfig) -> Result<DecayFit, PathError> {
    if ts.len() < 4 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PathError::InvalidConfig("decay_rate needs an increasing grid of at least 4 times".into()));
    }
    let mut estimates = Vec::with_capacity(ts.len());
    for (k, &t) in ts.iter().enumerate() {
        let sub = cfg.clone().with_stream(cfg.stream.wrapping_add(1 + k as u64));
        let est = survival_with(env, t, radius, n_paths, &sub)?;
        if est.value <= 0.0 {
            return Err(PathError::InvalidConfig(format!("survival estimate at t = {t} is zero; increase n_paths")));
        }
        estimates.push(est);
    }
    let ys: Vec<f64> = estimates.iter().map(|e| -e.log_value).collect();
    let ses: Vec<f64> = estimates.iter().map(|e| e.relative_error).collect();
    let weighted = ses.iter().all(|s| *s > 0.0);
    let fit = ols(ts, &ys, if weighted { Some(&ses) } else { None });
    Ok(DecayFit { slope: fit.slope, slope_se: fit.slope_se, intercept: fit.intercept, ci95: (fit.slope - Z95 * fit.slope_se, fit.slope + Z95 * fit.slope_se), estimates })
}

/// Exact `E_z[exp(−κ²/2 · H(B̄(y, a)))]` for Brownian motion at distance `r ≥ a`.
pub fn free_hitting_transform(d: usize, kappa: f64, r: f64, a: f64) -> f64 {
    if r <= a {
        return 1.0;
    }
    match d {
        1 => (-kappa * (r - a)).exp(),
        2 => {
            if kappa == 0.0 {
                1.0
            } else {
                (ln_bessel_k0(kappa * r) - ln_bessel_k0(kappa * a)).exp()
            }
        }
        _ => a / r * (-kappa * (r - a)).exp(),
    }
}

/// `e_λ(0, x) = E_0[exp(−∫₀^{H(x)} (λ + V)(Z_s) ds)]`, `H(x)` the hitting time of `B̄(x, 1)`.
pub fn e_lambda(env: &Environment, x: &[f64], lambda: f64, n_paths: usize, tilt: &Tilt, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    e_lambda_from(env, &vec![0.0; x.len()], x, lambda, n_paths, tilt, cfg)
}

/// `e_λ(z, y)` for an arbitrary start `z`.
pub fn e_lambda_from(env: &Environment, start: &[f64], target: &[f64], lambda: f64, n_paths: usize, tilt: &Tilt, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    check_lambda(env, lambda)?;
    let drift = tilt.drift(start, target, lambda);
    hitting_profile(env, start, target, n_paths, drift, cfg)?.estimate(lambda)
}

fn check_lambda(env: &Environment, lambda: f64) -> Result<(), PathError> {
    let floor = env.spec().essential_infimum();
    if !(lambda + floor >= 0.0) {
        return Err(PathError::InvalidConfig(format!("lambda must be at least −inf V = {}, got {lambda}", -floor)));
    }
    Ok(())
}

/// One path set for a hitting problem under a fixed drift. `e_λ` can be
/// evaluated from it at any `λ` on common random numbers, so the estimate of
/// `−log e_λ` is exactly non-decreasing and concave in `λ`.
#[derive(Debug, Clone)]
pub struct HittingProfile {
    pub target: Vec<f64>,
    pub drift: Vec<f64>,
    pub environment_seed: u64,
    pub n_paths: usize,
    pub t_max: f64,
    pub hits: usize,
    pub censored: usize,
    pub window_exits: usize,
    floor: f64,
    constant: Option<f64>,
    dimension: usize,
    /// Per path: stop time, `−∫V + log weight`, and the distance to the
    /// target at the horizon when completion applies.
    times: Vec<f64>,
    weights: Vec<f64>,
    completion: Vec<Option<f64>>,
}

pub fn hitting_profile(env: &Environment, start: &[f64], target: &[f64], n_paths: usize, drift: Vec<f64>, cfg: &FkConfig) -> Result<HittingProfile, PathError> {
    check_count(n_paths)?;
    if start.len() != target.len() {
        return Err(PathError::InvalidConfig("start and target dimensions differ".into()));
    }
    let pc = cfg.path_config(cfg.t_max, drift.clone());
    let stop = StoppingSpec::hit_unit_ball(target.to_vec());
    let key = cfg.key(env.seed(), 0);
    let outcomes = run_paths(env, &pc, &stop, start, n_paths, cfg.master_seed, key)?;
    let constant = env.constant_value().filter(|_| cfg.horizon_completion);
    let mut profile = HittingProfile {
        target: target.to_vec(),
        drift: if drift.is_empty() { vec![0.0; start.len()] } else { drift },
        environment_seed: env.seed(),
        n_paths,
        t_max: cfg.t_max,
        hits: 0,
        censored: 0,
        window_exits: 0,
        floor: env.spec().essential_infimum(),
        constant,
        dimension: start.len(),
        times: Vec::with_capacity(n_paths),
        weights: Vec::with_capacity(n_paths),
        completion: Vec::with_capacity(n_paths),
    };
    for o in &outcomes {
        let w = -o.integral_v + o.girsanov_log_weight;
        let (w, tail) = match o.event {
            StopEvent::Hit => {
                profile.hits += 1;
                (w, None)
            }
            StopEvent::Horizon => {
                profile.censored += 1;
                if constant.is_some() {
                    let r = o.endpoint.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    (w, Some(r))
                } else {
                    (f64::NEG_INFINITY, None)
                }
            }
            StopEvent::WindowExit => {
                profile.window_exits += 1;
                (f64::NEG_INFINITY, None)
            }
            _ => (f64::NEG_INFINITY, None),
        };
        profile.times.push(o.stop_time);
        profile.weights.push(w);
        profile.completion.push(tail);
    }
    Ok(profile)
}

impl HittingProfile {
    pub fn estimate(&self, lambda: f64) -> Result<FunctionalEstimate, PathError> {
        if !(lambda + self.floor >= 0.0) {
            return Err(PathError::InvalidConfig(format!("lambda must be at least −inf V = {}, got {lambda}", -self.floor)));
        }
        let kappa = self.constant.map(|c| (2.0 * (lambda + c)).sqrt());
        let lws: Vec<f64> = self
            .times
            .iter()
            .zip(&self.weights)
            .zip(&self.completion)
            .map(|((&t, &w), tail)| {
                let base = -lambda * t + w;
                match (tail, kappa) {
                    (Some(r), Some(k)) => base + free_hitting_transform(self.dimension, k, *r, 1.0).ln(),
                    _ => base,
                }
            })
            .collect();
        let lm = log_mean_exp(&lws);
        let empty = lm.value == 0.0 && !lm.log_value.is_finite();
        Ok(FunctionalEstimate {
            quantity: Quantity::ELambda,
            point: self.target.clone(),
            lambda,
            value: lm.value,
            log_value: if empty { -(lambda + self.floor) * self.t_max } else { lm.log_value },
            std_error: lm.std_error,
            relative_error: lm.relative_error,
            n_paths: self.n_paths,
            tilt_drift: self.drift.clone(),
            environment_seed: self.environment_seed,
            hits: self.hits,
            window_exits: self.window_exits,
            censored: self.censored,
            neglected_bound: if kappa.is_some() { 0.0 } else { (-(lambda + self.floor) * self.t_max).exp() },
            upper_bound_only: empty,
        })
    }
}

/// The first `n` points of the Halton sequence that fall in the open unit ball.
pub fn halton_ball(d: usize, n: usize) -> Vec<Vec<f64>> {
    const BASES: [u64; 3] = [2, 3, 5];
    let radical = |mut i: u64, b: u64| {
        let (mut f, mut r) = (1.0, 0.0);
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    let mut out = Vec::with_capacity(n);
    let mut i = 1;
    while out.len() < n {
        let p: Vec<f64> = (0..d).map(|k| 2.0 * radical(i, BASES[k]) - 1.0).collect();
        if p.iter().map(|v| v * v).sum::<f64>() < 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub d: f64,
    pub std_error: f64,
    /// The `e` estimate that attained the maximum.
    pub argmax: FunctionalEstimate,
    pub n_start: usize,
}

/// `d(x, y) = max(−inf_{B(x)} log e(·, y), −inf_{B(y)} log e(·, x))`, each
/// infimum replaced by the minimum over `n_start` Halton points of the ball.
/// The form is symmetric in `x` and `y`.
pub fn metric_d(env: &Environment, x: &[f64], y: &[f64], n_start: usize, n_paths: usize, tilt: &Tilt, cfg: &FkConfig) -> Result<MetricEstimate, PathError> {
    let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist <= 2.0 {
        return Err(PathError::InvalidConfig(format!("metric needs |x − y| > 2, got {dist}")));
    }
    if n_start == 0 {
        return Err(PathError::InvalidConfig("n_start must be positive".into()));
    }
    let offsets = halton_ball(x.len(), n_start);
    let shifted = |c: &[f64], u: &[f64]| c.iter().zip(u).map(|(a, b)| a + b).collect::<Vec<f64>>();
    let mut best: Option<FunctionalEstimate> = None;
    for (k, u) in offsets.iter().enumerate() {
        let jobs = [(shifted(x, u), y.to_vec(), 2 * k as u64), (shifted(y, u), x.to_vec(), 2 * k as u64 + 1)];
        for (start, target, sub) in jobs {
            let sub_cfg = cfg.clone().with_stream(mix64(cfg.stream ^ 0x6d65_7472).wrapping_add(sub));
            let e = e_lambda_from(env, &start, &target, 0.0, n_paths, tilt, &sub_cfg)?;
            if best.as_ref().is_none_or(|b| e.log_value < b.log_value) {
                best = Some(e);
            }
        }
    }
    let argmax = best.expect("at least one start point");
    let mut argmax = argmax;
    argmax.quantity = Quantity::Metric;
    Ok(MetricEstimate { d: -argmax.log_value, std_error: argmax.relative_error, argmax, n_start })
}

/// Axis-aligned box `center ± half_width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub center: Vec<f64>,
    pub half_width: f64,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.center.len() as i32)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() < self.half_width)
    }
}

/// Free resolvent kernel of `½Δ − κ²/2` at distance `r`.
pub fn free_green_kernel(d: usize, kappa: f64, r: f64) -> f64 {
    match d {
        1 => (-kappa * r).exp() / kappa,
        2 => (ln_bessel_k0(kappa * r)).exp() / std::f64::consts::PI,
        _ => (-kappa * r).exp() / (2.0 * std::f64::consts::PI * r),
    }
}

/// `G(0, A) = E_0[∫₀^{t_max} 1_A(Z_t) exp(−∫₀^t (V + λ_floor)) dt]` divided by `Leb(A)`.
///
/// `value` is the density proxy `ĝ(0, x)`; `neglected_bound` is the mean
/// weight still alive at `t_max` when no completion applies.
pub fn green(env: &Environment, cell: &Cell, n_paths: usize, lambda_floor: f64, cfg: &FkConfig) -> Result<FunctionalEstimate, PathError> {
    check_count(n_paths)?;
    let d = cell.center.len();
    if !(cell.half_width > 0.0) {
        return Err(PathError::InvalidConfig("cell half-width must be positive".into()));
    }
    if !(lambda_floor >= 0.0) || (d <= 2 && lambda_floor == 0.0 && env.constant_value().is_none_or(|c| c == 0.0)) {
        return Err(PathError::InvalidConfig(format!("green in dimension {d} needs a positive lambda_floor")));
    }
    let pc = cfg.path_config(cfg.t_max, Vec::new());
    let origin = vec![0.0; d];
    let key = cfg.key(env.seed(), 0);
    let completion = env.constant_value().filter(|_| cfg.horizon_completion).map(|c| (2.0 * (lambda_floor + c)).sqrt());
    let volume = cell.volume();

    let per_path: Vec<(f64, f64, bool)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut occupation = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            let o = simulate_observed(&pc, &StoppingSpec::Horizon, env, &origin, &mut PathStreams::new(cfg.master_seed, key, i), |s| {
                let w = if cell.contains(s.position) { (-s.integral_v - lambda_floor * s.time).exp() } else { 0.0 };
                if let Some((t0, w0)) = prev {
                    occupation += 0.5 * (s.time - t0) * (w0 + w);
                }
                prev = Some((s.time, w));
                true
            })?;
            let alive = (-o.integral_v - lambda_floor * o.stop_time).exp();
            let exited = o.event == StopEvent::WindowExit;
            let tail = match completion {
                Some(kappa) if !exited => {
                    let r = o.endpoint.iter().zip(&cell.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    alive * volume * free_green_kernel(d, kappa, r)
                }
                _ => 0.0,
            };
            Ok(((occupation + tail) / volume, if completion.is_some() { 0.0 } else { alive }, exited))
        })
        .collect::<Result<_, PathError>>()?;

    let exits = per_path.iter().filter(|p| p.2).count();
    if exits > 0 {
        return Err(window_error(exits, n_paths, env));
    }
    let xs: Vec<f64> = per_path.iter().map(|p| p.0).collect();
    let alive: Vec<f64> = per_path.iter().map(|p| p.1).collect();
    let m = crate::stats::MeanEstimate::from_samples(&xs);
    Ok(FunctionalEstimate {
        quantity: Quantity::Green,
        point: cell.center.clone(),
        lambda: lambda_floor,
        value: m.mean,
        log_value: m.mean.ln(),
        std_error: m.std_error,
        relative_error: m.std_error / m.mean,
        n_paths,
        tilt_drift: vec![0.0; d],
        environment_seed: env.seed(),
        hits: 0,
        window_exits: 0,
        censored: n_paths,
        neglected_bound: pairwise_sum(&alive) / n_paths as f64,
        upper_bound_only: false,
    })
}

/// Unit-ball volume helper re-exported for callers that normalize by `Leb(B)`.
pub fn ball_volume(d: usize) -> f64 {
    unit_ball_volume(d)
}
