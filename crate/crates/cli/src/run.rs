use std::fmt::Write as _;
use std::time::Instant;

use rplab::feynman_kac::{self, decay_rate, survival, FunctionalEstimate};
use rplab::lyapunov_ldp::{
    direction_grid, endpoint_ldp_check, estimate_phase, estimate_rate, lyapunov_curves, shape_diagnostic, sup_unit_ball_mean, write_alpha_csv, DualValue, LyapunovCurve,
    LyapunovError, Phase,
};
use rplab::paths::PathError;
use rplab::potentials::{
    closed_form_moments, empirical_covariance, empirical_exp_moment, empirical_moments, exp_moment, CovarianceEstimator, Environment, Family, PotentialError,
};
use rplab::rng::environment_seed;
use rplab::spectrum::{self, principal_eigenvalue, EigenOptions, EigenRow, GridProblem, SpectrumError};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{validate, ExperimentConfig, Kind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("{0}")]
    Potential(#[from] PotentialError),
    #[error("{0}")]
    Path(#[from] PathError),
    #[error("{0}")]
    Lyapunov(#[from] LyapunovError),
    #[error("{0}")]
    Spectrum(#[from] SpectrumError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl RunError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 1,
            _ => 2,
        }
    }
}

/// One emitted table.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub body: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub kind: &'static str,
    pub config: ExperimentConfig,
    /// `sha256("blob <len>\0" + canonical config)`.
    pub input_hash: String,
    pub outputs: Vec<OutputEntry>,
    pub wall_time_seconds: f64,
}

/// Content hash in the style of a git blob id, with SHA-256.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

/// Validate, compute every table in a pool of `config.workers` threads and
/// write them with a `manifest.json` into `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<Manifest, RunError> {
    let start = Instant::now();
    let artifacts = compute(config)?;
    std::fs::create_dir_all(&config.out)?;
    let mut outputs = Vec::with_capacity(artifacts.len());
    for a in &artifacts {
        std::fs::write(config.out.join(&a.name), &a.body)?;
        outputs.push(OutputEntry { file: a.name.clone(), sha256: blob_hash(a.body.as_bytes()), bytes: a.body.len() });
    }
    let manifest = Manifest {
        tool: "rp-lab",
        version: env!("CARGO_PKG_VERSION"),
        kind: config.kind.name(),
        config: config.clone(),
        input_hash: blob_hash(config.canonical().as_bytes()),
        outputs,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(config.out.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Validate and compute the tables without touching the file system.
pub fn compute(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let v = validate(config);
    if !v.is_empty() {
        return Err(RunError::Invalid(v));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| match config.kind {
        Kind::PotentialStats => potential_stats(config),
        Kind::Survival => survival_tables(config),
        Kind::Lyapunov => lyapunov(config),
        Kind::Shape => shape(config),
        Kind::Rate => rate(config),
        Kind::Phase => phase(config),
        Kind::Eigen => eigen(config),
        Kind::LdpCheck => ldp_check(config),
    })
}

fn artifact(name: &str, body: String) -> Artifact {
    Artifact { name: name.to_string(), body }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn env_seed(config: &ExperimentConfig, e: usize) -> u64 {
    environment_seed(config.seed, e as u64)
}

/// Environments for path experiments; deterministic families get one.
fn env_count(config: &ExperimentConfig) -> usize {
    if config.potential.is_random() { config.n_env } else { 1 }
}

pub const POTENTIAL_STATS_HEADER: &str = "statistic,lag,s,halo,estimate,std_error,closed_form,n_env";

fn potential_stats(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let spec = &config.potential;
    let m = empirical_moments(spec, config.n_env, config.seed)?;
    let closed = match spec.family {
        Family::Lacoin { gamma, delta } => Some(closed_form_moments(gamma, delta, spec.dimension)?),
        Family::Constant { c } => Some((c, 0.0)),
        Family::Zero => Some((0.0, 0.0)),
        _ => None,
    };
    let mut csv = format!("{POTENTIAL_STATS_HEADER}\n");
    let n = config.n_env;
    writeln!(csv, "mean,,,,{},{},{},{n}", m.mean, m.mean_se, opt(closed.map(|c| c.0))).unwrap();
    writeln!(csv, "variance,,,,{},{},{},{n}", m.variance, m.variance_se, opt(closed.map(|c| c.1))).unwrap();
    if spec.is_random() && config.n_env >= 100 {
        let estimator = if matches!(spec.family, Family::Lacoin { .. }) { CovarianceEstimator::SharedComponent } else { CovarianceEstimator::Sample };
        for &lag in &config.lags {
            let mut x = vec![0.0; spec.dimension];
            x[0] = lag;
            let c = empirical_covariance(spec, &x, n, config.seed, estimator)?;
            writeln!(csv, "covariance,{lag},,,{},{},,{n}", c.covariance, c.std_error).unwrap();
        }
    }
    if let Family::Lacoin { gamma, delta } = spec.family {
        for &s in &config.s {
            for &halo in &config.halo {
                let mc = empirical_exp_moment(spec, s, halo, n, config.seed)?;
                let exact = exp_moment(gamma, delta, spec.dimension, s, halo)?;
                writeln!(csv, "exp_moment,,{s},{halo},{},{},{exact},{n}", mc.mean, mc.std_error).unwrap();
            }
        }
    }
    Ok(vec![artifact("potential_stats.csv", csv)])
}

fn functional_csv(rows: &[FunctionalEstimate]) -> String {
    let mut buf = Vec::new();
    feynman_kac::write_csv(&mut buf, rows, true).expect("write to memory");
    String::from_utf8(buf).expect("utf-8 csv")
}

pub const DECAY_HEADER: &str = "env_seed,slope,slope_se,ci_low,ci_high";

fn survival_tables(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let spec = &config.potential;
    let fk = config.fk();
    let t_top = config.times.iter().cloned().fold(0.0, f64::max);
    let window = 8.0 * (spec.dimension as f64 * t_top).sqrt() + 4.0;
    let mut rows = Vec::new();
    let mut decay = format!("{DECAY_HEADER}\n");
    let sorted = config.times.windows(2).all(|w| w[1] > w[0]);
    for e in 0..env_count(config) {
        let env = Environment::sample(spec, window, env_seed(config, e))?;
        if config.times.len() >= 4 && sorted {
            let fit = decay_rate(&env, &config.times, None, config.n_paths, &fk)?;
            writeln!(decay, "{},{},{},{},{}", env.seed(), fit.slope, fit.slope_se, fit.ci95.0, fit.ci95.1).unwrap();
            rows.extend(fit.estimates);
        } else {
            for &t in &config.times {
                rows.push(survival(&env, t, config.n_paths, &fk)?);
            }
        }
    }
    let mut out = vec![artifact("survival.csv", functional_csv(&rows))];
    if config.times.len() >= 4 && sorted {
        out.push(artifact("decay.csv", decay));
    }
    Ok(out)
}

/// Unit directions: `n` equiangular ones in the plane, else the default grid.
pub fn directions(config: &ExperimentConfig) -> Vec<Vec<f64>> {
    let d = config.potential.dimension;
    if config.directions > 0 && d == 2 {
        let n = config.directions;
        (0..n)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect()
    } else {
        direction_grid(d)
    }
}

fn alpha_csv(curves: &[LyapunovCurve]) -> String {
    let mut buf = Vec::new();
    write_alpha_csv(&mut buf, curves).expect("write to memory");
    String::from_utf8(buf).expect("utf-8 csv")
}

pub const CURVE_HEADER: &str = "direction_index,magnitude,lambda,alpha,stderr,ci,monotone_violation,censored,non_decreasing,concave,projection_distance,median_ci";

fn curve_csv(curves: &[LyapunovCurve]) -> String {
    let mut csv = format!("{CURVE_HEADER}\n");
    for c in curves {
        let k = c.checks();
        for e in &c.estimates {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.direction_index, c.magnitude, e.lambda, e.alpha, e.std_error, e.ci, e.monotone_violation, e.censored, k.non_decreasing, k.concave, k.projection_distance, k.median_ci
            )
            .unwrap();
        }
    }
    csv
}

fn lyapunov(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let points = if config.directions > 0 {
        let m = norm(&config.x);
        directions(config).into_iter().map(|u| u.into_iter().map(|v| v * m).collect()).collect()
    } else {
        vec![config.x.clone()]
    };
    let curves = lyapunov_curves(&config.potential, &points, &config.alpha_settings())?;
    Ok(vec![artifact("alpha.csv", alpha_csv(&curves)), artifact("lyapunov.csv", curve_csv(&curves))])
}

pub const SHAPE_HEADER: &str = "lambda,scale,deviation,deviation_se,n_env";

fn shape(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let lambda = config.lambdas[0];
    let report = shape_diagnostic(&config.potential, lambda, &directions(config), &config.alpha_settings())?;
    let mut csv = format!("{SHAPE_HEADER}\n");
    for r in &report.rows {
        writeln!(csv, "{lambda},{},{},{},{}", r.scale, r.deviation, r.deviation_se, r.per_env.len()).unwrap();
    }
    Ok(vec![artifact("shape.csv", csv)])
}

pub const RATE_HEADER: &str = "x_norm,rate,rate_se,lambda_star,lower_bound,upper_bound,projection_distance,censored,non_negative,above_lower,below_upper";

fn rate(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let spec = &config.potential;
    let sup = if spec.is_random() { Some(sup_unit_ball_mean(spec, config.n_env, config.n_points, config.seed)?.mean) } else { Some(0.0) };
    let (curve, r) = estimate_rate(spec, &config.x, &config.alpha_settings(), sup, 3)?;
    let mut csv = format!("{RATE_HEADER}\n");
    writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{}",
        norm(&r.x),
        r.rate,
        r.rate_se,
        r.lambda_star,
        r.lower_bound,
        opt(r.upper_bound),
        r.projection_distance,
        r.censored,
        r.verdicts.non_negative,
        r.verdicts.above_lower,
        r.verdicts.below_upper.map_or(String::new(), |b| b.to_string())
    )
    .unwrap();
    Ok(vec![artifact("rate.csv", csv), artifact("alpha.csv", alpha_csv(std::slice::from_ref(&curve)))])
}

fn dual_text(v: DualValue) -> String {
    match v {
        DualValue::Finite(x) => x.to_string(),
        DualValue::Infinite => "inf".into(),
    }
}

fn phase(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let d = config.potential.dimension;
    let report = estimate_phase(&config.potential, &config.drift, &directions(config), &config.alpha_settings())?;
    let v = &report.verdict;
    let hs: Vec<String> = (1..=d).map(|i| format!("h{i}")).collect();
    let mut csv = format!("{},dual_at_floor,phase,lambda_h,free_energy,censor_lower,censor_upper,scale\n", hs.join(","));
    let phase = match v.phase {
        Phase::SubBallistic => "sub-ballistic",
        Phase::Ballistic => "ballistic",
        Phase::Undetermined => "undetermined",
    };
    let h: Vec<String> = v.h.iter().map(|x| x.to_string()).collect();
    writeln!(
        csv,
        "{},{},{phase},{},{},{},{},{}",
        h.join(","),
        dual_text(v.dual_at_floor),
        opt(v.lambda_h),
        opt(v.free_energy),
        opt(v.censoring.as_ref().map(|c| c.lower)),
        opt(v.censoring.as_ref().and_then(|c| c.upper)),
        report.scale
    )
    .unwrap();
    Ok(vec![artifact("phase.csv", csv), artifact("alpha.csv", alpha_csv(&report.floor_curves))])
}

fn eigen(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let spec = &config.potential;
    let r_max = config.radii.iter().cloned().fold(0.0, f64::max);
    let options = EigenOptions::default();
    let mut rows = Vec::new();
    for e in 0..env_count(config) {
        let env = Environment::sample(spec, r_max + 1.0, env_seed(config, e))?;
        for &radius in &config.radii {
            let h = config.spacing(radius);
            let grid = GridProblem::new(spec.dimension, radius, h, &env)?;
            let res = principal_eigenvalue(&grid, &options)?;
            rows.push(EigenRow { env_seed: env.seed(), radius, h, lambda_hat: res.lambda, residual: res.residual, iterations: res.iterations });
        }
    }
    let mut buf = Vec::new();
    spectrum::write_csv(&mut buf, &rows)?;
    Ok(vec![artifact("eigen.csv", String::from_utf8(buf).expect("utf-8 csv"))])
}

pub const LDP_HEADER: &str = "env_seed,t,rate,stderr,hits,log_endpoint,log_survival,reference";

fn ldp_check(config: &ExperimentConfig) -> Result<Vec<Artifact>, RunError> {
    let spec = &config.potential;
    let d = spec.dimension as f64;
    let t_top = config.times.iter().cloned().fold(0.0, f64::max);
    let window = (norm(&config.v) + config.r) * t_top + 8.0 * (d * t_top).sqrt() + 4.0;
    let reference = match spec.family {
        // The killing cancels against the survival normalization.
        Family::Zero | Family::Constant { .. } => Some(-0.5 * (norm(&config.v) - config.r).max(0.0).powi(2)),
        _ => None,
    };
    let mut csv = format!("{LDP_HEADER}\n");
    for e in 0..env_count(config) {
        let env = Environment::sample(spec, window, env_seed(config, e))?;
        let report = endpoint_ldp_check(&env, &config.v, config.r, &config.times, config.n_paths, &config.fk(), reference)?;
        for row in &report.rows {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                env.seed(),
                row.t,
                opt(row.rate),
                row.std_error,
                row.hits,
                row.endpoint.log_value,
                row.survival.log_value,
                opt(reference)
            )
            .unwrap();
        }
    }
    Ok(vec![artifact("ldp_check.csv", csv)])
}
