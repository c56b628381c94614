//! Closed-form and Monte Carlo moments of the Poissonian potentials.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cloud::sample_cloud;
use super::env::direct_sum;
use super::{Family, PotentialError, PotentialSpec};
use crate::quad::{integrate_to_infinity, unit_ball_volume};
use crate::rng::environment_seed;
use crate::stats::{covariance_with_se, variance_with_se, MeanEstimate, Z95};

/// Mean and variance of the Lacoin potential at a point:
/// `(L_d δ/(γ+δ−d), L_d δ/(2γ+δ−d))`.
pub fn closed_form_moments(gamma: f64, delta: f64, d: usize) -> Result<(f64, f64), PotentialError> {
    let excess = gamma + delta - d as f64;
    if !(gamma > 0.0 && delta > 0.0) {
        return Err(PotentialError::InvalidParameters(format!("gamma and delta must be positive, got {gamma}, {delta}")));
    }
    if excess <= 0.0 {
        return Err(PotentialError::InfinitePotential { gamma, delta, dimension: d });
    }
    let ld = unit_ball_volume(d);
    Ok((ld * delta / excess, ld * delta / (2.0 * gamma + delta - d as f64)))
}

/// `log E[exp(s Σ r_i^{-γ} 1{|ω_i| ≤ r_i + R})]`, by Campbell's formula and
/// adaptive quadrature to relative tolerance `1e-8`.
pub fn exp_moment_log(gamma: f64, delta: f64, d: usize, s: f64, halo: f64) -> Result<f64, PotentialError> {
    closed_form_moments(gamma, delta, d)?;
    if !(halo >= 0.0) {
        return Err(PotentialError::InvalidParameters(format!("halo radius must be non-negative, got {halo}")));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let ld = unit_ball_volume(d);
    let di = d as i32;
    let v = integrate_to_infinity(
        |r| delta * ld * (r + halo).powi(di) * r.powf(-delta - 1.0) * (s * r.powf(-gamma)).exp_m1(),
        1.0,
        1e-8,
        0.0,
    )?;
    Ok(v)
}

pub fn exp_moment(gamma: f64, delta: f64, d: usize, s: f64, halo: f64) -> Result<f64, PotentialError> {
    Ok(exp_moment_log(gamma, delta, d, s, halo)?.exp())
}

/// Sample mean and variance of `V(0)` over independent environments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub mean_se: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub n_env: usize,
}

pub fn empirical_moments(spec: &PotentialSpec, n_env: usize, master_seed: u64) -> Result<MomentEstimate, PotentialError> {
    spec.validate()?;
    if n_env < 2 {
        return Err(PotentialError::InvalidParameters(format!("n_env must be at least 2, got {n_env}")));
    }
    let origin = vec![0.0; spec.dimension];
    let values: Vec<f64> = (0..n_env as u64)
        .into_par_iter()
        .map(|i| {
            if !spec.is_random() {
                return Ok(direct_sum(spec, None, &origin, f64::INFINITY));
            }
            let cloud = sample_cloud(spec, 1e-9, environment_seed(master_seed, i))?;
            Ok(direct_sum(spec, Some(&cloud), &origin, f64::INFINITY))
        })
        .collect::<Result<_, PotentialError>>()?;
    let m = MeanEstimate::from_samples(&values);
    let (variance, variance_se) = variance_with_se(&values);
    Ok(MomentEstimate { mean: m.mean, mean_se: m.std_error, variance, variance_se, n_env })
}

/// Monte Carlo `E[exp(s Σ r_i^{-γ} 1{|ω_i| ≤ r_i + R})]` over `n_env` Lacoin clouds.
pub fn empirical_exp_moment(spec: &PotentialSpec, s: f64, halo: f64, n_env: usize, master_seed: u64) -> Result<MeanEstimate, PotentialError> {
    spec.validate()?;
    let Family::Lacoin { gamma, .. } = spec.family else {
        return Err(PotentialError::InvalidParameters("the exponential moment is defined for the lacoin family".into()));
    };
    if !(halo >= 0.0) || n_env < 2 {
        return Err(PotentialError::InvalidParameters(format!("need halo >= 0 and n_env >= 2, got {halo}, {n_env}")));
    }
    let values: Vec<f64> = (0..n_env as u64)
        .into_par_iter()
        .map(|i| {
            let cloud = sample_cloud(spec, halo.max(1e-9), environment_seed(master_seed, i))?;
            let marks = cloud.marks.as_ref().expect("lacoin marks");
            let mut sum = 0.0;
            for (j, &r) in marks.iter().enumerate() {
                let dist = cloud.center(j).iter().map(|p| p * p).sum::<f64>().sqrt();
                if dist <= r + halo {
                    sum += r.powf(-gamma);
                }
            }
            Ok((s * sum).exp())
        })
        .collect::<Result<_, PotentialError>>()?;
    Ok(MeanEstimate::from_samples(&values))
}

/// Which covariance estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceEstimator {
    /// Plain sample covariance of `(V(0), V(x))`.
    Sample,
    /// Lacoin only: `V(0) = C + A`, `V(x) = C + B` with `C` the weight of the
    /// balls containing both points and `A, B, C` independent, so
    /// `Cov(V(0), V(x)) = Var(C)`; the sample variance of `C` is reported.
    SharedComponent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub covariance: f64,
    pub std_error: f64,
    /// Half-width of the 95% normal confidence interval.
    pub ci_half_width: f64,
    pub n_env: usize,
    pub estimator: CovarianceEstimator,
}

/// Covariance of `V(0)` and `V(lag)` over `n_env` independent environments.
pub fn empirical_covariance(
    spec: &PotentialSpec,
    lag: &[f64],
    n_env: usize,
    master_seed: u64,
    estimator: CovarianceEstimator,
) -> Result<CovarianceEstimate, PotentialError> {
    spec.validate()?;
    if n_env < 100 {
        return Err(PotentialError::InvalidParameters(format!("n_env must be at least 100, got {n_env}")));
    }
    if lag.len() != spec.dimension {
        return Err(PotentialError::InvalidParameters(format!("lag has dimension {}, expected {}", lag.len(), spec.dimension)));
    }
    let dist = lag.iter().map(|x| x * x).sum::<f64>().sqrt();
    let origin = vec![0.0; spec.dimension];
    let finish = |cov: f64, se: f64| CovarianceEstimate { covariance: cov, std_error: se, ci_half_width: Z95 * se, n_env, estimator };

    if !spec.is_random() {
        return Ok(finish(0.0, 0.0));
    }
    match estimator {
        CovarianceEstimator::Sample => {
            let window = dist.max(1e-9);
            let pairs: Vec<(f64, f64)> = (0..n_env as u64)
                .into_par_iter()
                .map(|i| {
                    let cloud = sample_cloud(spec, window, environment_seed(master_seed, i))?;
                    Ok((direct_sum(spec, Some(&cloud), &origin, f64::INFINITY), direct_sum(spec, Some(&cloud), lag, f64::INFINITY)))
                })
                .collect::<Result<_, PotentialError>>()?;
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let (cov, se) = covariance_with_se(&a, &b);
            Ok(finish(cov, se))
        }
        CovarianceEstimator::SharedComponent => {
            let Family::Lacoin { gamma, .. } = spec.family else {
                return Err(PotentialError::InvalidParameters("shared-component covariance needs the lacoin family".into()));
            };
            let shared: Vec<f64> = (0..n_env as u64)
                .into_par_iter()
                .map(|i| {
                    let cloud = sample_cloud(spec, 1e-9, environment_seed(master_seed, i))?;
                    let marks = cloud.marks.as_ref().expect("lacoin marks");
                    let mut c = 0.0;
                    for (j, &r) in marks.iter().enumerate() {
                        let w = cloud.center(j);
                        let d0: f64 = w.iter().map(|p| p * p).sum();
                        let dx: f64 = w.iter().zip(lag).map(|(p, q)| (p - q) * (p - q)).sum();
                        if d0 < r * r && dx < r * r {
                            c += r.powf(-gamma);
                        }
                    }
                    Ok(c)
                })
                .collect::<Result<_, PotentialError>>()?;
            let (var, se) = variance_with_se(&shared);
            Ok(finish(var, se))
        }
    }
}
