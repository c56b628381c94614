use serde::{Deserialize, Serialize};

use super::{Family, PotentialError, PotentialSpec};
use crate::quad::{integrate_to_infinity, unit_ball_volume};

/// How much of an infinite Poisson cloud may be ignored.
///
/// Evaluations inside `B(0, evaluation_radius)` that ignore centers outside
/// the radius returned by [`truncation_radius`] are off by more than
/// `target_sup_error` with probability at most `failure_probability`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub target_sup_error: f64,
    pub evaluation_radius: f64,
    pub failure_probability: f64,
}

impl TruncationPolicy {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.target_sup_error > 0.0) {
            v.push(format!("target_sup_error must be positive, got {}", self.target_sup_error));
        }
        if !(self.evaluation_radius > 1.0) {
            v.push(format!("evaluation_radius must exceed 1, got {}", self.evaluation_radius));
        }
        if !(self.failure_probability > 0.0 && self.failure_probability < 1.0) {
            v.push(format!("failure_probability must lie in (0,1), got {}", self.failure_probability));
        }
        v
    }
}

/// Ratio between consecutive radii of the search grid.
pub const GRID_RATIO: f64 = 1.044_273_782_427_413_8; // 2^(1/16)

const MAX_GRID_STEPS: usize = 2048;

fn tail_family(spec: &PotentialSpec) -> Result<(f64, f64), PotentialError> {
    spec.validate()?;
    match spec.family {
        Family::Lacoin { gamma, .. } => Ok((2.0, gamma)),
        Family::PolyTail { gamma, c9 } => Ok((4.0 / c9, gamma)),
        _ => Err(PotentialError::NotRandom(spec.family.name())),
    }
}

/// Smallest grid radius `R = 2·R0·2^(k/16)`, `k ≥ 1`, with `exp(-c·ε·R^γ) ≤ p`,
/// where `c = 2` for Lacoin and `c = 4/c9` for PolyTail.
///
/// This is the exponential tail alone; it ignores the mean of the omitted
/// part, so it does not by itself certify the sup-error.
pub fn exponential_tail_radius(policy: &TruncationPolicy, spec: &PotentialSpec) -> Result<f64, PotentialError> {
    let v = policy.violations();
    if !v.is_empty() {
        return Err(PotentialError::InvalidParameters(v.join("; ")));
    }
    let (c, gamma) = tail_family(spec)?;
    let needed = ((1.0 / policy.failure_probability).ln() / (c * policy.target_sup_error)).powf(1.0 / gamma);
    let mut r = 2.0 * policy.evaluation_radius * GRID_RATIO;
    while r < needed {
        r *= GRID_RATIO;
    }
    Ok(r)
}

/// Log of the Laplace transform `log E exp(s·T_R)` of the Campbell dominating
/// variable for the sup over `B(0, R0)`, `R > 2·R0`, of the part of `V`
/// coming from centers outside `B(0, R)`.
///
/// Lacoin: `T_R = Σ_{|ω|>R} r^{-γ} 1{|ω| < 2r}`.
/// PolyTail: `T_R = Σ_{|ω|>R} c9·2^γ·|ω|^{-γ}`.
pub fn tail_log_laplace(spec: &PotentialSpec, radius: f64, s: f64) -> Result<f64, PotentialError> {
    spec.validate()?;
    let d = spec.dimension as i32;
    let ld = unit_ball_volume(spec.dimension);
    let value = match spec.family {
        Family::Lacoin { gamma, delta } => {
            let f = |r: f64| ((2.0 * r).powi(d) - radius.powi(d)) * (s * r.powf(-gamma)).exp_m1() * r.powf(-delta - 1.0);
            delta * ld * integrate_to_infinity(f, 0.5 * radius, 1e-10, 0.0)?
        }
        Family::PolyTail { gamma, c9 } => {
            let a = s * c9 * 2f64.powf(gamma);
            let f = |rho: f64| (a * rho.powf(-gamma)).exp_m1() * rho.powi(d - 1);
            d as f64 * ld * integrate_to_infinity(f, radius, 1e-10, 0.0)?
        }
        _ => return Err(PotentialError::NotRandom(spec.family.name())),
    };
    Ok(value)
}

/// Chernoff bound `inf_s exp(log E e^{s·T_R} − s·ε)` on
/// `P(sup_{B(0,R0)} omitted part > ε)`, returned as a logarithm.
pub fn log_tail_bound(spec: &PotentialSpec, radius: f64, epsilon: f64) -> Result<f64, PotentialError> {
    let (_, gamma) = tail_family(spec)?;
    let scale = match spec.family {
        Family::PolyTail { c9, .. } => c9,
        _ => 1.0,
    };
    // Keep the exponent s·2^γ·R^{-γ}·scale below ~500.
    let s_max = 500.0 * radius.powf(gamma) / (2f64.powf(gamma) * scale);
    let objective = |ln_s: f64| -> Result<f64, PotentialError> {
        let s = ln_s.exp();
        Ok(tail_log_laplace(spec, radius, s)? - s * epsilon)
    };
    let (mut lo, mut hi) = ((s_max * 1e-12).ln(), s_max.ln());
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (objective(x1)?, objective(x2)?);
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    Ok(f1.min(f2).min(0.0))
}

/// Smallest radius on the grid `R = 2·R0·2^(k/16)`, `k ≥ 1`, that satisfies
/// both `exp(-c·ε·R^γ) ≤ p` and the Chernoff bound of [`log_tail_bound`].
pub fn truncation_radius(policy: &TruncationPolicy, spec: &PotentialSpec) -> Result<f64, PotentialError> {
    let mut r = exponential_tail_radius(policy, spec)?;
    let target = policy.failure_probability.ln();
    for _ in 0..MAX_GRID_STEPS {
        if log_tail_bound(spec, r, policy.target_sup_error)? <= target {
            return Ok(r);
        }
        r *= GRID_RATIO;
    }
    Err(PotentialError::InvalidParameters(format!(
        "no truncation radius below {r} meets sup error {} with probability {}",
        policy.target_sup_error, policy.failure_probability
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lacoin_example_lands_on_first_grid_point_above_ten() {
        let policy = TruncationPolicy { target_sup_error: 0.01, evaluation_radius: 5.0, failure_probability: 1e-6 };
        // exp(-0.02 R^3) = 1e-6  =>  R = (ln(1e6)/0.02)^(1/3)
        let solved = (1e6f64.ln() / 0.02).powf(1.0 / 3.0);
        assert!((solved - 8.84).abs() < 0.01);
        let r = exponential_tail_radius(&policy, &PotentialSpec::lacoin(2, 3.0, 1.5)).unwrap();
        assert!(r > 10.0 && r < 10.0 * GRID_RATIO + 1e-12, "{r}");
        let certified = truncation_radius(&policy, &PotentialSpec::lacoin(2, 3.0, 1.5)).unwrap();
        assert!(certified >= r);
        assert!(log_tail_bound(&PotentialSpec::lacoin(2, 3.0, 1.5), certified, 0.01).unwrap() <= 1e-6f64.ln());
        assert!(log_tail_bound(&PotentialSpec::lacoin(2, 3.0, 1.5), certified / GRID_RATIO, 0.01).unwrap() > 1e-6f64.ln() || certified / GRID_RATIO <= r);
    }

    #[test]
    fn vacuous_guarantee_collapses_to_twice_r0() {
        let policy = TruncationPolicy { target_sup_error: 0.01, evaluation_radius: 5.0, failure_probability: 1.0 - 1e-12 };
        let r = exponential_tail_radius(&policy, &PotentialSpec::lacoin(2, 3.0, 1.5)).unwrap();
        assert!((r - 10.0 * GRID_RATIO).abs() < 1e-12);
    }

    #[test]
    fn small_failure_probability_pushes_radius_out() {
        let policy = TruncationPolicy { target_sup_error: 1e-4, evaluation_radius: 2.0, failure_probability: 1e-9 };
        let r = exponential_tail_radius(&policy, &PotentialSpec::lacoin(2, 3.0, 1.5)).unwrap();
        assert!((-2.0 * 1e-4 * r.powi(3)).exp() <= 1e-9);
        assert!((-2.0 * 1e-4 * (r / GRID_RATIO).powi(3)).exp() > 1e-9);
        let poly = PotentialSpec { dimension: 2, family: Family::PolyTail { gamma: 3.0, c9: 1.0 } };
        let rp = exponential_tail_radius(&policy, &poly).unwrap();
        assert!(rp < r);
    }

    #[test]
    fn chernoff_bound_shrinks_with_radius_and_matches_the_mean() {
        let spec = PotentialSpec { dimension: 2, family: Family::PolyTail { gamma: 3.0, c9: 1.0 } };
        let b: Vec<f64> = [20.0, 40.0, 80.0].iter().map(|&r| log_tail_bound(&spec, r, 3.0).unwrap()).collect();
        assert!(b[0] > b[1] && b[1] > b[2], "{b:?}");
        // Small s: log E e^{sT} ≈ s·E T with E T = 2π·c9·2^γ/R.
        let s = 1e-6;
        let lin = tail_log_laplace(&spec, 40.0, s).unwrap() / s;
        assert!((lin - 2.0 * std::f64::consts::PI * 8.0 / 40.0).abs() < 1e-4, "{lin}");
        // ε below the mean gives no information.
        assert_eq!(log_tail_bound(&spec, 40.0, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_policy() {
        let policy = TruncationPolicy { target_sup_error: 0.0, evaluation_radius: 0.5, failure_probability: 2.0 };
        assert_eq!(policy.violations().len(), 3);
        assert!(truncation_radius(&policy, &PotentialSpec::lacoin(2, 3.0, 1.5)).is_err());
    }
}
