//! Poisson-based random environments and their closed-form moments.
//!
//! Three random families are supported:
//!
//! * `Lacoin`: a Boolean model of balls `B(ω_i, r_i)` with unit-intensity
//!   centers and Pareto radii `P(r ≥ s) = s^{-δ}`, each ball carrying weight
//!   `r^{-γ}`;
//! * `PolyTail`: a shot-noise field `Σ W(x - ω_j)` with
//!   `W(y) = c9 · min(|y|^{-γ}, 1)`;
//! * `Ruess`: a planar Poisson line process; the potential is `m` within
//!   distance `width` of some line and `M` elsewhere.
//!
//! `Constant` and `Zero` act as deterministic controls.

mod cloud;
mod env;
mod moments;
mod truncation;

pub use cloud::{sample_cloud, sample_cloud_with, sample_lacoin_mark, CloudLayout, CloudManifest, CloudTruncation, PointCloud, SamplingOptions};
pub use env::{direct_sum, Environment, FnPotential, Potential};
pub use moments::{
    closed_form_moments, empirical_covariance, empirical_exp_moment, empirical_moments, exp_moment, exp_moment_log, CovarianceEstimate, CovarianceEstimator,
    MomentEstimate,
};
pub use truncation::{exponential_tail_radius, log_tail_bound, tail_log_laplace, truncation_radius, TruncationPolicy, GRID_RATIO};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PotentialError {
    #[error("invalid potential parameters: {0}")]
    InvalidParameters(String),
    #[error("potential a.s. infinite: Lacoin finiteness condition γ+δ−d > 0 fails (γ={gamma}, δ={delta}, d={dimension})")]
    InfinitePotential { gamma: f64, delta: f64, dimension: usize },
    #[error("window radius must be positive, got {0}")]
    NonPositiveWindow(f64),
    #[error("point at distance {distance} lies outside the guaranteed window of radius {window}")]
    TruncationViolation { distance: f64, window: f64 },
    #[error("family {0} has no point cloud")]
    NotRandom(&'static str),
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] crate::quad::QuadError),
    #[error("cloud i/o: {0}")]
    Io(String),
}

/// Parameters of a potential family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Lacoin { gamma: f64, delta: f64 },
    #[serde(rename = "polytail")]
    PolyTail { gamma: f64, c9: f64 },
    Ruess { nu: f64, m: f64, big_m: f64, width: f64 },
    Constant { c: f64 },
    Zero,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Lacoin { .. } => "lacoin",
            Family::PolyTail { .. } => "polytail",
            Family::Ruess { .. } => "ruess",
            Family::Constant { .. } => "constant",
            Family::Zero => "zero",
        }
    }
}

/// A potential family together with the ambient dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub dimension: usize,
    #[serde(flatten)]
    pub family: Family,
}

impl PotentialSpec {
    pub fn new(dimension: usize, family: Family) -> Result<Self, PotentialError> {
        let spec = Self { dimension, family };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(dimension: usize) -> Self {
        Self { dimension, family: Family::Zero }
    }

    pub fn constant(dimension: usize, c: f64) -> Self {
        Self { dimension, family: Family::Constant { c } }
    }

    pub fn lacoin(dimension: usize, gamma: f64, delta: f64) -> Self {
        Self { dimension, family: Family::Lacoin { gamma, delta } }
    }

    /// All violated invariants, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let d = self.dimension;
        let mut out = Vec::new();
        if d == 0 {
            out.push("dimension must be at least 1".to_string());
        }
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{name} must be positive and finite, got {v}"));
            }
        };
        match self.family {
            Family::Lacoin { gamma, delta } => {
                positive("gamma", gamma, &mut out);
                positive("delta", delta, &mut out);
                if gamma + delta - d as f64 <= 0.0 {
                    out.push(format!(
                        "lacoin finiteness condition gamma+delta-d > 0 violated: {gamma}+{delta}-{d} = {}; the potential is a.s. infinite",
                        gamma + delta - d as f64
                    ));
                }
            }
            Family::PolyTail { gamma, c9 } => {
                positive("c9", c9, &mut out);
                if !(gamma > d as f64) {
                    out.push(format!("polytail requires gamma > d, got gamma={gamma}, d={d}"));
                }
            }
            Family::Ruess { nu, m, big_m, width } => {
                if d != 2 {
                    out.push(format!("ruess potential is planar, got d={d}"));
                }
                positive("nu", nu, &mut out);
                positive("width", width, &mut out);
                if !(m >= 0.0) {
                    out.push(format!("ruess m must be non-negative, got {m}"));
                }
                if !(big_m > m) {
                    out.push(format!("ruess requires M > m, got m={m}, M={big_m}"));
                }
            }
            Family::Constant { c } => {
                if !(c >= 0.0 && c.is_finite()) {
                    out.push(format!("constant potential must be finite and non-negative, got {c}"));
                }
            }
            Family::Zero => {}
        }
        out
    }

    pub fn validate(&self) -> Result<(), PotentialError> {
        if let Family::Lacoin { gamma, delta } = self.family {
            if gamma > 0.0 && delta > 0.0 && gamma + delta - self.dimension as f64 <= 0.0 {
                return Err(PotentialError::InfinitePotential { gamma, delta, dimension: self.dimension });
            }
        }
        match self.violations().as_slice() {
            [] => Ok(()),
            v => Err(PotentialError::InvalidParameters(v.join("; "))),
        }
    }

    /// Whether the family needs a sampled point cloud.
    pub fn is_random(&self) -> bool {
        matches!(self.family, Family::Lacoin { .. } | Family::PolyTail { .. } | Family::Ruess { .. })
    }

    /// Essential infimum of the potential: zero for the Poissonian families,
    /// `m` for Ruess, the constant for `Constant`.
    pub fn essential_infimum(&self) -> f64 {
        match self.family {
            Family::Ruess { m, .. } => m,
            Family::Constant { c } => c,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lacoin_finiteness_is_enforced() {
        let err = PotentialSpec::new(2, Family::Lacoin { gamma: 1.0, delta: 1.0 }).unwrap_err();
        assert!(matches!(err, PotentialError::InfinitePotential { .. }));
        assert!(err.to_string().contains("γ+δ−d > 0"));
        assert!(PotentialSpec::new(2, Family::Lacoin { gamma: 3.0, delta: 1.5 }).is_ok());
    }

    #[test]
    fn polytail_and_ruess_constraints() {
        assert!(PotentialSpec::new(2, Family::PolyTail { gamma: 2.0, c9: 1.0 }).is_err());
        assert!(PotentialSpec::new(2, Family::PolyTail { gamma: 3.0, c9: 1.0 }).is_ok());
        let bad = PotentialSpec { dimension: 2, family: Family::Ruess { nu: 1.0, m: 1.0, big_m: 1.0, width: 0.5 } };
        assert_eq!(bad.violations().len(), 1);
        let wrong_dim = PotentialSpec { dimension: 3, family: Family::Ruess { nu: 1.0, m: 0.0, big_m: 1.0, width: 0.5 } };
        assert!(wrong_dim.validate().is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = PotentialSpec::lacoin(2, 3.0, 1.5);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"dimension":2,"family":"lacoin","gamma":3.0,"delta":1.5}"#);
        let back: PotentialSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
