//! Simulation and estimation of Brownian motion in stationary random potentials.

pub mod feynman_kac;
pub mod lyapunov_ldp;
pub mod paths;
pub mod potentials;
pub mod quad;
pub mod rng;
pub mod spectrum;
pub mod stats;
