//! Experiment orchestration for `rp-lab`: configuration, validation and
//! emission of the CSV tables and run manifest.

pub mod config;
pub mod run;

pub use config::{describe, validate, violations, ConfigError, ExperimentConfig, Kind, RawConfig, TiltMode};
pub use run::{blob_hash, compute, run, Artifact, Manifest, RunError};
