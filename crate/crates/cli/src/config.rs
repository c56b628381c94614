//! Experiment configuration: a `key = value` file merged with command-line
//! overrides, resolved into a typed [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rplab::lyapunov_ldp::{AlphaSettings, TiltRule, DEFAULT_LAMBDAS};
use rplab::feynman_kac::FkConfig;
use rplab::paths::PathConfig;
use rplab::potentials::{Family, PotentialSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PotentialStats,
    Survival,
    Lyapunov,
    Shape,
    Rate,
    Phase,
    Eigen,
    LdpCheck,
}

impl Kind {
    pub const ALL: [Kind; 8] = [Kind::PotentialStats, Kind::Survival, Kind::Lyapunov, Kind::Shape, Kind::Rate, Kind::Phase, Kind::Eigen, Kind::LdpCheck];

    pub fn name(self) -> &'static str {
        match self {
            Kind::PotentialStats => "potential-stats",
            Kind::Survival => "survival",
            Kind::Lyapunov => "lyapunov",
            Kind::Shape => "shape",
            Kind::Rate => "rate",
            Kind::Phase => "phase",
            Kind::Eigen => "eigen",
            Kind::LdpCheck => "ldp-check",
        }
    }
}

impl FromStr for Kind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment kind '{s}', expected one of {}", names.join(", "))
        })
    }
}

/// Tilt speed rule for hitting problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiltMode {
    /// `max(√(2λ), floor)` toward the target.
    Default,
    /// The exponent estimated at the previous scale.
    Adaptive,
}

impl FromStr for TiltMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "default" => Ok(TiltMode::Default),
            "adaptive" => Ok(TiltMode::Adaptive),
            _ => Err(format!("unknown tilt '{s}', expected default or adaptive")),
        }
    }
}

/// Where a setting came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => write!(f, "command line"),
            Origin::Default => write!(f, "default"),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("{origin}: {key}: {message}")]
    Value { key: String, origin: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
}

/// Every key a config file or flag may set.
pub const KEYS: &[&str] = &[
    "kind", "family", "d", "gamma", "delta", "c", "c9", "nu", "m", "M", "width", "dt", "t_max", "bridge", "n_env", "n_paths", "t", "lambda", "scales",
    "directions", "R", "h", "x", "v", "r", "drift", "lags", "s", "halo", "tilt", "tilt_floor", "n_points", "seed", "out", "workers",
];

/// Unparsed settings with their origins. Later inserts win.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Origin)>,
}

impl RawConfig {
    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse_str(&text, path)
    }

    /// `key = value` per line; `#` starts a comment.
    pub fn parse_str(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { path: path.display().to_string(), line: line_no, message };
            let (k, v) = body.split_once('=').ok_or_else(|| syntax(format!("expected 'key = value', got '{body}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(syntax(format!("unknown key '{k}'")));
            }
            if v.is_empty() {
                return Err(syntax(format!("key '{k}' has no value")));
            }
            if raw.entries.get(k).is_some_and(|(_, o)| matches!(o, Origin::File { .. })) {
                return Err(syntax(format!("key '{k}' is set twice")));
            }
            raw.entries.insert(k.to_string(), (v.to_string(), Origin::File { path: path.to_path_buf(), line: line_no }));
        }
        Ok(raw)
    }

    pub fn set_flag(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.entries.insert(key.to_string(), (value.into(), Origin::Flag));
    }

    pub fn origin(&self, key: &str) -> Origin {
        self.entries.get(key).map_or(Origin::Default, |(_, o)| o.clone())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .parse()
                .map(Some)
                .map_err(|e: T::Err| ConfigError::Value { key: key.into(), origin: origin.to_string(), message: format!("cannot parse '{v}': {e}") }),
        }
    }

    fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, origin)) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|e| ConfigError::Value { key: key.into(), origin: origin.to_string(), message: format!("cannot parse list '{v}': {e}") }),
        }
    }

    fn list_or(&self, key: &str, default: Vec<f64>) -> Result<Vec<f64>, ConfigError> {
        Ok(self.list(key)?.unwrap_or(default))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub potential: PotentialSpec,
    pub path: PathConfig,
    pub n_env: usize,
    pub n_paths: usize,
    /// Survival times (survival, ldp-check).
    pub times: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub scales: Vec<f64>,
    /// Number of equiangular directions; 0 selects the default grid.
    pub directions: usize,
    /// Ball radii (eigen).
    pub radii: Vec<f64>,
    /// Grid spacing; `None` uses `R/64`.
    pub h: Option<f64>,
    /// Target point for lyapunov and rate.
    pub x: Vec<f64>,
    /// Endpoint velocity for ldp-check.
    pub v: Vec<f64>,
    /// Ball radius for ldp-check.
    pub r: f64,
    /// External drift for phase.
    pub drift: Vec<f64>,
    pub lags: Vec<f64>,
    pub s: Vec<f64>,
    pub halo: Vec<f64>,
    pub tilt: TiltMode,
    pub tilt_floor: f64,
    pub n_points: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
}

fn family_from(raw: &RawConfig, name: &str) -> Result<Family, ConfigError> {
    Ok(match name {
        "zero" => Family::Zero,
        "constant" => Family::Constant { c: raw.get_or("c", 1.0)? },
        "lacoin" => Family::Lacoin { gamma: raw.get_or("gamma", 3.0)?, delta: raw.get_or("delta", 1.5)? },
        "polytail" => Family::PolyTail { gamma: raw.get_or("gamma", 3.0)?, c9: raw.get_or("c9", 1.0)? },
        "ruess" => Family::Ruess { nu: raw.get_or("nu", 1.0)?, m: raw.get_or("m", 0.1)?, big_m: raw.get_or("M", 1.0)?, width: raw.get_or("width", 0.5)? },
        other => {
            return Err(ConfigError::Value {
                key: "family".into(),
                origin: raw.origin("family").to_string(),
                message: format!("unknown family '{other}', expected zero, constant, lacoin, polytail or ruess"),
            })
        }
    })
}

fn unit(d: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    if d > 0 {
        e[0] = 1.0;
    }
    e
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let kind = raw.get::<Kind>("kind")?.ok_or_else(|| ConfigError::Value {
            key: "kind".into(),
            origin: Origin::Default.to_string(),
            message: "no experiment kind given".into(),
        })?;
        let d: usize = raw.get_or("d", 2)?;
        let family = family_from(raw, &raw.get_or("family", "zero".to_string())?)?;
        let path = PathConfig::new(raw.get_or("dt", 0.01)?, raw.get_or("t_max", 50.0)?).with_bridge(raw.get_or("bridge", true)?);
        Ok(Self {
            kind,
            potential: PotentialSpec { dimension: d, family },
            path,
            n_env: raw.get_or("n_env", 10)?,
            n_paths: raw.get_or("n_paths", 1000)?,
            times: raw.list_or("t", vec![1.0, 2.0, 4.0])?,
            lambdas: raw.list_or("lambda", DEFAULT_LAMBDAS.to_vec())?,
            scales: raw.list_or("scales", vec![8.0, 16.0, 32.0])?,
            directions: raw.get_or("directions", 0)?,
            radii: raw.list_or("R", vec![1.0])?,
            h: raw.get("h")?,
            x: raw.list_or("x", unit(d))?,
            v: raw.list_or("v", unit(d))?,
            r: raw.get_or("r", 0.25)?,
            drift: raw.list_or("drift", unit(d))?,
            lags: raw.list_or("lags", vec![2.0, 4.0, 8.0, 16.0])?,
            s: raw.list_or("s", vec![0.5, 1.0])?,
            halo: raw.list_or("halo", vec![0.0, 1.0])?,
            tilt: raw.get_or("tilt", TiltMode::Adaptive)?,
            tilt_floor: raw.get_or("tilt_floor", if family_is_random(&family) { 0.5 } else { 0.0 })?,
            n_points: raw.get_or("n_points", 64)?,
            seed: raw.get_or("seed", 0)?,
            out: raw.get_or("out", PathBuf::from("rp-lab-out"))?,
            workers: raw.get_or("workers", 1)?,
        })
    }

    pub fn fk(&self) -> FkConfig {
        FkConfig { bridge_correction: self.path.bridge_correction, ..FkConfig::new(self.path.dt, self.path.t_max, self.seed) }
    }

    pub fn alpha_settings(&self) -> AlphaSettings {
        AlphaSettings {
            lambdas: self.lambdas.clone(),
            scales: self.scales.clone(),
            tilt: match self.tilt {
                TiltMode::Default => TiltRule::Default { floor: self.tilt_floor },
                TiltMode::Adaptive => TiltRule::Adaptive { floor: self.tilt_floor },
            },
            ..AlphaSettings::new(self.n_env, self.n_paths, self.fk())
        }
    }

    /// Grid spacing for radius `radius`.
    pub fn spacing(&self, radius: f64) -> f64 {
        self.h.unwrap_or(radius / 64.0)
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn family_is_random(f: &Family) -> bool {
    matches!(f, Family::Lacoin { .. } | Family::PolyTail { .. } | Family::Ruess { .. })
}

/// One failed invariant, with the keys it concerns.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub keys: Vec<&'static str>,
    pub message: String,
}

fn point_check(out: &mut Vec<Violation>, key: &'static str, p: &[f64], d: usize) {
    if p.len() != d {
        out.push(Violation { keys: vec![key, "d"], message: format!("{key} has {} coordinates, expected d = {d}", p.len()) });
    } else if p.iter().any(|v| !v.is_finite()) {
        out.push(Violation { keys: vec![key], message: format!("{key} must be finite") });
    }
}

fn grid_check(out: &mut Vec<Violation>, key: &'static str, g: &[f64]) {
    if g.is_empty() {
        out.push(Violation { keys: vec![key], message: format!("{key} grid is empty") });
    } else if g.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        out.push(Violation { keys: vec![key], message: format!("{key} values must be positive and finite") });
    }
}

fn writable(dir: &Path) -> Result<(), String> {
    let mut probe = dir;
    loop {
        if probe.exists() {
            let meta = std::fs::metadata(probe).map_err(|e| e.to_string())?;
            if !meta.is_dir() {
                return Err(format!("{} is not a directory", probe.display()));
            }
            if meta.permissions().readonly() {
                return Err(format!("{} is read-only", probe.display()));
            }
            return Ok(());
        }
        match probe.parent() {
            Some(p) if !p.as_os_str().is_empty() => probe = p,
            _ => return Ok(()),
        }
    }
}

/// Every violated invariant, with the keys involved.
pub fn violations(config: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let spec = &config.potential;
    let d = spec.dimension;
    let family_keys: Vec<&'static str> = match spec.family {
        Family::Lacoin { .. } => vec!["gamma", "delta", "d"],
        Family::PolyTail { .. } => vec!["gamma", "c9", "d"],
        Family::Ruess { .. } => vec!["nu", "m", "M", "width", "d"],
        Family::Constant { .. } => vec!["c"],
        Family::Zero => vec!["d"],
    };
    out.extend(spec.violations().into_iter().map(|message| Violation { keys: family_keys.clone(), message }));
    if !(1..=3).contains(&d) {
        out.push(Violation { keys: vec!["d"], message: format!("d must be 1, 2 or 3, got {d}") });
    }
    for message in config.path.violations(d) {
        let keys = if message.contains("exceeds") { vec!["dt", "t_max"] } else if message.starts_with("dt") { vec!["dt"] } else { vec!["t_max"] };
        out.push(Violation { keys, message });
    }
    for (key, v) in [("n_env", config.n_env), ("n_paths", config.n_paths), ("workers", config.workers)] {
        if v < 1 {
            out.push(Violation { keys: vec![key], message: format!("{key} must be at least 1, got {v}") });
        }
    }
    if let Err(e) = writable(&config.out) {
        out.push(Violation { keys: vec!["out"], message: format!("output directory not writable: {e}") });
    }
    match config.kind {
        Kind::PotentialStats => {
            if config.n_env < 2 {
                out.push(Violation { keys: vec!["n_env"], message: "potential-stats needs n_env >= 2".into() });
            }
            grid_check(&mut out, "lags", &config.lags);
            if config.s.is_empty() || config.halo.is_empty() || config.halo.iter().any(|h| !(*h >= 0.0)) {
                out.push(Violation { keys: vec!["s", "halo"], message: "s and halo grids must be non-empty with halo >= 0".into() });
            }
        }
        Kind::Survival => grid_check(&mut out, "t", &config.times),
        Kind::Lyapunov | Kind::Shape | Kind::Rate | Kind::Phase => {
            for message in config.alpha_settings().violations() {
                let keys = if message.contains("scale") { vec!["scales"] } else if message.contains("lambda") { vec!["lambda"] } else { vec!["tilt_floor"] };
                out.push(Violation { keys, message });
            }
            match config.kind {
                Kind::Lyapunov | Kind::Rate => {
                    point_check(&mut out, "x", &config.x, d);
                    if config.x.iter().all(|v| *v == 0.0) {
                        out.push(Violation { keys: vec!["x"], message: "x must be non-zero".into() });
                    }
                }
                Kind::Phase => point_check(&mut out, "drift", &config.drift, d),
                Kind::Shape => {
                    if config.n_env < 2 {
                        out.push(Violation { keys: vec!["n_env"], message: "shape needs n_env >= 2".into() });
                    }
                    if config.lambdas.len() != 1 {
                        out.push(Violation { keys: vec!["lambda"], message: format!("shape takes exactly one lambda, got {}", config.lambdas.len()) });
                    }
                    if config.directions != 0 && config.directions < 8 {
                        out.push(Violation { keys: vec!["directions"], message: format!("shape needs at least 8 directions, got {}", config.directions) });
                    }
                }
                _ => {}
            }
        }
        Kind::Eigen => {
            grid_check(&mut out, "R", &config.radii);
            if let Some(h) = config.h {
                if !(h > 0.0 && config.radii.iter().all(|r| h <= r / 16.0 * (1.0 + 1e-12))) {
                    out.push(Violation { keys: vec!["h", "R"], message: format!("h must be positive and at most R/16 for every radius, got {h}") });
                }
            }
        }
        Kind::LdpCheck => {
            grid_check(&mut out, "t", &config.times);
            point_check(&mut out, "v", &config.v, d);
            if !(config.r > 0.0) {
                out.push(Violation { keys: vec!["r"], message: format!("r must be positive, got {}", config.r) });
            }
        }
    }
    out
}

/// Messages of every violated invariant; empty iff the config is runnable.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    violations(config).into_iter().map(|v| v.message).collect()
}

/// Violations prefixed with where the offending keys were set.
pub fn describe(violations: &[Violation], raw: &RawConfig) -> Vec<String> {
    violations
        .iter()
        .map(|v| {
            let places: Vec<String> = v.keys.iter().map(|k| format!("{k} ({})", raw.origin(k))).collect();
            format!("{}: {}", places.join(", "), v.message)
        })
        .collect()
}
