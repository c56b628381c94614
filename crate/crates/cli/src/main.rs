use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rplab_cli::{describe, run, violations, ExperimentConfig, Kind, RawConfig, RunError};

#[derive(Parser)]
#[command(name = "rp-lab", version, about = "Brownian motion in random potentials: experiments and tables")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Moments, covariances and exponential moments of V(0).
    PotentialStats(Params),
    /// Survival probabilities and their decay rate.
    Survival(Params),
    /// Lyapunov exponents over a λ grid.
    Lyapunov(Params),
    /// Directional deviation from the averaged shape.
    Shape(Params),
    /// Rate function at x.
    Rate(Params),
    /// Ballistic or sub-ballistic verdict for a drift.
    Phase(Params),
    /// Principal Dirichlet eigenvalues on balls.
    Eigen(Params),
    /// Empirical endpoint large deviations.
    LdpCheck(Params),
}

/// Experiment settings. Lists are comma-separated.
#[derive(Args, Default)]
struct Params {
    #[arg(long, value_name = "zero|constant|lacoin|polytail|ruess")]
    family: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Constant potential value.
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    c9: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    /// Ruess low value.
    #[arg(long)]
    m: Option<String>,
    /// Ruess high value.
    #[arg(long = "M")]
    big_m: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "t-max")]
    t_max: Option<String>,
    #[arg(long)]
    bridge: Option<String>,
    #[arg(long = "n-env")]
    n_env: Option<String>,
    #[arg(long = "n-paths")]
    n_paths: Option<String>,
    /// Times.
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    scales: Option<String>,
    #[arg(long)]
    directions: Option<String>,
    /// Ball radii.
    #[arg(long = "R")]
    radii: Option<String>,
    /// Grid spacing.
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    v: Option<String>,
    #[arg(long)]
    r: Option<String>,
    #[arg(long)]
    drift: Option<String>,
    #[arg(long)]
    lags: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    halo: Option<String>,
    #[arg(long, value_name = "default|adaptive")]
    tilt: Option<String>,
    #[arg(long = "tilt-floor")]
    tilt_floor: Option<String>,
    #[arg(long = "n-points")]
    n_points: Option<String>,
}

impl Params {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("family", &self.family),
            ("d", &self.d),
            ("gamma", &self.gamma),
            ("delta", &self.delta),
            ("c", &self.c),
            ("c9", &self.c9),
            ("nu", &self.nu),
            ("m", &self.m),
            ("M", &self.big_m),
            ("width", &self.width),
            ("dt", &self.dt),
            ("t_max", &self.t_max),
            ("bridge", &self.bridge),
            ("n_env", &self.n_env),
            ("n_paths", &self.n_paths),
            ("t", &self.t),
            ("lambda", &self.lambda),
            ("scales", &self.scales),
            ("directions", &self.directions),
            ("R", &self.radii),
            ("h", &self.h),
            ("x", &self.x),
            ("v", &self.v),
            ("r", &self.r),
            ("drift", &self.drift),
            ("lags", &self.lags),
            ("s", &self.s),
            ("halo", &self.halo),
            ("tilt", &self.tilt),
            ("tilt_floor", &self.tilt_floor),
            ("n_points", &self.n_points),
        ]
    }
}

impl Command {
    fn split(&self) -> (Kind, &Params) {
        match self {
            Command::PotentialStats(p) => (Kind::PotentialStats, p),
            Command::Survival(p) => (Kind::Survival, p),
            Command::Lyapunov(p) => (Kind::Lyapunov, p),
            Command::Shape(p) => (Kind::Shape, p),
            Command::Rate(p) => (Kind::Rate, p),
            Command::Phase(p) => (Kind::Phase, p),
            Command::Eigen(p) => (Kind::Eigen, p),
            Command::LdpCheck(p) => (Kind::LdpCheck, p),
        }
    }
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

fn resolve(cli: &Cli) -> Result<(RawConfig, ExperimentConfig), anyhow::Error> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::parse_file(path)?,
        None => RawConfig::default(),
    };
    let (kind, params) = cli.command.split();
    raw.set_flag("kind", kind.name());
    for (key, value) in params.pairs() {
        if let Some(v) = value {
            raw.set_flag(key, v.clone());
        }
    }
    if let Some(s) = cli.seed {
        raw.set_flag("seed", s.to_string());
    }
    if let Some(w) = cli.workers {
        raw.set_flag("workers", w.to_string());
    }
    if let Some(o) = &cli.out {
        raw.set_flag("out", o.display().to_string());
    }
    let config = ExperimentConfig::from_raw(&raw)?;
    Ok((raw, config))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let (raw, config) = resolve(cli).map_err(Failure::Invalid)?;
    let v = violations(&config);
    if !v.is_empty() {
        return Err(Failure::Invalid(anyhow::anyhow!("invalid configuration:\n{}", describe(&v, &raw).join("\n"))));
    }
    let manifest = run(&config).map_err(|e| match e {
        RunError::Invalid(_) => Failure::Invalid(e.into()),
        other => Failure::Runtime(anyhow::Error::from(other).context(format!("{} failed", config.kind.name()))),
    })?;
    let written = serde_json::to_string(&manifest.outputs.iter().map(|o| &o.file).collect::<Vec<_>>())
        .context("listing outputs")
        .map_err(Failure::Runtime)?;
    println!("wrote {written} and manifest.json to {}", config.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
