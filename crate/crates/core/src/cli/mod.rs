//! Command-line front end: configuration, sweeps and machine-readable output.

pub mod config;
pub mod output;
pub mod verify;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::error::Error;
use crate::estimator::{decoy_bounds, DecoyBounds};
use crate::keyrate::{Cutoff, KeyRatePoint};
use crate::scenario::{Scenario, Scheme};
pub use config::{Config, RunOptions};

/// Process exit status for each kind of failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Failure = 1,
    InvalidConfig = 2,
    VerificationFailed = 3,
    NonConvergence = 4,
}

impl ExitStatus {
    pub fn of(err: &Error) -> Self {
        match err {
            Error::Configuration(_) | Error::Domain { .. } => ExitStatus::InvalidConfig,
            Error::NonConvergence { .. } | Error::IllConditioned { .. } | Error::CutoffTooSmall { .. } => {
                ExitStatus::NonConvergence
            }
            _ => ExitStatus::Failure,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "decoyqkd", version, about = "Key rates of passive and active decoy-state QKD sources")]
pub struct Args {
    /// Flat `section.key = value` configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Seed of the Monte Carlo oracle (overrides run.seed)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Scheme name (overrides the configuration)
    #[arg(long, global = true, value_name = "NAME")]
    pub scheme: Option<String>,
    /// Distance in km for optimize and verify
    #[arg(long, global = true, value_name = "KM")]
    pub distance: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Optimized key rate over the distance grid, as CSV
    Sweep,
    /// Distance where the optimized key rate vanishes, as JSON
    Cutoff,
    /// Optimized parameters and bounds at one distance, as JSON
    Optimize,
    /// Run the self-check suites, as JSON
    Verify,
}

/// Distance used by `optimize` and `verify` when none is given.
pub const DEFAULT_DISTANCE_KM: f64 = 50.0;

/// Decoy-state bounds behind a passive point, for the JSON reports.
fn bounds_at(sc: &Scenario, point: &KeyRatePoint) -> Option<DecoyBounds> {
    if sc.fluctuations.is_some() {
        return None;
    }
    let x: Vec<f64> = point.parameters.iter().map(|p| p.value).collect();
    let obs = sc.passive_observations(&x, point.distance_km).ok()?;
    decoy_bounds(&obs, sc.channel.background_error).ok()
}

#[derive(Serialize)]
struct PointReport<'a> {
    command: &'static str,
    inputs: serde_json::Map<String, serde_json::Value>,
    point: &'a KeyRatePoint,
    bounds: Option<DecoyBounds>,
}

#[derive(Serialize)]
struct CutoffReport<'a> {
    command: &'static str,
    inputs: serde_json::Map<String, serde_json::Value>,
    cutoff_km: f64,
    resolution_km: f64,
    last_positive: &'a KeyRatePoint,
    bounds: Option<DecoyBounds>,
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    command: &'static str,
    inputs: serde_json::Map<String, serde_json::Value>,
    passed: bool,
    report: &'a verify::VerifyReport,
}

fn inputs(cfg: &Config) -> serde_json::Map<String, serde_json::Value> {
    cfg.pairs().into_iter().map(|(k, v)| (k, serde_json::Value::String(v))).collect()
}

/// Loads the configuration named by `args`, applying command-line overrides.
pub fn load_config(args: &Args) -> crate::Result<Config> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?,
        None => String::new(),
    };
    let scheme = args.scheme.as_deref().map(str::parse::<Scheme>).transpose()?;
    let mut cfg = Config::parse(&text, scheme)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(d) = args.distance {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::Configuration(format!("--distance {d} must be a non-negative number")));
        }
    }
    Ok(cfg)
}

/// Output text of one command and whether it counts as a failed verification.
pub fn execute(args: &Args, cfg: &Config) -> crate::Result<(String, bool)> {
    let sc = &cfg.scenario;
    let distance = args.distance.unwrap_or(DEFAULT_DISTANCE_KM);
    match args.command {
        Command::Sweep => {
            let rows = sc.sweep()?;
            let axes: Vec<String> = sc.axes().into_iter().map(|a| a.name).collect();
            Ok((output::sweep_csv(&rows, &axes, &cfg.pairs()), false))
        }
        Command::Cutoff => {
            let Cutoff { distance_km, last_positive } = sc.cutoff_distance()?;
            info!("{} cutoff at {distance_km:.1} km", sc.scheme);
            let report = CutoffReport {
                command: "cutoff",
                inputs: inputs(cfg),
                cutoff_km: (distance_km * 10.0).round() / 10.0,
                resolution_km: sc.cutoff.resolution_km,
                bounds: bounds_at(sc, &last_positive),
                last_positive: &last_positive,
            };
            Ok((output::to_json(&report)?, false))
        }
        Command::Optimize => {
            let point = sc.optimize(distance, None)?;
            let report = PointReport {
                command: "optimize",
                inputs: inputs(cfg),
                bounds: bounds_at(sc, &point),
                point: &point,
            };
            Ok((output::to_json(&report)?, false))
        }
        Command::Verify => {
            let report = verify::run_verify(sc, &cfg.run, distance);
            let passed = report.all_passed();
            let out = VerifyOutput {
                command: "verify",
                inputs: inputs(cfg),
                passed,
                report: &report,
            };
            Ok((output::to_json(&out)?, !passed))
        }
    }
}

/// Runs the command line `argv` and returns the process exit status.
pub fn run<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitStatus::InvalidConfig } else { ExitStatus::Success };
        }
    };
    let result = load_config(&args).and_then(|cfg| execute(&args, &cfg));
    let (text, verify_failed) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::of(&e);
        }
    };
    let written = match &args.out {
        Some(path) => std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitStatus::Failure;
    }
    if verify_failed {
        eprintln!("verification failed");
        ExitStatus::VerificationFailed
    } else {
        ExitStatus::Success
    }
}
