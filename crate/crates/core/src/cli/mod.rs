//! Command-line front end: `optimize`, `pip`, `field`, `simulate` and `replay`.
//!
//! Every command resolves a full parameter set (defaults, then the config
//! file, then flags), writes `data.csv`, `summary.json` and `manifest.json`
//! into the output directory, and exits with 0 on success, 2 on usage or
//! configuration errors and 1 on runtime failures.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::equilibrium::{gradient_field, pip, sweep, SweepMode};
use crate::error::{Error, Result};
use crate::model::Environment;
use crate::simulation::{run_ensemble, RNG_ALGORITHM};

pub use config::{load_config, ResolvedConfig};

pub const DATA_FILE: &str = "data.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Optimize,
    Pip,
    Field,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Optimize => "optimize",
            Command::Pip => "pip",
            Command::Field => "field",
            Command::Simulate => "simulate",
        }
    }
}

/// Record of one run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub artifact_version: String,
    /// Every configuration key with its resolved value.
    pub parameters: BTreeMap<String, String>,
    pub base_seed: u64,
    pub rng_algorithm: Option<String>,
    pub threads: Option<usize>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// CSV text and JSON summary produced by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: String,
    pub summary: serde_json::Value,
}

/// Round-trip float formatting: 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(out: &mut String, fields: &[f64]) {
    let row: Vec<String> = fields.iter().map(|&x| fmt_float(x)).collect();
    let _ = writeln!(out, "{}", row.join(","));
}

pub fn run_optimize(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let scenario = cfg.scenario()?;
    let (parameter, values, mode) = cfg.sweep_spec()?;
    let thetas = cfg.theta_grid()?;
    let result = sweep(parameter, &values, &thetas, &scenario, mode, cfg.resolution()?)?;

    let mut csv = String::from("theta,swept_param_value,p_star\n");
    let mut boundary = 0usize;
    let mut total = 0usize;
    for (i, &v) in result.parameter_values.iter().enumerate() {
        for (j, &theta) in result.theta_values.iter().enumerate() {
            for &p in &result.p_star[i][j] {
                csv_row(&mut csv, &[theta, v, p]);
                total += 1;
                if p == 0.0 || p == 1.0 {
                    boundary += 1;
                }
            }
        }
    }
    let clamped = result.clamped.iter().flatten().filter(|&&c| c).count();
    Ok(RunOutput {
        csv,
        summary: json!({
            "command": "optimize",
            "model": scenario.model.name(),
            "sweep_parameter": parameter.name(),
            "mode": mode,
            "parameter_points": values.len(),
            "theta_points": thetas.len(),
            "rows": total,
            "boundary_rows": boundary,
            "clamped_cells": clamped,
        }),
    })
}

pub fn run_pip(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let scenario = cfg.scenario()?;
    let theta = cfg.theta()?;
    let grid = pip(Environment::new(theta), &scenario, cfg.resolution()?)?;
    let mut csv = String::from("p_mutant,p_resident,sign\n");
    for (i, &pm) in grid.mutant_axis.iter().enumerate() {
        for (j, &pr) in grid.resident_axis.iter().enumerate() {
            csv_row(&mut csv, &[pm, pr, f64::from(grid.sign[i][j])]);
        }
    }
    let uninvadable: Vec<f64> = (0..grid.resident_axis.len())
        .filter(|&j| grid.uninvadable(j))
        .map(|j| grid.resident_axis[j])
        .collect();
    Ok(RunOutput {
        csv,
        summary: json!({
            "command": "pip",
            "model": scenario.model.name(),
            "theta": theta,
            "resolution": grid.resident_axis.len(),
            "stable_strategies": grid.stable_strategies(),
            "uninvadable_residents": uninvadable,
        }),
    })
}

pub fn run_field(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let scenario = cfg.scenario()?;
    let thetas = cfg.theta_grid()?;
    let ps = cfg.p_grid()?;
    let field = gradient_field(&thetas, &ps, &scenario)?;
    let mut csv = String::from("theta,p,gradient\n");
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for row in &field {
        for s in row {
            csv_row(&mut csv, &[s.theta.theta(), s.p.value(), s.value]);
            lo = lo.min(s.value);
            hi = hi.max(s.value);
        }
    }
    Ok(RunOutput {
        csv,
        summary: json!({
            "command": "field",
            "model": scenario.model.name(),
            "theta_points": thetas.len(),
            "p_points": ps.len(),
            "min_gradient": lo,
            "max_gradient": hi,
        }),
    })
}

pub fn run_simulate(cfg: &ResolvedConfig) -> Result<RunOutput> {
    let scenario = cfg.scenario()?;
    let sim = cfg.sim_config()?;
    let stats = run_ensemble(&sim, &scenario, cfg.initial_condition()?, sim.seed)?;
    let mut csv = String::from("event_index,theta,mean_p,std_p\n");
    for c in 0..stats.mean_p.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            stats.event_index[c],
            fmt_float(stats.theta[c]),
            fmt_float(stats.mean_p[c]),
            fmt_float(stats.std_p[c])
        );
    }
    let max = stats.mean_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = stats.mean_p.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(RunOutput {
        csv,
        summary: json!({
            "command": "simulate",
            "model": scenario.model.name(),
            "population_size": sim.population_size,
            "ensemble": sim.ensemble_size,
            "total_events": sim.total_events,
            "base_seed": sim.seed,
            "final_mean_p": stats.mean_p.last(),
            "min_mean_p": min,
            "max_mean_p": max,
        }),
    })
}

pub fn run_command(command: Command, cfg: &ResolvedConfig) -> Result<RunOutput> {
    match command {
        Command::Optimize => run_optimize(cfg),
        Command::Pip => run_pip(cfg),
        Command::Field => run_field(cfg),
        Command::Simulate => run_simulate(cfg),
    }
}

/// Runs `command` and writes its three output files into `out_dir`.
pub fn execute(command: Command, cfg: &ResolvedConfig, out_dir: &Path, threads: Option<usize>) -> Result<RunManifest> {
    let start = Instant::now();
    let output = match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            pool.install(|| run_command(command, cfg))?
        }
        None => run_command(command, cfg)?,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(DATA_FILE), &output.csv)?;
    std::fs::write(out_dir.join(SUMMARY_FILE), to_json(&output.summary)?)?;
    let manifest = RunManifest {
        command,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        parameters: cfg.values().clone(),
        base_seed: cfg.seed()?,
        rng_algorithm: (command == Command::Simulate).then(|| RNG_ALGORITHM.to_string()),
        threads,
        outputs: vec![DATA_FILE.into(), SUMMARY_FILE.into(), MANIFEST_FILE.into()],
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), to_json(&manifest)?)?;
    Ok(manifest)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

/// Reads a manifest and repeats its run into `out_dir`.
pub fn replay(manifest_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<RunManifest> {
    let text = std::fs::read_to_string(manifest_path)
        .map_err(|e| Error::Usage(format!("cannot read manifest `{}`: {e}", manifest_path.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("malformed manifest: {e}")))?;
    let cfg = ResolvedConfig::from_map(&manifest.parameters)?;
    execute(manifest.command, &cfg, out_dir, threads.or(manifest.threads))
}

#[derive(Debug, Parser)]
#[command(
    name = "polarization",
    version,
    about = "Group-interaction strategies under environmental change"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Risk model: `fixed` or `social`.
    #[arg(long)]
    model: Option<String>,
    /// Override any configuration key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum CliCommand {
    /// Optimal (or stable) strategies over environment and an optional parameter sweep.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// `MIN,MAX,COUNT` or a single value.
        #[arg(long, allow_hyphen_values = true)]
        theta_range: Option<String>,
        /// `NAME=MIN,MAX,COUNT`.
        #[arg(long, allow_hyphen_values = true)]
        param_sweep: Option<String>,
        /// `optimal` or `stable_set`.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Pairwise invasibility sign map at one environment.
    Pip {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        theta: Option<f64>,
        /// Grid points per axis.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Selection gradient over an environment x strategy grid.
    Field {
        #[command(flatten)]
        common: Common,
        /// `MIN,MAX,COUNT` or a single value.
        #[arg(long, allow_hyphen_values = true)]
        theta_grid: Option<String>,
        /// `MIN,MAX,COUNT` or a single value.
        #[arg(long)]
        p_grid: Option<String>,
    },
    /// Ensemble of individual-based copying simulations.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Population 200, ensemble 100, period and length 100 N.
        #[arg(long)]
        desk_scale: bool,
    },
    /// Repeat the run recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn split_grid(flag: &str, text: &str) -> Result<[String; 3]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [x] => Ok([x.to_string(), x.to_string(), "1".into()]),
        [lo, hi, n] => Ok([lo.to_string(), hi.to_string(), n.to_string()]),
        _ => Err(Error::Usage(format!(
            "--{flag}: expected `MIN,MAX,COUNT` or a single value, got `{text}`"
        ))),
    }
}

fn set_grid(cfg: &mut ResolvedConfig, flag: &str, text: &str, keys: [&str; 3]) -> Result<()> {
    let values = split_grid(flag, text)?;
    for (k, v) in keys.iter().zip(values.iter()) {
        cfg.set(k, v)?;
    }
    Ok(())
}

fn resolve_common(common: &Common) -> Result<ResolvedConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ResolvedConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("--set: expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(model) = &common.model {
        cfg.set("model", model)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let (command, common, cfg) = match cli.command {
        CliCommand::Replay { manifest, out, threads } => {
            replay(&manifest, &out, threads)?;
            return Ok(());
        }
        CliCommand::Optimize {
            common,
            theta_range,
            param_sweep,
            mode,
        } => {
            let mut cfg = resolve_common(&common)?;
            if let Some(text) = theta_range {
                set_grid(
                    &mut cfg,
                    "theta-range",
                    &text,
                    ["theta_min", "theta_max", "theta_points"],
                )?;
            }
            if let Some(text) = param_sweep {
                let (name, grid) = text
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("--param-sweep: expected NAME=MIN,MAX,COUNT, got `{text}`")))?;
                cfg.set("sweep", name.trim())?;
                set_grid(
                    &mut cfg,
                    "param-sweep",
                    grid,
                    ["sweep_min", "sweep_max", "sweep_points"],
                )?;
            }
            if let Some(mode) = mode {
                cfg.set("sweep_mode", &mode)?;
            }
            (Command::Optimize, common, cfg)
        }
        CliCommand::Pip {
            common,
            theta,
            resolution,
        } => {
            let mut cfg = resolve_common(&common)?;
            if let Some(theta) = theta {
                cfg.set("theta", &theta.to_string())?;
            }
            if let Some(r) = resolution {
                cfg.set("p_points", &r.to_string())?;
            }
            (Command::Pip, common, cfg)
        }
        CliCommand::Field {
            common,
            theta_grid,
            p_grid,
        } => {
            let mut cfg = resolve_common(&common)?;
            if let Some(text) = theta_grid {
                set_grid(
                    &mut cfg,
                    "theta-grid",
                    &text,
                    ["theta_min", "theta_max", "theta_points"],
                )?;
            }
            if let Some(text) = p_grid {
                set_grid(&mut cfg, "p-grid", &text, ["p_min", "p_max", "p_points"])?;
            }
            (Command::Field, common, cfg)
        }
        CliCommand::Simulate { common, desk_scale } => {
            let mut cfg = resolve_common(&common)?;
            if desk_scale {
                for (k, v) in [
                    ("N", "200"),
                    ("ensemble", "100"),
                    ("period", "100N"),
                    ("total_events", "100N"),
                ] {
                    cfg.set(k, v)?;
                }
            }
            (Command::Simulate, common, cfg)
        }
    };
    cfg.validate()?;
    if command == Command::Optimize
        && cfg.sweep_spec()?.2 == SweepMode::Optimal
        && cfg.model()? != crate::model::RiskModel::Fixed
    {
        return Err(Error::Usage(
            "optimal mode applies to the fixed-risk model only; use --mode stable_set".into(),
        ));
    }
    execute(command, &cfg, &common.out, common.threads)?;
    Ok(())
}

/// Entry point shared by the binary and the integration tests.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
