//! Command-line driver: configuration, experiment dispatch, tables and run manifests.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

pub use config::{validate_config, validate_tree, Experiment, ExperimentConfig, Format, Overrides};
pub use error::{CliError, CliResult};
pub use experiments::{Outcome, Table};
pub use output::{manifest_path, RunManifest};

#[derive(Debug, Parser)]
#[command(
    name = "geodeph",
    version,
    about = "Noise-induced dephasing of adiabatic geometric phases"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample noise paths and compare their autocovariance with the kernel.
    NoiseValidate(RunArgs),
    /// Single-qubit ensemble: coherence, decoherence factor, magnetization.
    AgpDephase(RunArgs),
    /// Bell-state fidelity of the geometric controlled-phase gate.
    GateFidelity(RunArgs),
    /// Success probability and run counts of noisy period finding.
    ShorScan(RunArgs),
}

impl Command {
    pub fn split(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::NoiseValidate(a) => (Experiment::NoiseValidate, a),
            Command::AgpDephase(a) => (Experiment::AgpDephase, a),
            Command::GateFidelity(a) => (Experiment::GateFidelity, a),
            Command::ShorScan(a) => (Experiment::ShorScan, a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML config, or a run manifest to replay.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub realizations: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    pub format: Option<String>,
    /// Treat adiabaticity warnings as errors (exit 3).
    #[arg(long)]
    pub strict_adiabatic: bool,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            realizations: self.realizations,
            threads: self.threads,
            out: self.out.clone(),
            format: self.format.as_deref().and_then(Format::parse),
            strict_adiabatic: self.strict_adiabatic,
        }
    }
}

pub const SEED_SCHEME: &str =
    "realization i uses splitmix64(master_seed, i); every sweep row reuses the master seed";

#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: Outcome,
    pub manifest: RunManifest,
    pub output: PathBuf,
    pub manifest_path: PathBuf,
}

/// Validated configuration for one invocation.
pub fn resolve(
    experiment: Experiment,
    config: Option<&Path>,
    overrides: &Overrides,
) -> CliResult<ExperimentConfig> {
    let mut tree = match config {
        Some(p) => config::load_tree(p)?,
        None => Value::Object(Map::new()),
    };
    config::apply_overrides(&mut tree, experiment, overrides)?;
    validate_tree(&tree).map_err(CliError::Config)
}

/// Runs a validated configuration and writes the table and its manifest.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let clock = Instant::now();
    let threads = cfg.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let outcome = pool.install(|| experiments::run(cfg))?;
    let out = cfg.output_path.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "{}.{}",
            cfg.experiment.name(),
            cfg.format.extension()
        ))
    });
    output::write_table(&outcome.table, cfg.format, &out)?;
    let manifest = RunManifest {
        tool: "geodeph".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.name().into(),
        config: cfg.tree.clone(),
        derived: outcome.derived.clone(),
        seeds: output::Seeds {
            master_seed: cfg.master_seed,
            scheme: SEED_SCHEME.into(),
        },
        warnings: outcome.warnings.clone(),
        threads,
        output: out.clone(),
        format: cfg.format,
        rows: outcome.table.rows.len(),
        started_unix_s: started,
        wall_clock_s: clock.elapsed().as_secs_f64(),
    };
    let mpath = manifest_path(&out);
    output::write_manifest(&manifest, &mpath)?;
    Ok(RunReport {
        outcome,
        manifest,
        output: out,
        manifest_path: mpath,
    })
}

/// Entry point behind `main`; returns the process exit code.
pub fn main_with(cli: Cli) -> u8 {
    let (experiment, args) = cli.command.split();
    let result = resolve(experiment, args.config.as_deref(), &args.overrides())
        .and_then(|cfg| execute(&cfg));
    match result {
        Ok(report) => {
            for w in &report.manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{experiment}: {} rows -> {} (manifest {})",
                report.outcome.table.rows.len(),
                report.output.display(),
                report.manifest_path.display()
            );
            error::EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
