//! Command-line harness: reads a TOML run configuration, drives the
//! simulator and estimators, and writes CSV, JSON-lines and a manifest into
//! a run directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "sburgers", version, about = "Stochastic Burgers simulation and estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate paths and write snapshots and jump logs.
    Simulate(CommonArgs),
    /// Check the Lyapunov inequalities on simulated states.
    Verify(CommonArgs),
    /// Run one estimator.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides `experiment.estimator`.
        #[arg(long)]
        estimator: Option<String>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for ensembles.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Outcome of a command: the manifest, if the run directory was opened,
/// and the command result.
pub struct RunResult {
    pub manifest: Option<RunManifest>,
    pub result: Result<(), CliError>,
}

impl RunResult {
    pub fn exit_code(&self) -> ExitCode {
        match &self.result {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => e.exit_code(),
        }
    }
}

fn prepare(args: &CommonArgs, estimator: Option<&String>) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(e) = estimator {
        cfg.experiment.estimator = Some(e.clone());
    }
    if let Some(e) = &cfg.experiment.estimator {
        if !commands::ESTIMATORS.contains(&e.as_str()) {
            return Err(CliError::Usage(format!(
                "unknown estimator `{e}`; valid names: {}",
                commands::ESTIMATORS.join(", ")
            )));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    }
    let dir = match &cfg.output_dir {
        Some(d) => d.clone(),
        None => PathBuf::from("runs").join(&cfg.hash()[..12]),
    };
    Ok((cfg, dir))
}

fn execute(cli: &Cli) -> RunResult {
    let (name, args, estimator) = match &cli.command {
        Command::Simulate(a) => ("simulate", a, None),
        Command::Verify(a) => ("verify", a, None),
        Command::Estimate { common, estimator } => ("estimate", common, estimator.clone()),
    };
    let opened = prepare(args, estimator.as_ref()).and_then(|(cfg, dir)| Context::new(cfg, dir));
    let mut ctx = match opened {
        Ok(c) => c,
        Err(e) => return RunResult { manifest: None, result: Err(e) },
    };
    let seed = ctx.cfg.seed;
    let result = match name {
        "simulate" => commands::simulate(&mut ctx),
        "verify" => commands::verify(&mut ctx),
        _ => match ctx.cfg.experiment.estimator.clone() {
            Some(e) => commands::estimate(&mut ctx, &e),
            None => Err(CliError::Usage(format!(
                "no estimator given; valid names: {}",
                commands::ESTIMATORS.join(", ")
            ))),
        },
    };
    let label = match &cli.command {
        Command::Estimate { .. } => format!("estimate:{}", ctx.cfg.experiment.estimator.clone().unwrap_or_default()),
        _ => name.to_string(),
    };
    match ctx.out.finish(&label, seed) {
        Ok(m) => RunResult { manifest: Some(m), result },
        Err(e) => RunResult { manifest: None, result: result.and(Err(e)) },
    }
}

/// Runs a parsed command line, inside a dedicated thread pool when
/// `--threads` is given.
pub fn run(cli: &Cli) -> RunResult {
    let threads = match &cli.command {
        Command::Simulate(a) | Command::Verify(a) => a.threads,
        Command::Estimate { common, .. } => common.threads,
    };
    match threads {
        #[cfg(feature = "parallel")]
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli)),
            Err(e) => RunResult { manifest: None, result: Err(CliError::Usage(format!("--threads: {e}"))) },
        },
        #[cfg(not(feature = "parallel"))]
        Some(0) => RunResult { manifest: None, result: Err(CliError::Usage("--threads must be positive".into())) },
        _ => execute(cli),
    }
}
