//! Command-line front end: sample and HURDAT2 ingestion, run configuration,
//! experiment commands and result files.
//!
//! Exit codes: `0` success, `1` invalid input or configuration, `2` a
//! geodesic computation did not converge (results are still written and
//! flagged with `"converged": false`).

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod error;
pub mod hurdat;
pub mod output;
pub mod samples;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use error::CliError;

use crate::config::RunConfig;
use crate::output::{write_metadata, write_report, Metadata, Report};

#[derive(Debug, Parser)]
#[command(name = "dkappa", version, about = "Bandwidth-robust density comparison on the circle and sphere")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "DKAPPA_CONFIG")]
    pub config: Option<PathBuf>,

    /// Overrides `test.seed` from the configuration.
    #[arg(long, global = true, env = "DKAPPA_SEED")]
    pub seed: Option<u64>,

    /// Abort on the first malformed HURDAT2 storm instead of skipping it.
    #[arg(long, global = true, env = "DKAPPA_STRICT")]
    pub strict: bool,

    /// Output directory; overrides `io.output_dir`.
    #[arg(long, short, global = true, env = "DKAPPA_OUTPUT")]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Density estimates with coefficients and gridded values.
    Estimate { inputs: Vec<PathBuf> },
    /// d_kappa and baseline distances between two samples.
    Compare { inputs: Vec<PathBuf> },
    /// Bootstrap two-sample test.
    Test { inputs: Vec<PathBuf> },
    /// Power table over the configured mixture scenarios.
    Simulate,
    /// d_kappa and Fisher-Rao over a grid of bandwidth pairs.
    BandwidthGrid { inputs: Vec<PathBuf> },
    /// Extracts storm positions from a HURDAT2 file as sphere samples.
    Hurdat { input: PathBuf },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate { .. } => "estimate",
            Command::Compare { .. } => "compare",
            Command::Test { .. } => "test",
            Command::Simulate => "simulate",
            Command::BandwidthGrid { .. } => "bandwidth-grid",
            Command::Hurdat { .. } => "hurdat",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub converged: bool,
    pub output_dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            0
        } else {
            2
        }
    }
}

/// Configuration after applying the file, then flags and environment.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.test.seed = seed;
    }
    if let Some(out) = &cli.output {
        cfg.io.output_dir = out.clone();
    }
    Ok(cfg)
}

pub fn report(cli: &Cli, cfg: &RunConfig) -> Result<Report, CliError> {
    let inputs = |given: &Vec<PathBuf>| if given.is_empty() { cfg.io.inputs.clone() } else { given.clone() };
    match &cli.command {
        Command::Estimate { inputs: i } => commands::estimate(cfg, &inputs(i)),
        Command::Compare { inputs: i } => commands::compare(cfg, &inputs(i)),
        Command::Test { inputs: i } => commands::test(cfg, &inputs(i)),
        Command::Simulate => commands::simulate(cfg),
        Command::BandwidthGrid { inputs: i } => commands::bandwidth_grid(cfg, &inputs(i)),
        Command::Hurdat { input } => commands::hurdat(cfg, input, cli.strict),
    }
}

pub fn run(cli: &Cli, args: Vec<String>) -> Result<Outcome, CliError> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let cfg = resolve_config(cli)?;
    let rep = report(cli, &cfg)?;
    let dir = cfg.io.output_dir.clone();
    let mut written = write_report(&dir, &rep, &cfg)?;
    let meta = Metadata {
        command: rep.command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        args,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        output_dir: dir.display().to_string(),
        result_file: format!("{}.json", rep.command),
        files: written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    written.push(write_metadata(&dir, &meta)?);
    Ok(Outcome {
        converged: rep.converged,
        output_dir: dir,
        written,
    })
}
