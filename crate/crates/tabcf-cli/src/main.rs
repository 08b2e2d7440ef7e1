//! Command-line surface for the counterfactual pipeline: train the models,
//! generate counterfactuals with any method, evaluate result files, run
//! the proximity-weight ablation grid, compare per-feature utilization,
//! and generate synthetic datasets.
//!
//! Every command reads one TOML config (all fields optional, all
//! overridable with flags), writes only under the configured output
//! directory, and is a pure function of (config, seed): reruns produce
//! byte-identical artifacts.

mod ablate;
mod artifacts;
mod bias;
mod config;
mod evaluate;
mod generate;
mod report;
mod synthcmd;
mod train;

use clap::{Parser, Subcommand};
use config::{Overrides, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "tabcf",
    version,
    about = "Counterfactual explanations for tabular data via latent-space search"
)]
struct Cli {
    /// Run configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the generative model and the classifier; write checkpoints.
    Train {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate counterfactuals for the shared test selection.
    Generate {
        /// Search method.
        #[arg(value_enum)]
        method: generate::Method,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score result files into a per-method metrics table.
    Evaluate {
        /// Result files (JSON lines), at least one.
        #[arg(required = true, value_name = "RESULTS")]
        results: Vec<PathBuf>,
        /// Add per-method rows averaged across files.
        #[arg(long)]
        average: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Rerun the latent search over the 5x5 proximity-weight grid.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare per-feature utilization across methods' result files.
    BiasReport {
        /// Result files (JSON lines); needs tabcf plus one baseline.
        #[arg(required = true, value_name = "RESULTS")]
        results: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Generate a synthetic dataset with a planted signal.
    Synth {
        #[command(flatten)]
        args: synthcmd::SynthArgs,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let resolve = |o: &Overrides| -> anyhow::Result<RunConfig> {
        RunConfig::resolve(cli.config.as_deref(), cli.seed, cli.out.as_deref(), o)
    };
    match &cli.command {
        Command::Train { overrides } => train::run(&resolve(overrides)?),
        Command::Generate { method, overrides } => generate::run(&resolve(overrides)?, *method),
        Command::Evaluate { results, average, overrides } => {
            evaluate::run(&resolve(overrides)?, results, *average)
        }
        Command::Ablate { overrides } => ablate::run(&resolve(overrides)?),
        Command::BiasReport { results, overrides } => bias::run(&resolve(overrides)?, results),
        Command::Synth { args, overrides } => synthcmd::run(&resolve(overrides)?, args),
    }
}
