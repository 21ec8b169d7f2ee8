//! Command-line front end for `gantk`.
//!
//! ```text
//! gantk lambda-search --config run.json --out out/
//! gantk synth         --config run.json --variant batch --seed 3
//! gantk metrics       --config metrics.json
//! gantk gmm-demo      --runs 5
//! ```
//!
//! Every command reads one flat JSON [`config::RunConfig`]; `--seed`,
//! `--out`, `--variant` and `--runs` override the file.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Overrides, RunConfig, Variant};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{}: {1}", .0.display())]
    Path(PathBuf, String),

    #[error("run aborted at {0}; partial trace written")]
    Aborted(String),

    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },

    #[error(transparent)]
    Core(#[from] gantk::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "gantk", version, about = "Adversarial data synthesis against a closed-form NTK discriminator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration; defaults are used for missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base seed; with `--runs k` the seeds are `seed..seed + k`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Synthesis variant, overriding the config file.
    #[arg(long, global = true, value_enum)]
    pub variant: Option<Variant>,

    /// Number of independent seeds to run concurrently.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Find the smallest power-of-two lambda separating data from noise.
    LambdaSearch,
    /// Run one synthesis variant and write its trace and samples.
    Synth,
    /// Score generated samples (AM-SSIM, Wasserstein, mode coverage).
    Metrics,
    /// Synthesize points for a Gaussian-mixture toy and report coverage.
    GmmDemo,
}

impl Cli {
    pub fn run_config(&self) -> Result<RunConfig> {
        let over = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            variant: self.variant,
            runs: self.runs,
        };
        RunConfig::load(self.config.as_deref(), &over)
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.run_config()?;
    match cli.command {
        Command::LambdaSearch => commands::cmd_lambda_search(&cfg),
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Metrics => commands::cmd_metrics(&cfg),
        Command::GmmDemo => commands::cmd_gmm_demo(&cfg),
    }
}
