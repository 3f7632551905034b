//! Configuration-driven front end: simulate datasets, run prior studies, fit
//! chains and summarize traces. All outputs are CSV or TOML.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use std::path::PathBuf;

pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Write a simulated dataset, truth labels and a matching fit config.
    Simulate,
    /// Monte Carlo study of the prior co-clustering behaviour.
    PriorStudy,
    /// Run the sampler and write traces plus a manifest.
    Fit,
    /// Co-clustering matrices, point estimates and recovery metrics.
    Summarize,
}

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, PartialEq, clap::Args)]
pub struct Options {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Load the configuration, apply overrides and run `command`.
pub fn run(command: Command, opts: &Options) -> Result<()> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out` in the config".into()))?;
    let go = || match command {
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::PriorStudy => commands::prior_study(&cfg, &out),
        Command::Fit => commands::fit(&cfg, &out),
        Command::Summarize => commands::summarize(&cfg, &out),
    };
    match opts.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {t} threads: {e}")))?
            .install(go),
        None => go(),
    }
}
