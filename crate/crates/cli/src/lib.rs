//! Experiment runner: synthetic stream generation, importance estimation,
//! the model grid and the significance report.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_gen_synth, cmd_importance, cmd_report, cmd_run, load_stocks, ReportOutcome};
pub use config::{InputSource, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Internal(_) => 4,
        }
    }
}

impl From<alpe_core::Error> for CliError {
    fn from(e: alpe_core::Error) -> Self {
        if e.is_config_error() {
            Self::Config(e.to_string())
        } else if e.is_data_error() {
            Self::Data(e.to_string())
        } else {
            Self::Internal(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "alpe", version, about = "Online RL mid-price forecasting experiments")]
pub struct Cli {
    /// Run configuration (`section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `experiment.master_seed` and `synth.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the grid; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write one synthetic LOB stream per configured stock.
    GenSynth,
    /// Estimate MDI and/or GD importance over the calibration prefix.
    Importance,
    /// Run the full (feature set, importance, model) grid.
    Run,
    /// Significance tests, error reductions and the volume profile from a
    /// finished run.
    Report,
}

impl Cli {
    /// Loads the config and applies the command-line overrides.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
            if let InputSource::Synthetic { cfg: synth, .. } = &mut cfg.input {
                synth.seed = seed;
            }
        }
        if self.jobs == Some(0) {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        Ok(cfg)
    }
}

/// Runs one parsed invocation.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::GenSynth => cmd_gen_synth(&cfg).map(|paths| {
            log::info!("wrote {} stream(s) to {}", paths.len(), cfg.output_dir.display());
        }),
        Command::Importance => cmd_importance(&cfg).map(|paths| {
            log::info!("wrote {} importance file(s)", paths.len());
        }),
        Command::Run => cmd_run(&cfg).map(|n| log::info!("wrote {n} result rows")),
        Command::Report => cmd_report(&cfg).map(|outcome| {
            for notice in &outcome.notices {
                log::warn!("{notice}");
            }
        }),
    })
}
