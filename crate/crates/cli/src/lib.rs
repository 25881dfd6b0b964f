//! Command-line driver: one config file, seven subcommands, a manifest per run.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

use crashdrl::ErrorClass;

pub use commands::{cmd_estimate, cmd_ingest, cmd_pipeline, cmd_select, cmd_sweep, cmd_synth, cmd_validate, Selection};
pub use config::RunConfig;
pub use manifest::{sha256_file, FileHash, Manifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] crashdrl::Error),
}

impl CliError {
    /// 2 for config problems, 3 for data problems, 4 for estimation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => 3,
                ErrorClass::Estimation => 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Select,
    Estimate,
    Validate,
    Sweep,
    Synth,
    Pipeline,
}

/// Load a config file and apply command-line overrides. `--out` is taken
/// relative to the working directory.
pub fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<Manifest>, CliError> {
    let one = |m: Manifest| vec![m];
    Ok(match cmd {
        Command::Ingest => one(cmd_ingest(cfg)?),
        Command::Select => one(cmd_select(cfg)?),
        Command::Estimate => one(cmd_estimate(cfg)?),
        Command::Validate => one(cmd_validate(cfg)?),
        Command::Sweep => one(cmd_sweep(cfg)?),
        Command::Synth => one(cmd_synth(cfg)?),
        Command::Pipeline => cmd_pipeline(cfg)?,
    })
}
