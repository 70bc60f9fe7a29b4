//! Configuration, dispatch and file output for the `ftem` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod verify;

use std::path::{Path, PathBuf};

use ftem_core::FtemError;
use thiserror::Error;

pub use config::{parse_config, Command, Resolved, RunConfig};
pub use output::Artifacts;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "FTEM_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(FtemError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<FtemError> for CliError {
    fn from(e: FtemError) -> Self {
        if e.is_input_error() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numerical(e)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub config: Resolved,
    pub artifacts: Artifacts,
}

/// Parse, compute and write. `output_dir` takes precedence over the config.
pub fn run_command(
    cmd: Command,
    config_text: &str,
    jobs: usize,
    output_dir: Option<&Path>,
) -> Result<RunOutput, CliError> {
    let mut config = parse_config(cmd, config_text)?;
    if let Some(dir) = output_dir {
        config.output_dir = dir.to_path_buf();
    }
    let artifacts = commands::execute(&config, jobs)?;
    output::write_all(&config.output_dir, &config, &artifacts)?;
    Ok(RunOutput { output_dir: config.output_dir.clone(), config, artifacts })
}
