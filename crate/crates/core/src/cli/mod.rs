//! Command-line entry point: `gen-data`, `train`, `eval`, `finetune` and
//! `gradcheck`.
//!
//! Every subcommand takes an optional `--config FILE` plus any number of
//! `--key value` overrides. Exit codes: 0 success, 2 usage or config error,
//! 3 data error, 4 training divergence, 5 gradcheck failure.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::data::DataError;
use crate::evaluation::MetricError;
use crate::experiment::ExperimentError;
use crate::model::ModelError;
use crate::training::TrainingError;

pub use commands::{cmd_eval, cmd_finetune, cmd_gen_data, cmd_gradcheck, cmd_train};
pub use config::{RunConfig, KEYS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Divergence(_) => 4,
            CliError::GradCheck(_) => 5,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<TrainingError> for CliError {
    fn from(e: TrainingError) -> Self {
        match e {
            TrainingError::Divergence { .. } | TrainingError::NonFinite { .. } => {
                CliError::Divergence(e.to_string())
            }
            TrainingError::Model(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(e) => e.into(),
            ExperimentError::Model(e) => e.into(),
            ExperimentError::Training(e) => e.into(),
            ExperimentError::Metric(e) => e.into(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dacdr", version, about = "Cold-start cross-domain recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `--key value` pairs overriding the config file.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pairs: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    GenData(Overrides),
    /// Train a variant and write a checkpoint.
    Train(Overrides),
    /// Evaluate a checkpoint, optionally sweeping β or variants.
    Eval(Overrides),
    /// Adapt a DACDR checkpoint to a new target domain.
    Finetune(Overrides),
    /// Finite-difference check of every op and the composed model.
    Gradcheck(Overrides),
}

/// Output of a command: lines for standard output.
pub type Output = Vec<String>;

fn resolve(o: &Overrides) -> Result<RunConfig, CliError> {
    let mut pairs = o.pairs.clone();
    let mut file = o.config.clone();
    // `--config` may also appear among the trailing pairs.
    if let Some(i) = pairs.iter().position(|p| p == "--config" || p.starts_with("--config=")) {
        let flag = pairs.remove(i);
        let path = match flag.strip_prefix("--config=") {
            Some(p) => p.to_string(),
            None if i < pairs.len() => pairs.remove(i),
            None => return Err(CliError::Usage("flag `--config` needs a value".into())),
        };
        file = Some(PathBuf::from(path));
    }
    let mut cfg = RunConfig::default();
    if let Some(f) = &file {
        cfg.merge_file(f)?;
    }
    cfg.merge_flags(&pairs)?;
    Ok(cfg)
}

/// Runs one invocation; `args` includes the program name.
pub fn run_with<I, T>(args: I) -> Result<Output, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.render().to_string()))?;
    match &cli.command {
        Command::GenData(o) => cmd_gen_data(&resolve(o)?),
        Command::Train(o) => cmd_train(&resolve(o)?),
        Command::Eval(o) => cmd_eval(&resolve(o)?),
        Command::Finetune(o) => cmd_finetune(&resolve(o)?),
        Command::Gradcheck(o) => cmd_gradcheck(&resolve(o)?),
    }
}

/// Binary entry point: prints output, maps errors to exit codes.
pub fn main_exit() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<OsString> = std::env::args_os().collect();
    if let Err(e) = Cli::try_parse_from(&args) {
        let _ = e.print();
        return if e.use_stderr() { 2 } else { 0 };
    }
    match run_with(args) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
