//! The `mdcl` experiment runner.
//!
//! Every subcommand reads the same JSON experiment config (`--config`, or the
//! built-in defaults) with `--set dotted.key=value` overrides applied on top.
//! Exit status is 0 on success, 1 for bad configs or usage, 2 when the run
//! itself fails.

mod commands;
mod config;
mod summary;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::{apply_override, load_config, CsvSource, DatasetConfig, ExperimentConfig};
pub use summary::{read_metrics, summarize, write_metrics, Metrics, METRICS_FILE};

use crate::active::Strategy;
use crate::data::Split;
use crate::error::Error;
use crate::model::ModelConfig;
use crate::train::Ablation;

pub const OUTPUT_DIR_ENV: &str = "MDCL_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "mdcl", version, about = "Multi-domain contrastive learning experiments")]
pub struct Cli {
    /// JSON experiment config; defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.max_epochs=20`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Replace the config's seed list (comma-separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    pub seed: Vec<u64>,
    /// Worker threads for multi-seed runs (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic dataset as per-domain CSVs plus a manifest.
    GenData,
    /// Train one model per seed and report mean (std) test accuracy.
    Train,
    /// Evaluate a checkpoint on the configured data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Finite-difference audit of every objective on random toy models.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Multi-domain active learning; writes learning curves and AULC.
    Mdal {
        /// Strategies to run (default: the config's).
        #[arg(long, value_enum, value_delimiter = ',')]
        strategies: Vec<StrategyArg>,
    },
    /// Collect final metrics from run directories into one table.
    Summarize {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Labeled,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Labeled => Split::Labeled,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Bvsb,
    Random,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Bvsb => Strategy::Bvsb,
            StrategyArg::Random => Strategy::Random,
        }
    }
}

/// Table label of a model/ablation pair, e.g. `MAN+MDCL(Inter)`.
pub fn method_label(model: &ModelConfig, ablation: Ablation) -> String {
    let base = if model.shared_classifier { "MAN" } else { "ASP" };
    match ablation {
        Ablation::Baseline => base.to_string(),
        Ablation::Full => format!("{base}+MDCL"),
        Ablation::InterOnly => format!("{base}+MDCL(Inter)"),
        Ablation::IntraOnly => format!("{base}+MDCL(Intra)"),
    }
}

pub(crate) enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other),
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand, returning
/// the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::dispatch(&cli) {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("error: invalid configuration: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}
