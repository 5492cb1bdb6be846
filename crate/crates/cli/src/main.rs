mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Task;

/// Machine-generated text detection: preprocessing, feature-based
/// boundary regression, weighted ensembles and evaluation.
#[derive(Parser, Debug)]
#[command(name = "mgtd", version, about)]
pub struct Cli {
    /// Run configuration (JSON). Relative paths inside it are resolved
    /// against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-document parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Full,
    #[value(alias = "links_only")]
    LinksOnly,
    None,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Boundary,
    Binary,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clean the text field of every record in a JSONL corpus.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Defaults to the config cleaning mode, or `none` without a config.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Fit every configured component on the train split and derive
    /// ensemble weights from the dev split.
    Fit,
    /// Write component and ensemble predictions for one split.
    Predict {
        #[arg(long)]
        split: String,
    },
    /// Combine prediction files with weights derived from dev metrics.
    Ensemble {
        /// Ensemble spec (JSON): rule plus components with prediction paths.
        #[arg(long)]
        spec: PathBuf,
        /// Gold dev corpus, used to score components without a dev_metric.
        #[arg(long)]
        dev_gold: Option<PathBuf>,
        /// Target corpus; boundary averages are clipped to its word counts.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Score predictions against gold labels and write a report.
    Evaluate {
        /// Evaluate every prediction file of this split from a config run.
        #[arg(long, conflicts_with_all = ["preds", "gold"])]
        split: Option<String>,
        #[arg(long, requires = "gold")]
        preds: Option<PathBuf>,
        #[arg(long, requires = "preds")]
        gold: Option<PathBuf>,
        #[arg(long, value_enum)]
        task: Option<Task>,
        /// Report path (defaults to `<output_dir>/reports/<split>.json`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a seeded synthetic corpus.
    Synth {
        #[arg(long, value_enum, default_value = "boundary")]
        kind: SynthKind,
        #[arg(long, default_value_t = 200)]
        n_docs: usize,
        #[arg(long, default_value = "doc")]
        id_prefix: String,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] mgtd::Error),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
