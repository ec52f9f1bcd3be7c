//! Command-line driver: synthetic data, training, evaluation, prediction
//! and hyperparameter sweeps.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use capsule_re::prediction::{PairDirection, DEFAULT_THRESHOLD};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

/// Exit code 2 for usage and configuration problems, 1 for failures at run time.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl From<capsule_re::Error> for CliError {
    fn from(e: capsule_re::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "capsule-re", version, about = "Capsule-network relation extraction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train from a JSON run config, checkpointing after every epoch.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a corpus and write the PR curve and headline metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Directory for `pr_curve.csv` and `metrics.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write one JSON line of predicted relations per bag.
    Predict(PredictArgs),
    /// Generate a separable synthetic corpus with matching vector files.
    Synth(SynthArgs),
    /// Train and evaluate over a grid of capsule sizes and routing iterations.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
        iters: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8])]
        dims: Vec<usize>,
        /// Report directory; the run's `output_dir` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Direction {
    /// Compare `emb(e2) - emb(e1)` with the relation vector.
    TailMinusHead,
    /// Compare `emb(e1) - emb(e2)`.
    HeadMinusTail,
}

impl From<Direction> for PairDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::TailMinusHead => PairDirection::TailMinusHead,
            Direction::HeadMinusTail => PairDirection::HeadMinusTail,
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Emit up to two relations above the threshold, each assigned to a pair.
    #[arg(long, requires_all = ["entity_embeddings", "relation_embeddings"])]
    pub multi: bool,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub entity_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub relation_embeddings: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Direction::TailMinusHead)]
    pub direction: Direction,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Relation count including NA.
    #[arg(long, default_value_t = 4)]
    pub relations: usize,
    #[arg(long, default_value_t = 50)]
    pub bags: usize,
    #[arg(long, default_value_t = 40)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 1)]
    pub pairs: usize,
    #[arg(long, default_value_t = 1)]
    pub sentences_per_bag: usize,
    #[arg(long)]
    pub sentence_len: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub unsupported_rate: f64,
    #[arg(long, default_value_t = 50)]
    pub word_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub kg_dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => commands::train(&RunConfig::load(&config)?).map(|_| ()),
        Command::Eval { checkpoint, corpus, out } => commands::eval(&checkpoint, &corpus, &out).map(|_| ()),
        Command::Predict(args) => commands::predict(&args),
        Command::Synth(args) => commands::synth(&args).map(|_| ()),
        Command::Sweep { config, iters, dims, out } => {
            let run = RunConfig::load(&config)?;
            let out = out.unwrap_or_else(|| run.output_dir.clone());
            commands::sweep(&run, &iters, &dims, &out).map(|_| ())
        }
    }
}
