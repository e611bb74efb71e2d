//! Command-line grammar. Every value is optional here; defaults are applied
//! after merging with the config file so that flag > file > default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tten_core::LossKind;

use crate::settings::PGrid;

#[derive(Debug, Parser)]
#[command(name = "tten", version, about = "LightGCN with test-time embedding normalization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with known latent structure.
    Generate(GenerateArgs),
    /// Train LightGCN embeddings with BPR or sampled softmax.
    Train(TrainArgs),
    /// Score test users at one normalization strength p.
    Evaluate(EvaluateArgs),
    /// Magnitude-popularity correlation and cosine quadrant statistics.
    Analyze(AnalyzeArgs),
    /// Evaluate the same embeddings over a grid of p values.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Analyze(_) => "analyze",
            Command::Sweep(_) => "sweep",
        }
    }

    pub fn run_args(&self) -> &RunArgs {
        match self {
            Command::Generate(a) => &a.run,
            Command::Train(a) => &a.run,
            Command::Evaluate(a) => &a.run,
            Command::Analyze(a) => &a.run,
            Command::Sweep(a) => &a.run,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat `key = value` file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory; must be absent or empty.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 gives the sequential reference mode.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub popularity_exponent: Option<f64>,
    #[arg(long)]
    pub popularity_mix: Option<f64>,
    #[arg(long)]
    pub interactions_per_user: Option<usize>,
    #[arg(long)]
    pub test_items_per_user: Option<usize>,
    #[arg(long)]
    pub affinity_temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    #[arg(long, value_name = "FILE")]
    pub train_file: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub test_file: Option<PathBuf>,
    /// Generate the data in memory instead of reading files.
    #[arg(long)]
    pub synthetic: bool,
    /// Share of each user's test items moved to validation.
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[command(flatten)]
    pub spec: SyntheticArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// First epoch at which validation and early stopping start.
    #[arg(long)]
    pub min_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub spec: SyntheticArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Normalization strength used for validation ranking.
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Final embeddings written by `tten train`.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    /// Share of items, by train popularity, treated as popular.
    #[arg(long)]
    pub popular_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    /// Grid of p values as start:stop:step, stop inclusive.
    #[arg(long, value_name = "START:STOP:STEP", allow_hyphen_values = true)]
    pub p_grid: Option<PGrid>,
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse().map_err(|e: tten_core::Error| e.to_string())
}
