use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Adversarial social recommendation: train, evaluate, recommend, synthesize.
#[derive(Debug, Parser)]
#[command(name = "daso", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, history and validation report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Print the top-K items for one user.
    Recommend(RecommendArgs),
    /// Write a planted-community interaction file and trust file.
    Synth(SynthArgs),
}

/// Where the interactions and ties come from. Resolved together with the
/// config file, so every field is optional here.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// `user item rating` file.
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// `user user` trust file.
    #[arg(long)]
    pub social: Option<PathBuf>,
    /// Use the planted-community fixture instead of files.
    #[arg(long)]
    pub synthetic: bool,
    /// Ratings at or above this value count as interactions.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub fixture: FixtureArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub communities: Option<usize>,
    #[arg(long)]
    pub affinity: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub social_within: Option<f64>,
    #[arg(long)]
    pub social_across: Option<f64>,
}

/// Hyperparameters; flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// `key = value` file with hyperparameters and data settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seeds the split, the fixture and training.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Train the negative-sampling matrix factorization baseline instead.
    #[arg(long)]
    pub baseline: bool,
}

/// Checkpoint location: `--checkpoint`, else the default file under `--out`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory written by `train`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// With `--out`, read the baseline checkpoint.
    #[arg(long)]
    pub baseline: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Cutoffs, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    pub k: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// External user id as it appears in the interaction file.
    #[arg(long)]
    pub user: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub fixture: FixtureArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `ratings.tsv` and `trust.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}
