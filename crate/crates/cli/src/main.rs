//! `sequelrec` — train and evaluate a sequel-aware graph recommender on
//! synthetic or ingested interaction logs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numeric error, 1 anything else.

mod commands;
mod config_file;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sequelrec_core::Error;

#[derive(Parser)]
#[command(name = "sequelrec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic interaction dataset
    Generate(GenerateArgs),
    /// Convert an interaction log into a dataset directory
    Ingest(IngestArgs),
    /// Train a model on a dataset directory
    Train(TrainArgs),
    /// Rank held-out interactions with a trained checkpoint
    Eval(EvalArgs),
    /// Train+eval across a one-axis grid, one row per (value, seed)
    Sweep(SweepArgs),
    /// Write one sampled sub-graph as an edge-list text file
    DumpSubgraph(DumpArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// mixed | sequential | standalone (default mixed, reference setup)
    #[arg(long)]
    mode: Option<String>,
    /// Number of users (default 10000, reference setup)
    #[arg(long)]
    users: Option<usize>,
    /// Number of items (default 500, reference setup)
    #[arg(long)]
    items: Option<usize>,
    /// Number of sequel items (default 250, reference setup)
    #[arg(long)]
    sequential_items: Option<usize>,
    /// Smallest admissible series count (default 20, reference setup)
    #[arg(long)]
    series_min: Option<usize>,
    /// Largest admissible series count (default 30, reference setup)
    #[arg(long)]
    series_max: Option<usize>,
    /// Minimum interactions per user (default 10, reference setup)
    #[arg(long)]
    items_per_user_min: Option<usize>,
    /// Maximum interactions per user (default 15, reference setup)
    #[arg(long)]
    items_per_user_max: Option<usize>,
    /// Hard cap on interactions per user (default 15, reference setup)
    #[arg(long)]
    max_interactions: Option<usize>,
    /// Zipf popularity exponent (default 1.5, repo default)
    #[arg(long)]
    popularity_exponent: Option<f64>,
    /// Series continuation probability in mixed mode (default 0.8, repo default)
    #[arg(long)]
    continuation_prob: Option<f64>,
    /// RNG seed (default 1, repo default)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IngestArgs {
    /// Interaction log to parse
    #[arg(long)]
    interactions: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// csv (user,item,timestamp) | movielens (user item rating timestamp)
    #[arg(long, default_value = "csv")]
    format: String,
    /// Tolerated fraction of malformed rows (default 0, repo default)
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    /// Series catalog file: series_id,item,item,... per line
    #[arg(long)]
    series: Option<PathBuf>,
    /// Item titles (item<TAB>title per line) for --infer-series
    #[arg(long)]
    titles: Option<PathBuf>,
    /// Infer series from title part markers
    #[arg(long)]
    infer_series: bool,
    /// Keep only the N most active users
    #[arg(long)]
    sample_users: Option<usize>,
    /// Also write a line-oriented dump of the built graph
    #[arg(long)]
    dump_graph: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (from generate/ingest)
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint + logs
    #[arg(long)]
    out: PathBuf,
    /// Flat key[=]value run configuration; explicit flags win
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding dimension (default 50, reference setup)
    #[arg(long)]
    d: Option<usize>,
    /// Propagation layers L (default 3, repo default; tuned per dataset
    /// in the reference setup)
    #[arg(long)]
    layers: Option<usize>,
    /// Sub-graph sampling order m (default 4, reference setup)
    #[arg(long)]
    m: Option<usize>,
    /// Max recent interactions per user (default 50, reference setup)
    #[arg(long)]
    recent_n: Option<usize>,
    /// Adam learning rate (default 0.01, reference setup)
    #[arg(long)]
    lr: Option<f64>,
    /// Examples per optimizer step (default 50, reference setup)
    #[arg(long)]
    batch_size: Option<usize>,
    /// L2 coefficient lambda (default 1e-4, reference setup)
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Apply weight decay decoupled from the Adam moments (repo ablation knob)
    #[arg(long)]
    decoupled_weight_decay: bool,
    /// Max training epochs (default 30, repo default)
    #[arg(long)]
    epochs: Option<usize>,
    /// Early-stop patience on validation Hit@10 (default 5, repo default)
    #[arg(long)]
    patience: Option<usize>,
    /// Disable early stopping; run exactly --epochs epochs
    #[arg(long)]
    epochs_exact: bool,
    /// sum | mean | concat | semantic (default sum, reference setup)
    #[arg(long)]
    fusion: Option<String>,
    /// sinusoidal | rotary (default sinusoidal, reference setup)
    #[arg(long)]
    positional: Option<String>,
    /// Replace attention propagation with plain mean-aggregation layers
    #[arg(long)]
    gcn_baseline: bool,
    /// Drop all sequel edges (ablation)
    #[arg(long)]
    ablate_sequels: bool,
    /// RNG seed (default 1, repo default)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Trained checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory for the report
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated cutoffs (default 5,10,20, reference setup)
    #[arg(long)]
    k: Option<String>,
    /// Sampling order at evaluation (default 4, reference setup)
    #[arg(long)]
    m: Option<usize>,
    /// Recent-history cap (default: the checkpoint's training value)
    #[arg(long)]
    recent_n: Option<usize>,
    /// Rank against all items including already-seen ones
    #[arg(long)]
    no_exclude_seen: bool,
    /// Rank against N sampled candidates instead of the full vocabulary
    #[arg(long)]
    candidates: Option<usize>,
    /// Also write per-user ranks as CSV
    #[arg(long)]
    per_user_dump: bool,
    /// test | validation (default test)
    #[arg(long, default_value = "test")]
    which: String,
    /// Drop all sequel edges at evaluation time (ablation)
    #[arg(long)]
    ablate_sequels: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// layers | n-sequences | seq-length | fusion | positional
    #[arg(long)]
    axis: String,
    /// Comma-separated grid values for the axis
    #[arg(long)]
    grid: String,
    /// Output directory for sweep.csv
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory (model axes). Data axes regenerate instead.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated seeds (default 1,2,3,4,5, reference setup runs five seeds)
    #[arg(long, default_value = "1,2,3,4,5")]
    seeds: String,
    /// Base synthetic config for data axes: users
    #[arg(long, default_value_t = 300)]
    users: usize,
    /// Base synthetic config for data axes: items
    #[arg(long, default_value_t = 60)]
    items: usize,
    /// Base synthetic config for data axes: sequel items
    #[arg(long, default_value_t = 30)]
    sequential_items: usize,
    /// Base synthetic config for data axes: mode
    #[arg(long, default_value = "mixed")]
    mode: String,
    #[command(flatten)]
    train: SweepTrainArgs,
}

#[derive(Args)]
struct SweepTrainArgs {
    /// Embedding dimension (default 16 for sweeps, repo default)
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Propagation layers (default 2 for sweeps, repo default)
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Sampling order (default 2 for sweeps, repo default)
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Max epochs per point (default 10 for sweeps, repo default)
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Early-stop patience (default 3 for sweeps, repo default)
    #[arg(long, default_value_t = 3)]
    patience: usize,
}

#[derive(Args)]
struct DumpArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// User label (or dense id) to anchor the sub-graph
    #[arg(long)]
    user: String,
    /// Snapshot time t_k (user-item edges strictly before it)
    #[arg(long)]
    time: i64,
    /// Sampling order (default 4, reference setup)
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Recent-history cap (default 50, reference setup)
    #[arg(long, default_value_t = 50)]
    recent_n: usize,
    /// Output edge-list file
    #[arg(long)]
    out: PathBuf,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Catalog(_) | Error::Lookup(_) | Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(args),
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::DumpSubgraph(args) => commands::dump::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
