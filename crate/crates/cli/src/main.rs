//! `fsgr`: few-shot gesture recognition from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fsgr_core::Error;

#[derive(Parser, Debug)]
#[command(name = "fsgr", version, about = "Few-shot dynamic hand gesture recognition")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic gesture dataset.
    GenSynthetic(GenSyntheticArgs),
    /// Combine base gestures pairwise into a larger class set.
    BuildDataset(BuildDatasetArgs),
    /// Split a combined dataset into train/val/test by original class.
    Split(SplitArgs),
    /// Meta-train a relation network.
    Train(TrainArgs),
    /// Evaluate a checkpoint on N-way K-shot episodes.
    Eval(EvalArgs),
    /// Sweep the supervised baseline over training-set sizes.
    TrainSml(TrainSmlArgs),
    /// Compute labelled-sample savings.
    Savings(SavingsArgs),
}

#[derive(Args, Debug)]
struct GenSyntheticArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BuildDatasetArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    samples_per_class: usize,
    /// Number of ordered class pairs to draw (default: all).
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Original classes assigned to the training split.
    #[arg(long)]
    train: usize,
    #[arg(long)]
    val: usize,
    #[arg(long)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes `<prefix>train.gsjl`, `<prefix>val.gsjl` and `<prefix>test.gsjl`.
    #[arg(long)]
    out_prefix: String,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum PoolingArg {
    Sum,
    Mean,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// JSON training configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-episode training history as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    n_way: Option<usize>,
    #[arg(long)]
    k_shot: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f32>,
    /// Seeds initialization and validation episodes.
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds the training episode stream.
    #[arg(long)]
    episode_seed: Option<u64>,
    /// Comma-separated LSTM hidden sizes.
    #[arg(long, value_delimiter = ',')]
    lstm_hidden: Option<Vec<usize>>,
    /// Comma-separated relation hidden sizes.
    #[arg(long, value_delimiter = ',')]
    relation_hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    /// Suppress per-evaluation progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Training configuration the checkpoint must match.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, default_value_t = 1)]
    k_shot: usize,
    #[arg(long, default_value_t = 1)]
    queries: usize,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the full evaluation report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainSmlArgs {
    /// Labelled pool containing the evaluated classes.
    #[arg(long)]
    data: PathBuf,
    /// Few-shot evaluation report (JSON) supplying the target accuracy.
    #[arg(long)]
    report: PathBuf,
    /// Comma-separated classes; default picks those closest to the overall accuracy.
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Number of classes to pick when `--classes` is absent (default: the report's n_way).
    #[arg(long)]
    n_classes: Option<usize>,
    /// JSON baseline configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f32>,
    #[arg(long)]
    test_per_class: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest training-set size per class to try.
    #[arg(long, default_value_t = 512)]
    max_samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SavingsArgs {
    /// Supervised samples per class at the crossing.
    #[arg(long, requires_all = ["k_shot", "n_way"], conflicts_with_all = ["eval", "sweep"])]
    sml_samples: Option<usize>,
    #[arg(long)]
    k_shot: Option<usize>,
    #[arg(long)]
    n_way: Option<usize>,
    /// Few-shot evaluation report (JSON).
    #[arg(long, requires = "sweep")]
    eval: Option<PathBuf>,
    /// Sweep output of `train-sml` (JSON).
    #[arg(long, requires = "eval")]
    sweep: Option<PathBuf>,
    /// Where to write the savings report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Parse { .. } | Error::Schema { .. } | Error::Json(_) | Error::Csv(_) => 2,
        Error::Checkpoint(_) => 2,
        Error::Capacity(_) | Error::InfeasibleSplit(_) => 3,
        Error::ConfigMismatch(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::GenSynthetic(a) => commands::gen_synthetic(a),
        Command::BuildDataset(a) => commands::build_dataset(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::TrainSml(a) => commands::train_sml(a),
        Command::Savings(a) => commands::savings(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
