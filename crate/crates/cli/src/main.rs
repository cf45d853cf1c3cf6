mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcclk::config::Ablation;
use mcclk::dataset::DatasetKind;

use crate::manifest::RunManifest;

/// Knowledge-aware recommendation with multi-level cross-view contrastive
/// learning.
#[derive(Debug, Parser)]
#[command(name = "mcclk", version)]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Converts raw interaction and triple files into a canonical data directory.
    Preprocess(PreprocessArgs),
    /// Trains a model and writes the best checkpoint and a metrics log.
    Train(TrainArgs),
    /// Scores a checkpoint on a split.
    Evaluate(EvaluateArgs),
    /// Checks analytic gradients on the built-in toy instance.
    Gradcheck(GradcheckArgs),
    /// Writes 2-D SVD coordinates of a checkpoint's item embeddings.
    ExportViz(ExportVizArgs),
    /// Trains once per value of one hyperparameter and tabulates the results.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    /// Interaction file: `user item label` or `user item rating` lines.
    #[arg(long)]
    interactions: PathBuf,
    /// Triple file: `head relation tail` lines.
    #[arg(long)]
    kg: PathBuf,
    /// `item entity` lines; items are their own entities when absent.
    #[arg(long)]
    alignment: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "labeled")]
    kind: KindArg,
    /// Ratings at or above this value are positives.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 2022)]
    seed: u64,
    /// Output data directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Labeled,
    Ratings,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Labeled => DatasetKind::Labeled,
            KindArg::Ratings => DatasetKind::Ratings,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Config file, or a run manifest whose `config` table is reused.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset defaults the config file is merged over.
    #[arg(long, value_parser = ["lastfm", "book", "movie"])]
    preset: Option<String>,
    /// Canonical data directory.
    #[arg(long, env = "MCCLK_DATA")]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationArg {
    Full,
    NoLocal,
    NoGlobal,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoLocal => Ablation::NoLocal,
            AblationArg::NoGlobal => Ablation::NoGlobal,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Run directory for the checkpoint, metrics log and manifest.
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Ctr,
    Topk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Eval,
    Test,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, env = "MCCLK_DATA")]
    data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ctr")]
    metrics: Vec<MetricArg>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,20,50,100")]
    k_list: Vec<usize>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, default_value = "runs/evaluate")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Largest accepted relative error per block.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value = "runs/gradcheck")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExportVizArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "runs/viz")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One of alpha, beta, tau, k, K, K', L, L', lr.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    values: Vec<String>,
    #[arg(long, default_value = "runs/sweep")]
    out: PathBuf,
}

/// A bad invocation, reported with exit code 2 like clap's own errors.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub enum Failure {
    Usage(UsageError),
    Run(mcclk::Error),
}

impl From<mcclk::Error> for Failure {
    fn from(e: mcclk::Error) -> Self {
        Failure::Run(e)
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "{e}"),
            Failure::Run(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }

    let (name, out) = match &cli.command {
        Command::Preprocess(a) => ("preprocess", a.out.clone()),
        Command::Train(a) => ("train", a.out.clone()),
        Command::Evaluate(a) => ("evaluate", a.out.clone()),
        Command::Gradcheck(a) => ("gradcheck", a.out.clone()),
        Command::ExportViz(a) => ("export-viz", a.out.clone()),
        Command::Sweep(a) => ("sweep", a.out.clone()),
    };
    let mut manifest = RunManifest::start(name, cli.threads);
    let result = match cli.command {
        Command::Preprocess(a) => commands::preprocess(a, &mut manifest),
        Command::Train(a) => commands::train(a, &mut manifest),
        Command::Evaluate(a) => commands::evaluate(a, &mut manifest),
        Command::Gradcheck(a) => commands::gradcheck(a, &mut manifest),
        Command::ExportViz(a) => commands::export_viz(a, &mut manifest),
        Command::Sweep(a) => commands::sweep(a, &mut manifest),
    };
    let outcome = result.as_ref().map(|_| ()).map_err(|e| e.to_string());
    if let Err(e) = manifest.finish(&out, &outcome) {
        eprintln!("error: writing run manifest: {e}");
        return ExitCode::FAILURE;
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
