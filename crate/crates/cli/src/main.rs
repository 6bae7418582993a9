//! `sthlm` — generative vector search over embedding files.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 validation or
//! format error, 5 numeric failure (non-finite values, diverged training,
//! failed sampling).

mod commands;

use clap::{Parser, Subcommand};
use sthlm_core::error::Error;

const EXIT_CODES_HELP: &str = "EXIT CODES:\n  0  success\n  2  usage error\n  3  I/O error (missing or unreadable file)\n  4  validation or format error (schema violations, shape mismatches)\n  5  numeric failure (non-finite values, diverged training, failed sampling)\n\nFILES:\n  Embedding file <name>: <name>.meta.json + <name>.f32 (+ optional <name>.ids)\n  Checkpoint <name>: <name>.manifest.json + <name>.params.f32\n\nENVIRONMENT:\n  STHLM_THREADS  caps internal parallelism (default: machine parallelism)";

#[derive(Parser)]
#[command(
    name = "sthlm",
    about = "Generative vector search: train a conditional flow-matching model over embeddings, sample query-conditioned embeddings, and retrieve, align, classify, and evaluate",
    version,
    after_help = EXIT_CODES_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a flow-matching (or regression) model on embedding files
    Train(commands::train::TrainArgs),
    /// Generate embeddings from a trained model
    Sample(commands::sample::SampleArgs),
    /// Nearest-neighbor search over an embedding file
    Search(commands::search::SearchArgs),
    /// Score a run file against qrels (NDCG@10)
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Align source embeddings to a target distribution (CORAL)
    Coral(commands::coral::CoralArgs),
    /// Classify embeddings with per-class von Mises-Fisher models
    VmfClassify(commands::vmf::VmfArgs),
    /// Fit PCA on an embedding file and project it
    Pca(commands::pca::PcaArgs),
    /// Synthetic capacity benchmark: prototype vs generative classification
    /// across PCA dimensionalities
    CapacityBench(commands::capacity::CapacityArgs),
}

fn exit_code_for(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_)) => 3,
        Some(
            Error::Format(_)
            | Error::DimensionMismatch(_)
            | Error::InvalidParameter(_)
            | Error::DegenerateInput(_),
        ) => 4,
        Some(Error::NonFinite(_) | Error::Training(_) | Error::Sampling(_)) => 5,
        None => {
            if err.downcast_ref::<std::io::Error>().is_some() {
                3
            } else {
                4
            }
        }
    }
}

fn configure_threads() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("STHLM_THREADS") {
            if let Ok(n) = v.parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

fn main() {
    configure_threads();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Sample(args) => commands::sample::run(args),
        Command::Search(args) => commands::search::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Coral(args) => commands::coral::run(args),
        Command::VmfClassify(args) => commands::vmf::run(args),
        Command::Pca(args) => commands::pca::run(args),
        Command::CapacityBench(args) => commands::capacity::run(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code_for(&err));
    }
}
