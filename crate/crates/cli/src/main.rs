//! Command-line front end: ingest corpora, build KB indexes, run
//! experiment grids, evaluate prediction files, compare systems, and
//! regenerate analysis tables.

mod commands;

use anyhow::Result;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "valuelab", version, about = "Sentence-level value detection experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus file, validate it, and report split statistics.
    Ingest(commands::IngestArgs),
    /// Load a KB file, embed its chunks, and persist the flat index.
    Index(commands::IndexArgs),
    /// Execute a single run or a declarative grid, with caching.
    Run(commands::RunArgs),
    /// Evaluate prediction files against gold labels.
    Evaluate(commands::EvaluateArgs),
    /// Paired significance test between two prediction files.
    Compare(commands::CompareArgs),
    /// Regenerate analysis artifacts from saved prediction files.
    Analyze(commands::AnalyzeArgs),
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Ingest(args) => commands::ingest(args),
        Command::Index(args) => commands::index(args),
        Command::Run(args) => commands::run(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Compare(args) => commands::compare(args),
        Command::Analyze(args) => commands::analyze(args),
    }
}
