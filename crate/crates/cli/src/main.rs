mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use urnphylo::Model;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file, or input; exit code 2.
    Config(String),
    /// A check or campaign ran and failed; exit code 1.
    Failed(String),
}

impl From<urnphylo::Error> for CliError {
    fn from(e: urnphylo::Error) -> Self {
        match e {
            urnphylo::Error::Invariant { .. } => CliError::Failed(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "urnphylo", version, about = "Random phylogenetic trees and the Polya urns behind their shape statistics")]
struct Cli {
    /// Worker threads for campaigns (default: all cores).
    #[arg(long, global = true, env = "URNPHYLO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grow random trees and print them with their statistics.
    Generate(GenerateArgs),
    /// Run a Monte-Carlo campaign.
    Simulate(SimulateArgs),
    /// Exact law of (A, B) and the edge-type vector by enumeration.
    Enumerate(EnumerateArgs),
    /// Eigen-data and limit law of a replacement matrix.
    Spectral(SpectralArgs),
    /// Run an urn.
    UrnRun(UrnRunArgs),
    /// Run built-in check suites.
    Verify(VerifyArgs),
}

/// `--rooted` / `--unrooted` as an optional override.
#[derive(Args, Debug, Default)]
pub struct Rooting {
    #[arg(long, conflicts_with = "unrooted")]
    rooted: bool,
    #[arg(long)]
    unrooted: bool,
}

impl Rooting {
    fn value(&self) -> Option<bool> {
        match (self.rooted, self.unrooted) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[command(flatten)]
    rooting: Rooting,
    #[arg(long)]
    n: Option<usize>,
    /// Built-in name, Newick string, or Newick file.
    #[arg(long)]
    seed_tree: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trees, on replicate streams 0..count.
    #[arg(long)]
    count: Option<u64>,
    #[arg(long)]
    format: Option<String>,
    /// Skip statistics (allows unrooted trees below 6 leaves).
    #[arg(long)]
    no_stats: bool,
    /// Write the growth trace of the first tree as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the effective settings as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[command(flatten)]
    rooting: Rooting,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    replicates: Option<u64>,
    #[arg(long)]
    seed_tree: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    raw_dump: Option<PathBuf>,
    /// Write the result JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[command(flatten)]
    rooting: Rooting,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed_tree: Option<String>,
    #[arg(long)]
    cap: Option<usize>,
    /// `json` or `csv` (joint law of (A, B) only).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
pub struct SpectralArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    /// Custom replacement matrix, rows separated by ';', entries by ','.
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
pub struct UrnRunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<Model>,
    #[arg(long, allow_hyphen_values = true)]
    matrix: Option<String>,
    /// Initial composition, comma separated.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicate: Option<u64>,
    /// `csv` (trajectory) or `json` (final state).
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    print_config: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// yhk, pda, urn, spectral or all.
    #[arg(long)]
    suite: Option<String>,
    /// `full` or `quick`.
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: URNPHYLO_THREADS must be positive");
            return ExitCode::from(2);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::Spectral(a) => commands::spectral(a),
        Command::UrnRun(a) => commands::urn_run(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed(msg)) => {
            eprintln!("failed: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
