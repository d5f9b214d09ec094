mod dataset;
mod eval;
mod noise_demo;
mod output;
mod sample;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "graphdiff", version, about = "Discrete denoising diffusion for simple graphs")]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, env = "GRAPHDIFF_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset or re-export an edge-list file.
    Dataset(dataset::Args),
    /// Train a MiniPPGN denoiser.
    Train(train::Args),
    /// Generate graphs from a checkpoint or from the exact oracle denoiser.
    Sample(sample::Args),
    /// Degree, clustering and orbit MMD between two graph sets.
    Eval(eval::Args),
    /// Forward-noising ladder of one graph, as Graphviz DOT.
    NoiseDemo(noise_demo::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(threads) = cli.threads {
        anyhow::ensure!(threads >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    match cli.command {
        Command::Dataset(args) => dataset::run(args),
        Command::Train(args) => train::run(args),
        Command::Sample(args) => sample::run(args),
        Command::Eval(args) => eval::run(args),
        Command::NoiseDemo(args) => noise_demo::run(args),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
