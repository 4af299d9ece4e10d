//! `fgcn`: train graph models, analyze propagation kernels and generate
//! synthetic datasets.
//!
//! Exit codes: 0 on success, 1 for usage, configuration or data errors,
//! 2 when training or analysis hits a numerical failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fgcn", version, about = "Fusion GCN and baseline graph models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the five-split training protocol and write reports
    Train(commands::TrainArgs),
    /// Print hop coefficients, path counts and achievable hop subsets
    Analyze(commands::AnalyzeArgs),
    /// Write a stochastic block model dataset
    Synth(commands::SynthArgs),
    /// Run the protocol for a range of hop counts and emit a CSV
    Hopsweep(commands::HopsweepArgs),
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("FGCN_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("FGCN_THREADS={value:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("configuring thread pool: {e}"))
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
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Synth(args) => commands::synth(args),
        Command::Hopsweep(args) => commands::hopsweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
