use std::path::PathBuf;
use std::process::ExitCode;

use acam_drf::simulator::Mode;
use clap::{Parser, Subcommand};

mod artifacts;
mod commands;
mod config;
mod error;
mod svg;

use artifacts::OutDir;
use config::Overrides;
use error::CliError;

/// Train deep random forests, compile them onto analog CAM arrays,
/// simulate search and estimate hardware cost.
#[derive(Debug, Parser)]
#[command(name = "acam-drf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out` next to the working directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Search mode for `simulate`.
    #[arg(long, global = true)]
    mode: Option<Mode>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Train the cascade and write model.json.
    Train,
    /// Compile model.json into array plans (plan.json).
    Compile,
    /// Search the test split on the programmed arrays (results.csv).
    Simulate,
    /// Run the configured accuracy sweeps.
    Sweep,
    /// Estimate per-classification hardware cost (cost.json).
    Cost,
    /// Summarize outputs into report.md and SVG charts.
    Report,
    /// Write the synthetic sEMG feature table as semg.csv.
    SynthSemg,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let ov = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        mode: cli.mode,
    };
    let cfg = config::load(path, &ov)?;
    let out = OutDir::open(&cfg.out)?;
    match cli.command {
        Command::Train => commands::train(&cfg, &out),
        Command::Compile => commands::compile(&cfg, &out),
        Command::Simulate => commands::simulate(&cfg, &out),
        Command::Sweep => commands::sweep(&cfg, &out),
        Command::Cost => commands::cost(&cfg, &out),
        Command::Report => commands::report(&cfg, &out),
        Command::SynthSemg => commands::synth_semg(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
