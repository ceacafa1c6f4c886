//! `rigidity`: transmission and phase-rigidity data for open tight-binding
//! systems.

mod commands;
mod config;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "rigidity", version, about = "Transmission and phase rigidity of open quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value settings file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Six-site chain: |t| and |rho| over E at v = 0.5 and 0.7.
    Fig1,
    /// Double dot: |t| and |rho| over (v, E), Re z at E = 0, branch point.
    Fig2,
    /// Billiard with a disk: |t| and |rho| over (r, E) and their correlation.
    Fig3,
    /// Fixed-point resonance poles.
    Poles,
    /// Branch point of two eigenvalues in the (v, E) plane.
    EpLocate,
    /// Generic parameter sweep.
    Sweep,
}

fn run(cli: Cli) -> Result<commands::Outcome> {
    let mut settings = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    settings.merge(&cli.settings);
    if let Some(n) = settings.threads {
        anyhow::ensure!(n > 0, "threads must be positive");
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Fig1 => commands::fig1(settings),
        Command::Fig2 => commands::fig2(settings),
        Command::Fig3 => commands::fig3(settings),
        Command::Poles => commands::poles(settings),
        Command::EpLocate => commands::ep_locate(settings),
        Command::Sweep => commands::sweep(settings),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failed {
                    eprintln!("check failed: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
