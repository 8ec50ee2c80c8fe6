use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{exit_for, Exit};
use config::{Command, Overrides, RunConfig};

/// Weak solutions of concave-convex problems on Sierpinski gaskets.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the level-m gasket as JSON plus vertex and edge CSVs.
    BuildGasket(Overrides),
    /// Print c, R, m, Λ and, when λ is set, the u_λ diagnostics and η thresholds.
    Thresholds(Overrides),
    /// Run the three-solution construction and write every report.
    ThreeSolutions(Overrides),
    /// Recompute energy and residual of a stored solution.
    Verify(Overrides),
}

fn run(cli: Cli) -> anyhow::Result<Exit> {
    let (command, flags) = match &cli.command {
        Cmd::BuildGasket(f) => (Command::BuildGasket, f),
        Cmd::Thresholds(f) => (Command::Thresholds, f),
        Cmd::ThreeSolutions(f) => (Command::ThreeSolutions, f),
        Cmd::Verify(f) => (Command::Verify, f),
    };
    let config = RunConfig::load(command, flags)?;
    let mut out = std::io::stdout().lock();
    let exit = match command {
        Command::BuildGasket => commands::build_gasket(&config, &mut out),
        Command::Thresholds => commands::thresholds(&config, &mut out),
        Command::ThreeSolutions => commands::three_solutions_cmd(&config, &mut out),
        Command::Verify => commands::verify(&config, &mut out),
    }?;
    out.flush()?;
    Ok(exit)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(exit) => ExitCode::from(exit as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_for(&err) as u8)
        }
    }
}
