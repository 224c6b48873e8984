use std::path::PathBuf;
use std::process::ExitCode;

use asyncavg_cli::commands::{self, Options};
use asyncavg_cli::CliError;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

/// Expected-error analysis and Monte Carlo simulation of asynchronous
/// distributed averaging.
#[derive(Debug, Parser)]
#[command(name = "asyncavg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for generated artifacts (overrides the config's output_dir)
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override the config's random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's ensemble size
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Suppress console output
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Expected consensus value, exact expected error, and its upper bound
    Analyze { config: PathBuf },
    /// Monte Carlo ensemble of the switched system
    Simulate { config: PathBuf },
    /// Enumerated vs reduced mean matrix and eigenvector checks
    Verify { config: PathBuf },
    /// Merge analyze and simulate outputs into one table
    Report { analysis_csv: PathBuf, ensemble_csv: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let opts = Options { output_dir: cli.output_dir, seed: cli.seed, runs: cli.runs, quiet: cli.quiet };
    let result: Result<(), CliError> = match &cli.command {
        Command::Analyze { config } => commands::analyze(config, &opts).map(drop),
        Command::Simulate { config } => commands::simulate(config, &opts).map(drop),
        Command::Verify { config } => commands::verify(config, &opts).map(drop),
        Command::Report { analysis_csv, ensemble_csv } => commands::report(analysis_csv, ensemble_csv, &opts).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
