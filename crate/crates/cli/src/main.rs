use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use magtorq_cli::{analyze, montecarlo, simulate, CliError, RunConfig};

/// Magnetorquer-only attitude control: simulation, averaged analysis and
/// Monte Carlo campaigns.
#[derive(Debug, Parser)]
#[command(name = "magtorq", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one closed-loop run and write its trace as CSV.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Report the averaged controllability matrix and averaged-system stability.
    Analyze { config: PathBuf },
    /// Run the perturbed-inertia campaign.
    Montecarlo {
        config: PathBuf,
        /// Output directory.
        #[arg(short, long)]
        output: PathBuf,
        /// Worker threads (defaults to the available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write one trace CSV per run.
        #[arg(long)]
        traces: bool,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match args.command {
        Command::Simulate { config, output } => {
            simulate(&RunConfig::load(&config)?, &output, &mut stdout)?;
        }
        Command::Analyze { config } => {
            analyze(&RunConfig::load(&config)?, &mut stdout)?;
        }
        Command::Montecarlo {
            config,
            output,
            jobs,
            traces,
        } => {
            let jobs = jobs
                .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
                .unwrap_or(1);
            if jobs == 0 {
                return Err(CliError::Invalid("--jobs must be at least 1".to_string()));
            }
            montecarlo(&RunConfig::load(&config)?, &output, jobs, traces, &mut stdout)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
