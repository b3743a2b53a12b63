//! `nearfield`: bounds, simulation, localization and Monte Carlo sweeps for
//! near-field MIMO radar scenarios.

mod commands;
mod verify;

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

use nearfield::Error;

#[derive(Parser)]
#[command(name = "nearfield", version, about = "Near-field MIMO radar bounds and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Exact,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Per-target position bounds for the scenario's ground truth.
    Crb {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "exact")]
        amplitude_model: ModelArg,
        /// Move one target along the ray from the Rx reference through it,
        /// from distance A to B in N steps, and emit both models as CSV.
        #[arg(long, value_name = "A:B:N")]
        sweep_distance: Option<String>,
        /// Space the distance sweep logarithmically.
        #[arg(long, requires = "sweep_distance")]
        log_spacing: bool,
        /// Target to move in a distance sweep (1-based).
        #[arg(long, default_value_t = 1)]
        target: usize,
        /// Include the full 5K x 5K bound matrix.
        #[arg(long)]
        full_matrix: bool,
        /// Largest accepted condition estimate of the equilibrated Fisher matrix.
        #[arg(long, default_value_t = nearfield::crb::DEFAULT_CONDITION_CAP)]
        condition_cap: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Simulate received data and write it as complex CSV.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the transmit waveform.
        #[arg(long)]
        waveform_out: Option<PathBuf>,
    },
    /// Localize targets from received data and print the result as JSON.
    Localize {
        scenario: PathBuf,
        /// Received data as complex CSV.
        #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
        y: Option<PathBuf>,
        /// Simulate the received data from the scenario with this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo MSE against the bound over the scenario's SNR list.
    Sweep {
        scenario: PathBuf,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-trial records as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Override the trial count from the scenario.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run the built-in oracle checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Format(_) | Error::Io(_) => 2,
        Error::TooManyTargets(_) => 2,
        Error::Identifiability { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::Singularity { .. }
        | Error::RankDeficient(_)
        | Error::SearchFailed => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Crb {
            scenario,
            amplitude_model,
            sweep_distance,
            log_spacing,
            target,
            full_matrix,
            condition_cap,
            format,
        } => commands::crb(
            &scenario,
            amplitude_model,
            commands::CrbOptions {
                sweep: sweep_distance.as_deref(),
                log_spacing,
                target,
                full_matrix,
                condition_cap,
                format,
            },
        ),
        Command::Simulate {
            scenario,
            seed,
            out,
            waveform_out,
        } => commands::simulate(&scenario, seed, &out, waveform_out.as_deref()),
        Command::Localize { scenario, y, seed, out } => commands::localize(&scenario, y.as_deref(), seed, out.as_deref()),
        Command::Sweep {
            scenario,
            out,
            json,
            trials,
        } => commands::sweep(&scenario, out.as_deref(), json.as_deref(), trials),
        Command::Verify { seed } => return verify::run(seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
