//! `cloc`: design CLOC controllers, sweep describing functions and run the
//! time-domain comparison against PID.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 infeasible design.

// `!(x > 0.0)` guards reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cloc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "cloc",
    version,
    about = "Reset-control approximation of complex-order controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Harmonic describing functions of a reset element, CgLp or design.
    Bode(Common),
    /// Run the CLOC design procedure and write a design file and report.
    Design(Common),
    /// Step responses of CLOC and PID at one or more bandwidths.
    Step(Common),
    /// Sinusoidal tracking of CLOC and PID.
    Track(Common),
    /// Simulated sensitivity ‖e‖₂/‖r‖₂ of CLOC and PID over a frequency sweep.
    Sensitivity(Common),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Configuration file (flat `key = value` text with unit suffixes).
    #[arg(long)]
    pub(crate) config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub(crate) out: PathBuf,
    /// Integration step in seconds; overrides the config `dt` key.
    #[arg(long)]
    pub(crate) dt: Option<f64>,
    /// Grid density in points per decade.
    #[arg(long)]
    pub(crate) grid: Option<usize>,
    /// Highest harmonic reported by `bode`.
    #[arg(long)]
    pub(crate) harmonics: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) | Error::Io(_) => 2,
        Error::Infeasible(_) | Error::NoCrossing { .. } => 4,
        Error::Singularity { .. }
        | Error::Improper { .. }
        | Error::KernelSingular { .. }
        | Error::NoConvergence { .. }
        | Error::Divergence { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bode(c) => commands::bode(c),
        Command::Design(c) => commands::design(c),
        Command::Step(c) => commands::step(c),
        Command::Track(c) => commands::track(c),
        Command::Sensitivity(c) => commands::sensitivity(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Io("x".into())), 2);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 4);
        assert_eq!(exit_code(&Error::Divergence { time: 1.0 }), 3);
    }
}
