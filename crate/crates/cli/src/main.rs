//! `psimix` command-line front end.
//!
//! Every subcommand writes its data files and a `<subcommand>.manifest.json`
//! into `--out-dir`. Exit codes: 0 success, 2 configuration error, 3
//! infeasible parameters or an exceeded cap, 4 non-convergence.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use psimix::process::DEFAULT_ENUMERATION_CAP;
use psimix::Error;

#[derive(Parser, Debug)]
#[command(
    name = "psimix",
    version,
    about = "psi-mixing sources, block rate-distortion and random-coding experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for data files and manifests.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Largest number of words any exhaustive enumeration may visit.
    #[arg(long, global = true, default_value_t = DEFAULT_ENUMERATION_CAP)]
    pub cap: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Mixing profile psi(0..=tau_max), optionally with the event-level oracle.
    Psi {
        chain: PathBuf,
        #[arg(long)]
        tau_max: usize,
        /// Past and future window lengths for the brute-force column.
        #[arg(long, num_args = 2, value_names = ["t", "T"])]
        brute: Option<Vec<usize>>,
    },
    /// One run of the slot procedure (or a codebook of several).
    Simulate {
        chain: PathBuf,
        #[arg(long = "T")]
        block_len: usize,
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        k: usize,
        /// Number of sequences sharing the flags.
        #[arg(long, default_value_t = 1)]
        codewords: usize,
        /// Compare the exact law of the procedure with the source law.
        #[arg(long)]
        exact_check: bool,
    },
    /// Rate-distortion value of the T-window source, or a curve.
    Rd {
        chain: PathBuf,
        #[arg(long = "T")]
        block_len: usize,
        /// Per-letter distortion.
        #[arg(
            long = "D",
            conflicts_with = "curve",
            required_unless_present = "curve"
        )]
        distortion: Option<f64>,
        /// Number of evenly spaced points from 0 to the zero-rate distortion.
        #[arg(long)]
        curve: Option<usize>,
    },
    /// Achievable-rate bound at one parameter point.
    Bound {
        chain: PathBuf,
        #[arg(long = "D")]
        distortion: f64,
        #[arg(long = "T")]
        block_len: usize,
        #[arg(long)]
        tau: usize,
        #[arg(long)]
        beta: f64,
    },
    /// Bound and term decomposition over a parameter grid.
    Sweep {
        chain: PathBuf,
        #[arg(long = "D")]
        distortion: f64,
        #[arg(long = "T-list", value_delimiter = ',', required = true)]
        blocks: Vec<usize>,
        #[arg(long = "tau-list", value_delimiter = ',', required = true)]
        taus: Vec<usize>,
        #[arg(long = "beta-list", value_delimiter = ',', required = true)]
        betas: Vec<f64>,
    },
    /// Monte Carlo random-coding experiment described by a JSON file.
    Codesim { experiment: PathBuf },
}

/// Process exit status for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NotConverged { .. } => 4,
        Error::NotIrreducible { .. }
        | Error::NotAperiodic { .. }
        | Error::HorizonTooLarge { .. }
        | Error::AlphabetTooLarge { .. }
        | Error::CapExceeded(_)
        | Error::ZeroProbabilityPrefix
        | Error::NegativeResidual { .. }
        | Error::DInfeasible(_)
        | Error::ZeroDistortionAmbiguous
        | Error::InfeasibleParameters(_)
        | Error::BadInterval { .. }
        | Error::InconsistentLambda { .. } => 3,
        Error::InvalidTransition(_)
        | Error::InvalidSource(_)
        | Error::LengthMismatch { .. }
        | Error::InvalidDistortion(_)
        | Error::ConfigMismatch(_)
        | Error::InvalidChannel(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("psimix: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_family() {
        let not_converged = Error::NotConverged { iterations: 10 };
        assert_eq!(exit_code(&not_converged), 4);
        assert_eq!(exit_code(&Error::CapExceeded("enumeration".into())), 3);
        assert_eq!(exit_code(&Error::ZeroDistortionAmbiguous), 3);
        assert_eq!(exit_code(&Error::ConfigMismatch("x".into())), 2);
    }
}
