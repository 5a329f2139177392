//! `e2v`: simulate, reconstruct, estimate, voxelize and evaluate event data.
//!
//! Exit status is 0 on success, 1 for bad input or usage, 2 for internal
//! failures. Results go to stdout; diagnostics go to stderr.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use settings::GlobalArgs;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<e2v_core::Error> for CliError {
    fn from(e: e2v_core::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "e2v",
    version,
    about = "Event-camera simulation and closed-form events-to-video reconstruction"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an event file from a directory of PGM frames
    Simulate {
        frames: PathBuf,
        events: PathBuf,
        /// Draw thresholds from N(theta, sigma²) using --seed instead of using them as given
        #[arg(long)]
        sigma: Option<f64>,
        /// Also write the frame timestamps as a boundary list
        #[arg(long)]
        boundaries_out: Option<PathBuf>,
    },
    /// Reconstruct frames from events, keyframes and a boundary list
    Reconstruct {
        events: PathBuf,
        keyframes: PathBuf,
        boundaries: PathBuf,
        out: PathBuf,
    },
    /// Fit theta_pos, theta_neg and k to events and frames
    Estimate {
        events: PathBuf,
        frames: PathBuf,
        /// Boundary list replacing the frame timestamps
        #[arg(long)]
        boundaries: Option<PathBuf>,
        /// Row construction: consecutive, first-frame or event-time
        #[arg(long, default_value = "consecutive")]
        anchor: e2v_core::RowAnchor,
        /// Write a detailed key=value report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Encode the events of [t0, t1) as a voxel grid
    Voxelize {
        events: PathBuf,
        out: PathBuf,
        #[arg(long)]
        t0: u64,
        #[arg(long)]
        t1: u64,
        /// Divide by the largest absolute value before writing
        #[arg(long)]
        normalized: bool,
    },
    /// Compare two frame directories with MSE and SSIM
    Evaluate {
        reconstructed: PathBuf,
        reference: PathBuf,
        /// Also write per-frame scores as comma-separated values
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate, reconstruct and evaluate a frame directory in one pass
    Roundtrip {
        frames: PathBuf,
        /// Keep the reconstructed frames here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic moving-texture sequence
    Synth {
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        frames: usize,
        #[arg(long, default_value_t = 1.0)]
        vx: f64,
        #[arg(long, default_value_t = 0.5)]
        vy: f64,
        #[arg(long, default_value_t = 0.0)]
        low: f64,
        #[arg(long, default_value_t = 1.0)]
        high: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = cli.global.resolve()?;
    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = settings.threads {
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| CliError::Internal(e.to_string()))?
    };
    pool.install(|| commands::dispatch(cli.command, &settings))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("e2v: {e}");
            ExitCode::from(e.code())
        }
        Err(_) => ExitCode::from(2),
    }
}
