use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ncdoa::pipeline::Method;

mod commands;
mod manifest;
mod plot;

/// Single-snapshot DOA estimation with non-coherent sub-arrays.
#[derive(Debug, Parser)]
#[command(name = "ncdoa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate DOAs from one synthetic snapshot and dump the spectra.
    Estimate(RunArgs),
    /// Monte Carlo RMSE sweep over the configured SNR points.
    Sweep(RunArgs),
    /// One realisation, one spectrum file per method.
    Spectra(RunArgs),
    /// Noiseless recovery checks on small scenarios.
    Selftest {
        /// Output directory for the check log.
        #[arg(long, env = "NCDOA_OUT", default_value = "ncdoa-out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario and sweep description (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "NCDOA_OUT", default_value = "ncdoa-out")]
    out: PathBuf,
    /// SNR in dB; a comma list for sweeps.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Vec<f64>,
    /// Snapshot seed (estimate, spectra) or base seed (sweep).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo trials per SNR point.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma list of Proposed1, Proposed2, SparsityOnly, MUSIC.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Grid spacing in degrees.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Also write SVG plots next to the CSV files.
    #[arg(long)]
    plots: bool,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl From<ncdoa::error::Error> for Failure {
    fn from(e: ncdoa::error::Error) -> Self {
        use ncdoa::error::Error;
        match e {
            Error::Config { .. } | Error::Parse(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Estimate(args) => commands::estimate(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::Spectra(args) => commands::spectra(&args),
        Command::Selftest { out } => commands::selftest(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Runtime(msg) => eprintln!("runtime failure: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
