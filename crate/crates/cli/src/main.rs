// `!(x > 0.0)` style checks are deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::RunConfig;

/// Design, simulation and fitting toolkit for quantum emitters coupled to
/// microring resonators.
#[derive(Parser)]
#[command(name = "purcellkit", version)]
struct Cli {
    command: Command,
    /// Run configuration (.toml or .json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// RNG seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Command {
    /// Evaluate the efficiency chain of one device.
    Design,
    /// Efficiency over a parameter grid.
    Sweep,
    /// Spectral Purcell factor from a free-space / waveguide spectrum pair.
    Calibrate,
    /// Fit a resonance comb, g² trace or thickness study.
    Fit,
    /// Compare the Lindblad solver with the analytic branching fraction.
    Verify,
    /// Forward-model the two collection channels.
    Synthesize,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data.
    Input(String),
    /// A numerical procedure did not converge.
    NonConvergence(String),
}

impl From<purcellkit::Error> for CliError {
    fn from(e: purcellkit::Error) -> Self {
        match e {
            purcellkit::Error::NonConvergence(m) => CliError::NonConvergence(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = RunConfig::load(&cli.config).and_then(|cfg| {
        let ctx = commands::Context::new(cfg, &cli.out, cli.seed, cli.plot)?;
        match cli.command {
            Command::Design => commands::design(&ctx),
            Command::Sweep => commands::sweep(&ctx),
            Command::Calibrate => commands::calibrate(&ctx),
            Command::Fit => commands::fit(&ctx),
            Command::Verify => commands::verify(&ctx),
            Command::Synthesize => commands::synthesize(&ctx),
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::NonConvergence(m)) => {
            eprintln!("error: did not converge: {m}");
            ExitCode::from(3)
        }
    }
}
