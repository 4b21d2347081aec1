//! `wgcorr` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "wgcorr", version, about = "Photon correlations of disordered qubit chains on a waveguide")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of disorder realizations K.
    #[arg(long, global = true)]
    pub realizations: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Treat divergent correlations as an error.
    #[arg(long, global = true)]
    pub strict: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// g_T and g_R for one detuning sample.
    Eval,
    /// Grid of a Monte Carlo or clean-chain quantity over parameter axes.
    Sweep,
    /// Histogram of g over disorder, as JSON.
    Pdf,
    /// Probability of antibunching ℙ(g < 1), as JSON.
    Pa,
    /// Detuning sets with g on a prescribed level, as JSON lines.
    Nppb,
    /// Pulsed-drive amplitudes and correlations versus time, as CSV.
    Timedomain,
    /// Built-in consistency checks.
    Selfcheck {
        #[arg(long, hide = true)]
        perturb_phase: bool,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("divergent correlation")]
    Divergent,
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
    #[error(transparent)]
    Lib(#[from] wgcorr::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use wgcorr::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(E::InvalidConfig { .. } | E::DimensionMismatch { .. } | E::StepTooLarge { .. } | E::Json(_) | E::Parse(_)) => 2,
            CliError::Divergent => 3,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Eval => commands::eval(&cli.common),
        Command::Sweep => commands::sweep(&cli.common),
        Command::Pdf => commands::pdf(&cli.common),
        Command::Pa => commands::pa(&cli.common),
        Command::Nppb => commands::nppb(&cli.common),
        Command::Timedomain => commands::timedomain(&cli.common),
        Command::Selfcheck { perturb_phase } => commands::selfcheck(&cli.common, perturb_phase),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
