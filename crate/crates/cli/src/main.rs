//! `volsplit`: simulate, decompose and report five-axis volumetric error
//! campaigns.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "volsplit", version, about = "Volumetric error decomposition for five-axis machine tools")]
pub struct Cli {
    /// Campaign config (simulate) or campaign manifest (other commands).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Overrides the campaign seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Degree of the motion-error polynomials.
    #[arg(long, global = true, default_value_t = volsplit_core::decomposition::DEFAULT_DEGREE)]
    pub degree: usize,

    /// Half-width of the delay search (ms).
    #[arg(long, global = true, default_value_t = 50.0)]
    pub delay_window_ms: f64,

    #[arg(long, global = true, value_enum, default_value_t = DelayMethodArg::Ssd)]
    pub delay_method: DelayMethodArg,

    /// Huber reweighting of the motion fit.
    #[arg(long, global = true)]
    pub robust: bool,

    /// Condition-number limit of the link-error identification.
    #[arg(long, global = true, default_value_t = volsplit_core::kinematics::DEFAULT_MAX_CONDITION)]
    pub max_condition: f64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DelayMethodArg {
    /// Squared difference of positions.
    Ssd,
    /// Cross-correlation of sample increments.
    Xcorr,
    /// Motion onset of the synchronisation tag.
    Tag,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic campaign with ground truth.
    Simulate,
    /// Decompose every session of a manifest.
    Decompose {
        /// Manifest file or campaign directory (defaults to --config).
        manifest: Option<PathBuf>,
    },
    /// Identify the link errors on the reference session.
    Identify { manifest: Option<PathBuf> },
    /// Tables, power-law fit and plot from decomposition artifacts.
    Report {
        /// Directory holding one artifact directory per session.
        artifacts: PathBuf,
    },
    /// Print the estimated controller-to-encoder delay of every session.
    SyncCheck { manifest: Option<PathBuf> },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
