use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod bounds;
mod config;
mod meta;
mod output;
mod selfcheck;
mod svg;
mod train;
mod worked;

/// Exit status for invalid input.
const EXIT_INVALID: u8 = 2;
/// Exit status for an aborted optimizer or task generator.
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "pblab", version, about = "PAC-Bayes and test-set generalisation bound workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a single scalar bound.
    Bounds(bounds::BoundsArgs),
    /// Train a convex comparator on a fixed (q, KL) distribution.
    TrainDelta {
        /// INI-style configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip the SVG plot.
        #[arg(long)]
        no_plots: bool,
    },
    /// Meta-train selection and meta-test evaluation over prior proportions.
    Meta {
        /// INI-style configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep existing rows of the per-task CSV and evaluate only missing ones.
        #[arg(long)]
        resume: bool,
        /// Skip the SVG plot.
        #[arg(long)]
        no_plots: bool,
    },
    /// Closed forms for the half-risk example.
    WorkedExample(worked::WorkedArgs),
    /// Compare the inversions against brute-force grid oracles.
    Selfcheck {
        /// Random inputs per oracle.
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        /// Seed of the random inputs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error the user can fix by changing the input.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    InvalidInput(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use pblab_core::Error;
    if err.downcast_ref::<InvalidInput>().is_some() {
        return EXIT_INVALID;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::NotARisk { .. } | Error::InvalidArgument(_) | Error::Parse { .. }) => EXIT_INVALID,
        Some(
            Error::OptimizerAborted(_)
            | Error::Factorization { .. }
            | Error::TooManyRejections { .. }
            | Error::NonFiniteDelta { .. }
            | Error::FlatCrossing { .. },
        ) => EXIT_ABORTED,
        None => 1,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("PBLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| invalid(format!("PBLAB_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Bounds(args) => bounds::run(&args).map(|()| true),
        Command::TrainDelta { config, out, no_plots } => train::run(&config, out, !no_plots).map(|()| true),
        Command::Meta { config, out, resume, no_plots } => meta::run(&config, out, resume, !no_plots).map(|()| true),
        Command::WorkedExample(args) => worked::run(&args).map(|()| true),
        Command::Selfcheck { cases, seed } => selfcheck::run(cases, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
