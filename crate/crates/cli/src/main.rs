mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Resolved;

#[derive(Parser, Debug)]
#[command(name = "sbl-lagrangian", version, about = "Sparse Bayesian discovery of Lagrangians from trajectory data")]
struct Cli {
    /// JSON or TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base settings the config file and flags are layered onto.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Settings of the published examples.
    Paper,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a system and write the dataset.
    Simulate(SimulateArgs),
    /// Discover a Lagrangian from data.
    Discover(DiscoverArgs),
    /// Derive the Hamiltonian and equations of motion of a discovered Lagrangian.
    Transform(TransformArgs),
    /// Integrate discovered equations with a posterior band.
    Predict(PredictArgs),
    /// Discovery error against measurement noise level.
    NoiseSweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct SourceArgs {
    /// duffing | penning | chain | string | beam (long names also accepted).
    #[arg(long)]
    pub system: Option<String>,
    /// Dataset CSV (with its JSON sidecar) instead of a simulated system.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Relative measurement noise added before use.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Simulated duration in seconds.
    #[arg(long = "T", alias = "t-final")]
    pub t_final: Option<f64>,
    /// Sample spacing in seconds.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum FormulationArg {
    /// Pointwise EL with a numerical time derivative.
    Strong,
    /// EL integrated against compact test functions.
    Weak,
}

#[derive(Args, Debug, Clone, Default)]
pub struct InferenceArgs {
    /// Retained Gibbs samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Burn-in sweeps.
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, value_enum)]
    pub formulation: Option<FormulationArg>,
}

#[derive(Args, Debug, Clone)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// Report the relative L2 error against this system's true Lagrangian.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    pub truth: Option<String>,
    /// Also write the retained samples to chain.jsonl.
    #[arg(long)]
    pub chain: bool,
}

#[derive(Args, Debug, Clone)]
pub struct TransformArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    /// lagrangian.json from a previous discover run.
    #[arg(long)]
    pub lagrangian: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct PredictArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub inference: InferenceArgs,
    #[arg(long)]
    pub lagrangian: Option<PathBuf>,
    /// Posterior draws for the band.
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
    /// Extend a discovered chain to this many masses before predicting.
    #[arg(long)]
    pub generalize: Option<usize>,
    /// RK4 steps per output sample.
    #[arg(long)]
    pub substeps: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Comma-separated systems (default: duffing, penning, chain, string).
    #[arg(long, value_delimiter = ',')]
    pub systems: Option<Vec<String>>,
    /// Comma-separated noise levels (default 0, 0.02, 0.05, 0.10, 0.15).
    #[arg(long, value_delimiter = ',')]
    pub zetas: Option<Vec<f64>>,
    /// Number of seeds per cell, counted up from --seed.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[command(flatten)]
    pub inference: InferenceArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let Preset::Paper = cli.preset;
    let run = Resolved::new(cli.config.as_deref(), cli.seed, cli.out.clone()).and_then(|r| match &cli.command {
        Command::Simulate(a) => commands::simulate(&r, a),
        Command::Discover(a) => commands::discover(&r, a),
        Command::Transform(a) => commands::transform(&r, a),
        Command::Predict(a) => commands::predict(&r, a),
        Command::NoiseSweep(a) => commands::noise_sweep(&r, a),
    });
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
