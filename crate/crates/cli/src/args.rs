use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use unitary_ga::forward::{DEFAULT_DP_FLOOR, DEFAULT_DV_FLOOR};

/// Reconstruct linear optical unitaries from single-photon and two-photon data.
#[derive(Debug, Parser)]
#[command(name = "unitary-ga", version)]
pub struct Cli {
    /// Worker threads for parallel evaluation; defaults to all cores.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub threads: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic measurement files from a known unitary.
    Simulate(SimulateArgs),
    /// Run the genetic reconstruction on a dataset.
    Reconstruct(ReconstructArgs),
    /// Score a unitary against a dataset and optionally a reference.
    Evaluate(EvaluateArgs),
    /// Run the analytic inversion alone and dump every candidate.
    SeedAnalytic(SeedAnalyticArgs),
}

/// Where the measurements come from.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory or its `dataset.json` manifest.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["single", "visibility"])]
    pub data: Option<PathBuf>,

    /// Single-photon CSV (`i,j,p,dp`), used together with `--visibility`.
    #[arg(long, value_name = "CSV", requires = "visibility")]
    pub single: Option<PathBuf>,

    /// Visibility CSV (`i,j,p,q,v,dv`), used together with `--single`.
    #[arg(long, value_name = "CSV", requires = "single")]
    pub visibility: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Draw a Haar-random ground truth with this many modes.
    #[arg(long, value_name = "M", conflicts_with = "unitary", required_unless_present = "unitary")]
    pub haar: Option<usize>,

    /// Ground-truth unitary JSON.
    #[arg(long, value_name = "JSON")]
    pub unitary: Option<PathBuf>,

    /// Single-photon events per input mode.
    #[arg(long, conflicts_with = "noiseless")]
    pub shots: Option<u64>,

    /// Gaussian noise added to each visibility.
    #[arg(long, value_name = "SIGMA", conflicts_with = "noiseless")]
    pub sigma_v: Option<f64>,

    /// Exact predictions with floor errors.
    #[arg(long)]
    pub noiseless: bool,

    /// Lower bound on each single-photon error
    #[arg(long, default_value_t = DEFAULT_DP_FLOOR)]
    pub dp_floor: f64,

    /// Lower bound on each visibility error
    #[arg(long, default_value_t = DEFAULT_DV_FLOOR)]
    pub dv_floor: f64,

    /// Do not write the ground truth next to the data.
    #[arg(long)]
    pub no_truth: bool,

    /// RNG seed; drawn from entropy and recorded in the manifest when omitted
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("ga").multiple(true)))]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// GA configuration (TOML or JSON). A run manifest is accepted too.
    #[arg(long, value_name = "FILE", group = "ga")]
    pub config: Option<PathBuf>,

    /// Population size.
    #[arg(long, group = "ga")]
    pub pop: Option<usize>,

    /// Number of analytic seeds in the initial population.
    #[arg(long, value_name = "N", group = "ga", conflicts_with = "no_analytic")]
    pub analytic: Option<usize>,

    /// Start from Haar-random individuals only.
    #[arg(long, group = "ga")]
    pub no_analytic: bool,

    /// Per-gene mutation rate.
    #[arg(long, group = "ga")]
    pub gamma: Option<f64>,

    /// Weight of the single-photon term.
    #[arg(long, group = "ga")]
    pub weight: Option<f64>,

    /// Generation limit; with `--resume` it extends the checkpointed run.
    #[arg(long, value_name = "N")]
    pub max_iter: Option<u64>,

    /// Generations over which the best χ² must keep improving.
    #[arg(long, value_name = "N", group = "ga")]
    pub stall_window: Option<u64>,

    /// Relative improvement below which a window counts as stalled.
    #[arg(long, value_name = "TOL", group = "ga")]
    pub stall_tol: Option<f64>,

    /// Individuals copied unchanged into the next generation.
    #[arg(long, value_name = "N", group = "ga")]
    pub elite: Option<usize>,

    /// `roulette` or `tournament:K`.
    #[arg(long, value_name = "KIND", group = "ga")]
    pub selection: Option<String>,

    /// RNG seed; drawn from entropy and recorded in the manifest when omitted
    #[arg(long, group = "ga")]
    pub seed: Option<u64>,

    /// Write `checkpoint.json` every N generations.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub checkpoint_every: Option<u64>,

    /// Continue a run from a checkpoint, keeping its configuration.
    #[arg(long, value_name = "JSON", conflicts_with = "ga")]
    pub resume: Option<PathBuf>,

    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum McMethodArg {
    Analytic,
    GaShort,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Unitary to score.
    #[arg(long, value_name = "JSON")]
    pub unitary: PathBuf,

    #[command(flatten)]
    pub data: DataArgs,

    /// Reference unitary for gate fidelity.
    #[arg(long, value_name = "JSON")]
    pub reference: Option<PathBuf>,

    /// Require a gate-fidelity figure (needs `--reference`).
    #[arg(long)]
    pub fidelity: bool,

    /// Monte Carlo resamples for uncertainties.
    #[arg(long, value_name = "N")]
    pub mc: Option<usize>,

    /// How each resample is reconstructed
    #[arg(long, value_enum, default_value_t = McMethodArg::Analytic)]
    pub mc_method: McMethodArg,

    /// Weight of the single-photon term
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,

    /// RNG seed for the Monte Carlo resampling
    #[arg(long)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeedAnalyticArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Weight of the single-photon term used for ranking
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,

    /// Output directory.
    #[arg(short, long, value_name = "DIR")]
    pub output: PathBuf,
}
