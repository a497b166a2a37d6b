use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "offrl", version, about = "Offline RL solvers, bound calculators and discount sweeps")]
pub struct Cli {
    /// Base seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// JSON config with flat dotted keys, e.g. `{"seed": 3, "bcq-sweep.instances": 20}`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Sup-norm tolerance for fixed-point solvers.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random tabular MDP and write it as JSON.
    GenMdp(MdpSource),
    /// Run value iteration and write V*, Q* and the greedy policy.
    Solve(SolveArgs),
    /// Sample an i.i.d. dataset from a masked softmax behavior policy.
    Dataset(DatasetArgs),
    /// Support-constrained error sweep over noise ratios.
    BcqSweep(SweepArgs),
    /// Unconstrained error sweep over masked proportions.
    CoverageSweep(SweepArgs),
    /// Pessimistic value iteration suboptimality sweep over dataset sizes.
    PeviSweep(SweepArgs),
    /// Compare robust value iteration on the mixture set with the lower-discount solution.
    CheckLemma3(Lemma3Args),
    /// Check the value sandwich between two discounts for one policy.
    VerifyLemma1(Lemma1Args),
    /// Write the bound report over a discount grid.
    Bounds(BoundsArgs),
    /// Coverage coefficient of a dataset for a target policy.
    Coverage(CoverageArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenMdp(_) => "gen-mdp",
            Command::Solve(_) => "solve",
            Command::Dataset(_) => "dataset",
            Command::BcqSweep(_) => "bcq-sweep",
            Command::CoverageSweep(_) => "coverage-sweep",
            Command::PeviSweep(_) => "pevi-sweep",
            Command::CheckLemma3(_) => "check-lemma3",
            Command::VerifyLemma1(_) => "verify-lemma1",
            Command::Bounds(_) => "bounds",
            Command::Coverage(_) => "coverage",
        }
    }
}

/// Either an MDP file or the shape of a random one.
#[derive(Debug, Args, Clone)]
pub struct MdpSource {
    /// Read the MDP from this JSON file instead of generating one.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub r_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: MdpSource,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub source: MdpSource,
    /// Number of transitions.
    #[arg(long)]
    pub n: Option<usize>,
    /// Discount whose optimal Q-values drive the behavior softmax.
    #[arg(long)]
    pub gamma_e: Option<f64>,
    #[arg(long)]
    pub masked_proportion: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub gamma_e: Option<f64>,
    /// Discount grid as `lo:step:hi`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub mask_props: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub r_max: Option<f64>,
    /// `resample` or `optimistic-self-loop`.
    #[arg(long)]
    pub unseen_model: Option<String>,
    #[arg(long)]
    pub beta_c: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Lemma3Args {
    #[command(flatten)]
    pub source: MdpSource,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Lemma1Args {
    #[command(flatten)]
    pub source: MdpSource,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub gamma_e: Option<f64>,
    /// `uniform` or `optimal` (greedy at `gamma`).
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// Feature dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Dataset size.
    #[arg(long)]
    pub n: Option<f64>,
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long)]
    pub gamma_e: Option<f64>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub source: MdpSource,
    /// Dataset CSV with header `s,a,r,s_next`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// `optimal` (greedy at `gamma`) or `uniform`.
    #[arg(long)]
    pub policy: Option<String>,
    /// `initial` or `worst-state`.
    #[arg(long)]
    pub aggregation: Option<String>,
}
