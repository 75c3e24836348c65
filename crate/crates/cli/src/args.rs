use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fshift_core::MapSpec;

/// Factor maps between Bernoulli shifts of the free group on a and b.
///
/// Reports go to standard output as JSON. Exit status is 0 on success or a
/// passing verdict, 1 on a failing verdict and 2 on a usage error.
#[derive(Debug, Parser)]
#[command(name = "fshift", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a factor map to a configuration on a ball.
    ///
    /// Maps: `ow` (Ornstein-Weiss doubling map U2 -> U4), `timar:m` (Timar
    /// bit-plane expansion U2 -> U_{2^m}), `star:p` (Weiss star map), `stage:n`,
    /// `planes:from:to`, `swap`, `id:<alphabet>`.
    Map(MapArgs),
    /// Check pushforward laws and equivariance of factor maps and the coinduction machinery.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Shannon entropy, the three-symbol entropy equation and the star-map boosting recursion.
    #[command(subcommand)]
    Entropy(EntropyCommand),
    /// Coinduction from the subgroup <a>: cocycle, coinduced action and the conjugacy J.
    #[command(subcommand)]
    Coinduce(CoinduceCommand),
    /// Plan and run chains of factor maps (star-map boosting, Timar expansion).
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Run the full acceptance suite and print its report.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub map: MapSpec,
    /// Radius of the ball the input is sampled on.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(0..=12))]
    pub radius: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Configuration dump to use instead of a sampled input (`-` for stdin).
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum VerifyCommand {
    /// Enumerate every input on ball(rin) and count output patterns on ball(rout) exactly.
    Exact(ExactArgs),
    /// Seeded Monte Carlo estimate of the output law on ball(rout); total-variation verdict.
    Mc(McArgs),
    /// Translation equivariance M(gx) = gM(x) for random g in ball(2).
    Equivariance(EquivarianceArgs),
    /// Equivariance of a per-coset window map coinduced from <a> up to the free group.
    ChainStep(ChainStepArgs),
    /// Cocycle identity of the coset section for <a> on random triples.
    Cocycle(TrialArgs),
    /// Round trip and equivariance of the conjugacy J, plus its exact pushforward.
    J(JArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub map: MapSpec,
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=12))]
    pub rin: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=12))]
    pub rout: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=256))]
    pub threads: u16,
    /// Omit the per-pattern table from the report.
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long)]
    pub map: MapSpec,
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=64))]
    pub rin: u32,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u32).range(0..=12))]
    pub rout: u32,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Total-variation threshold; defaults to the 4-sigma rule.
    #[arg(long, value_parser = parse_threshold)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=256))]
    pub threads: u16,
    #[arg(long)]
    pub summary: bool,
}

#[derive(Debug, Args)]
pub struct EquivarianceArgs {
    #[arg(long)]
    pub map: MapSpec,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(0..=10))]
    pub radius: u32,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WindowMapKind {
    /// Identity on U2.
    Identity,
    /// Symbol swap 0 <-> 1 on U2.
    Swap,
    /// Sliding block y(j) = x(j) + x(j+1) on U2.
    Difference,
}

#[derive(Debug, Args)]
pub struct ChainStepArgs {
    #[arg(long, value_enum)]
    pub phi: WindowMapKind,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(0..=10))]
    pub radius: u32,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct JArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(0..=10))]
    pub radius: u32,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Radius of the exhaustive pushforward count (0 to skip).
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(0..=2))]
    pub exact_radius: u32,
}

#[derive(Debug, Subcommand)]
pub enum EntropyCommand {
    /// Shannon entropy in nats of the given probability weights.
    Shannon {
        #[arg(required = true, num_args = 1..)]
        weights: Vec<f64>,
    },
    /// The p in (0, 1/3) whose law (p, p, 1-2p) has entropy H, for 0 < H < log 2.
    SolveP {
        #[arg(allow_negative_numbers = true)]
        h: f64,
    },
    /// Iterate H -> H + 2p log 2 with p = solve-p(H) until H >= log 2.
    Recursion {
        #[arg(allow_negative_numbers = true)]
        h0: f64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum CoinduceCommand {
    /// Cocycle a(g, c) = s(c)^-1 g s(g^-1 c), printed as the exponent of a.
    Cocycle {
        #[arg(long)]
        g: String,
        /// Any element of the coset; its section representative is used.
        #[arg(long)]
        c: String,
    },
    /// Coinduced action of g on a coset configuration dump.
    Act {
        #[arg(long)]
        g: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// The conjugacy J: a configuration dump to per-coset windows.
    J {
        #[arg(long)]
        input: PathBuf,
        /// Half-width of each coset window; defaults to the input radius.
        #[arg(long)]
        window: Option<u32>,
    },
    /// The inverse of J: per-coset windows back to a configuration dump.
    Jinv {
        #[arg(long)]
        input: PathBuf,
    },
    /// A coinduced chain step J^-1 . phi . J applied to a configuration dump.
    Step {
        #[arg(long, value_enum)]
        phi: WindowMapKind,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Star-map boosting plan from initial entropy H0, with external re-coding stages between star stages.
    Plan {
        #[arg(long = "H0", alias = "h0", allow_negative_numbers = true)]
        h0: f64,
    },
    /// Run a plan file on a sampled or supplied configuration.
    Run {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(0..=12))]
        radius: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Configuration dump to use instead of a sampled input.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Include the output configuration in the report.
        #[arg(long)]
        output: bool,
    },
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..=256))]
    pub threads: u16,
}

fn parse_threshold(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(t) if t > 0.0 && t <= 1.0 => Ok(t),
        _ => Err(format!("threshold must be in (0, 1], got {s}")),
    }
}
