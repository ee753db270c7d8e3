//! `hmtoc`: simulate, analyze and scan target oriented control of
//! higher-order difference equations.

// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod mapspec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Exit status 2: the inputs were valid but the numerics failed.
#[derive(Debug)]
pub struct NumericFailure(pub anyhow::Error);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for NumericFailure {}

#[derive(Parser)]
#[command(name = "hmtoc", version, about = "Target oriented control of k-th order difference equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct Common {
    /// Map: ricker:r=R,k=K | pielou:r=R,k=K | exp2 | expr:SOURCE,k=K
    #[arg(long, value_name = "SPEC")]
    pub map: Option<String>,
    /// Control `c=C,T=T` applied to the map; repeat to stack, first is innermost
    #[arg(long = "control", value_name = "c=C,T=T")]
    pub controls: Vec<String>,
    /// Settings file; flags override its keys
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the controlled map and write the orbit table
    Simulate(SimulateArgs),
    /// Locate fixed points and classify their linear stability
    FixedPoints(FixedPointsArgs),
    /// Stabilizing intensity thresholds at a fixed point
    Cstar(CstarArgs),
    /// Sampled and analytic Lipschitz constants around a fixed point
    Lipschitz(LipschitzArgs),
    /// Bifurcation sweep over the intensity of the outermost control
    Scan(ScanArgs),
    /// Make a point fixed with a corrective control, then stabilize it
    Target(TargetArgs),
    /// Collapse a stack of controls into one
    Compose(ComposeArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial values x1,...,xk (x1 is the most recent)
    #[arg(long, value_name = "X1,..,XK", allow_hyphen_values = true)]
    pub seed: Option<String>,
    /// Number of iterations [default: 100]
    #[arg(long)]
    pub steps: Option<u64>,
    /// Orbit table path [default: standard output]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixedPointsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Search interval is [0, BOUND] [default: the map's diagonal bound]
    #[arg(long)]
    pub bound: Option<f64>,
    /// Write the structured report (JSON) here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct CstarArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fixed point K
    #[arg(long, value_name = "K", conflicts_with = "find")]
    pub point: Option<f64>,
    /// Locate the fixed points and report every one
    #[arg(long)]
    pub find: bool,
    /// Lipschitz constant L for the global estimate [default: analytic, else bounded-map heuristic]
    #[arg(long, value_name = "L")]
    pub lipschitz: Option<f64>,
    /// Intensity samples for the Fujiwara estimate [default: 100]
    #[arg(long)]
    pub c_samples: Option<u64>,
    /// Fixed-point interval for the Fujiwara estimate [default: 0,2max{K,M,1}]
    #[arg(long, value_name = "LO,HI")]
    pub interval: Option<String>,
    /// Also locate the stability threshold empirically on a grid of this size
    #[arg(long, value_name = "GRID")]
    pub threshold: Option<u64>,
    /// Seed for sampled Lipschitz constants [default: 0]
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Write the structured report (JSON) here
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct LipschitzArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fixed point K
    #[arg(long, value_name = "K")]
    pub point: Option<f64>,
    /// Sample box is [0, HI]^k [default: 100]
    #[arg(long, value_name = "HI")]
    pub domain_hi: Option<f64>,
    /// Number of sample points [default: 100000]
    #[arg(long)]
    pub samples: Option<u64>,
    /// Seed of the sample shift [default: 0]
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Lipschitz constant on [0,2K]^k for the bounded-map constant [default: sampled, heuristic]
    #[arg(long, value_name = "L")]
    pub local_l: Option<f64>,
}

#[derive(Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    /// Preset: 1 exponential map T=1, 2 delayed Ricker T=0, 3 Pielou targeted to 6
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub figure: Option<u8>,
    /// Target of the swept control when --control is absent
    #[arg(long, value_name = "T")]
    pub target: Option<f64>,
    /// Grid c = i/N, i = 1..N [default: 300]
    #[arg(long, value_name = "N")]
    pub c_count: Option<u64>,
    /// Discarded iterations per row [default: 3000]
    #[arg(long)]
    pub transient: Option<u64>,
    /// Recorded iterations per row [default: 50]
    #[arg(long)]
    pub samples: Option<u64>,
    /// Seed of the initial-condition streams [default: 0]
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Initial conditions uniform on (LO, HI] [default: 0,2max{T,M,1}]
    #[arg(long, value_name = "LO,HI")]
    pub seed_box: Option<String>,
    /// Table output path
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Scatter plot output path
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    /// Also report the empirical stability threshold of the target
    #[arg(long)]
    pub threshold: bool,
}

#[derive(Args)]
pub struct TargetArgs {
    #[command(flatten)]
    pub common: Common,
    /// Point to make fixed and stabilize
    #[arg(long, value_name = "K")]
    pub point: Option<f64>,
    /// Fix the corrective target T and solve for c
    #[arg(long, value_name = "T", conflicts_with = "fix_c")]
    pub fix_t: Option<f64>,
    /// Fix the corrective intensity c and solve for T
    #[arg(long, value_name = "C")]
    pub fix_c: Option<f64>,
    /// Intensity of the stabilizing control
    #[arg(long, value_name = "C")]
    pub c2: Option<f64>,
    /// Verification run length [default: 2000]
    #[arg(long)]
    pub steps: Option<u64>,
    /// Verification seed [default: K/2 in every coordinate]
    #[arg(long, value_name = "X1,..,XK")]
    pub seed: Option<String>,
}

#[derive(Args)]
pub struct ComposeArgs {
    /// Control `c=C,T=T`; repeat, first is innermost
    #[arg(long = "control", value_name = "c=C,T=T")]
    pub controls: Vec<String>,
    /// Settings file; flags override its keys
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::FixedPoints(a) => commands::fixed_points(a),
        Command::Cstar(a) => commands::cstar(a),
        Command::Lipschitz(a) => commands::lipschitz(a),
        Command::Scan(a) => commands::scan(a),
        Command::Target(a) => commands::target(a),
        Command::Compose(a) => commands::compose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<NumericFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
