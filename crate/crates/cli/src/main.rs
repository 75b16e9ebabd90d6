//! mechlab: deterministic single-item auction laboratory.
//!
//! Exit codes: 0 success, 1 domain/data error, 2 usage error.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mechlab",
    version,
    about = "Deterministic single-item auction laboratory"
)]
struct Cli {
    /// Worker threads (default: machine parallelism); the MECHLAB_THREADS
    /// environment variable overrides this flag.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete type spaces: enumeration and classification.
    Discrete {
        #[command(subcommand)]
        cmd: DiscreteCmd,
    },
    /// Border feasibility and deterministic implementability checks.
    Border {
        #[command(subcommand)]
        cmd: BorderCmd,
    },
    /// Piecewise auctions: boundary region and implementations.
    Piecewise {
        #[command(subcommand)]
        cmd: PiecewiseCmd,
    },
    /// Constant-welfare transfer path between two piecewise auctions.
    Transfer(TransferArgs),
    /// Interim-allocation transforms.
    Transform {
        #[command(subcommand)]
        cmd: TransformCmd,
    },
    /// Recurrences over quantile sequences.
    Sequence {
        #[command(subcommand)]
        cmd: SequenceCmd,
    },
    /// Monte-Carlo simulation of a named ex-post rule.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Mode {
    Rational,
    Float,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum IcClassArg {
    Bic,
    Dsic,
}

#[derive(Subcommand)]
enum DiscreteCmd {
    /// Enumerate all deterministic tables and emit the (wel, rev) frontier.
    Pareto(ParetoArgs),
    /// Classify one allocation table: BIC/DSIC, payments, outcomes.
    Classify(ClassifyArgs),
}

#[derive(Args)]
struct ParetoArgs {
    /// Prior configuration (kind = "discrete").
    #[arg(long)]
    prior: PathBuf,
    #[arg(long, value_enum)]
    class: IcClassArg,
    #[arg(long, value_enum, default_value = "rational")]
    mode: Mode,
    /// Enumeration cap on the table count.
    #[arg(long, default_value_t = 100_000_000)]
    cap: u64,
    /// Frontier CSV (columns wel, rev, witness_count).
    #[arg(long)]
    out: PathBuf,
    /// Optional witness report with payment-revenue intervals.
    #[arg(long)]
    witnesses: Option<PathBuf>,
    /// Optional scatter plot.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    prior: PathBuf,
    /// Table JSON: {"n":..,"m":..,"winner":[..]}.
    #[arg(long)]
    table: PathBuf,
    #[arg(long, value_enum, default_value = "rational")]
    mode: Mode,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BorderCmd {
    /// Randomized-BIC feasibility of interim curves.
    Check(BorderCheckArgs),
    /// Two-buyer deterministic DSIC implementability.
    Det2(Det2Args),
    /// Three-buyer constant interim allocations.
    Det3(Det3Args),
}

#[derive(Args)]
struct BorderCheckArgs {
    /// Model JSON (uniform/powerlaw/table); recorded in the report.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Curves JSON: {"grid":[..],"values":[[..],..]}.
    #[arg(long)]
    curves: PathBuf,
    /// Buyer count for the symmetric check (single-curve input).
    #[arg(short = 'n', long)]
    n: Option<usize>,
    /// Uniform lattice refinement per axis.
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Det2Args {
    #[arg(long)]
    curves: PathBuf,
    /// Require the always-sold equality form.
    #[arg(long)]
    always_sold: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Det3Args {
    /// The three constant interim allocations.
    #[arg(long, num_args = 3)]
    c: Vec<f64>,
    /// Verify the construction by simulation with this many samples.
    #[arg(long, value_parser = parse_count)]
    simulate: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PiecewiseCmd {
    /// Revenue band over a welfare grid with fitted piecewise witnesses.
    Region(RegionArgs),
    /// Deterministic implementation of one piecewise auction.
    Implement(ImplementArgs),
}

#[derive(Args)]
struct RegionArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(short = 'n', long)]
    n: usize,
    /// Number of welfare levels.
    #[arg(long, default_value_t = 41)]
    grid: usize,
    /// Discretization intervals of the boundary program.
    #[arg(long, default_value_t = 200)]
    gridn: usize,
    /// Region CSV (columns c, rev_min, rev_max).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct ImplementArgs {
    /// Piecewise auction JSON: {"family":..,"n":..,"r1":..,"r2":..,"k":..}.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, value_parser = parse_count)]
    simulate: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Value model for simulated outcomes (default uniform).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    model: PathBuf,
    /// First endpoint (piecewise auction JSON).
    #[arg(long)]
    a: PathBuf,
    /// Second endpoint at the same welfare.
    #[arg(long)]
    b: PathBuf,
    /// Homotopy intervals per leg.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TransformCmd {
    /// Per-buyer concave-envelope reshaping of an interim profile.
    Pareto(TransformParetoArgs),
}

#[derive(Args)]
struct TransformParetoArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    curves: PathBuf,
    /// Transformed curves JSON.
    #[arg(long)]
    out: PathBuf,
    /// Delta report (wel/rev changes, mass drift, feasibility).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SequenceCmd {
    /// The VCG-mixture quantile recurrence and its first violation.
    Corollary(CorollaryArgs),
}

#[derive(Args)]
struct CorollaryArgs {
    #[arg(long)]
    p: f64,
    #[arg(long = "max-n", default_value_t = 20)]
    max_n: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in rule: "efficient" (highest quantile wins) or "keep".
    #[arg(long, conflicts_with_all = ["params", "c"])]
    rule: Option<String>,
    /// Simulate a piecewise auction's deterministic implementation.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Simulate the three-buyer constant-allocation construction.
    #[arg(long, num_args = 3)]
    c: Option<Vec<f64>>,
    #[arg(short = 'n', long, default_value_t = 2)]
    n: usize,
    #[arg(long, value_parser = parse_count, default_value = "1e6")]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    bins: usize,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Accept plain or scientific-notation counts ("1000000" or "1e6").
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if f.is_finite() && f >= 0.0 && f <= u64::MAX as f64 {
        Ok(f.round() as u64)
    } else {
        Err(format!("`{s}` is not a representable count"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = std::env::var("MECHLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .or(cli.threads);
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
    let result = match cli.command {
        Command::Discrete { cmd } => match cmd {
            DiscreteCmd::Pareto(args) => commands::discrete_pareto(args),
            DiscreteCmd::Classify(args) => commands::discrete_classify(args),
        },
        Command::Border { cmd } => match cmd {
            BorderCmd::Check(args) => commands::border_check(args),
            BorderCmd::Det2(args) => commands::border_det2(args),
            BorderCmd::Det3(args) => commands::border_det3(args),
        },
        Command::Piecewise { cmd } => match cmd {
            PiecewiseCmd::Region(args) => commands::piecewise_region(args),
            PiecewiseCmd::Implement(args) => commands::piecewise_implement(args),
        },
        Command::Transfer(args) => commands::transfer(args),
        Command::Transform { cmd } => match cmd {
            TransformCmd::Pareto(args) => commands::transform_pareto(args),
        },
        Command::Sequence { cmd } => match cmd {
            SequenceCmd::Corollary(args) => commands::sequence_corollary(args),
        },
        Command::Simulate(args) => commands::simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
