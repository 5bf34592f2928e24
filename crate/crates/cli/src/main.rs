#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairflow::assignment::{AssignError, Direction, SolverConfig};
use fairflow::fairness::{Aggregation, FairnessOptions, Metric};
use fairflow::pricing::PricingError;
use fairflow::sweep::SweepError;
use fairflow::NetworkError;

mod commands;

use commands::InputError;

#[derive(Parser, Debug)]
#[command(name = "fairflow", version, about = "Fairness-aware traffic assignment")]
struct Cli {
    /// Worker threads for sweeps and per-commodity work; FAIRFLOW_JOBS overrides it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the interpolated assignment at one α.
    Solve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        fairness: FairnessArgs,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Sample α densely and write one CSV row per sample.
    Sweep {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        fairness: FairnessArgs,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        /// Comma-separated subset of itap,isolution.
        #[arg(long, default_value = "itap")]
        methods: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fairness-efficiency frontiers over a β grid.
    Pareto {
        #[command(flatten)]
        source: SweepSource,
        /// `start:step:end` or a comma-separated list.
        #[arg(long, default_value = "1.0:0.05:2.0")]
        betas: String,
        #[arg(long, default_value = "itap,isolution")]
        methods: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Least total travel time among sampled flows with unfairness at most β.
    BetaSo {
        #[command(flatten)]
        source: SweepSource,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value = "itap")]
        method: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Tolls that enforce the flow at α, with verification.
    Price {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        alpha: f64,
        /// JSON list of (commodity, value_of_time, share); switches to LP tolls.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Use LP dual tolls even without a class file.
        #[arg(long)]
        lp: bool,
        /// Column generation rounds for the path LP.
        #[arg(long, default_value_t = 50)]
        generation_rounds: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Inefficiency bound along the sweep, its crossover, and feasible α per β.
    Bounds {
        #[command(flatten)]
        source: SweepSource,
        #[arg(long, default_value = "1.0:0.05:2.0")]
        betas: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct InstanceArgs {
    /// TNTP network file.
    #[arg(long, requires = "trips")]
    pub net: Option<PathBuf>,
    /// TNTP trips file.
    #[arg(long, requires = "net")]
    pub trips: Option<PathBuf>,
    /// JSON instance file.
    #[arg(long, conflicts_with_all = ["net", "pigou"])]
    pub instance: Option<PathBuf>,
    /// Pigou network `m[,epsilon[,demand]]`.
    #[arg(long, conflicts_with = "net")]
    pub pigou: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub gap: f64,
    /// Conjugate Frank-Wolfe directions.
    #[arg(long)]
    pub conjugate: bool,
    /// Drop recorded paths below this fraction of demand.
    #[arg(long, default_value_t = 1e-4)]
    pub prune: f64,
}

impl SolverArgs {
    pub fn config(&self) -> SolverConfig {
        SolverConfig {
            max_iterations: self.iters,
            target_relative_gap: self.gap,
            path_record_threshold: self.prune,
            direction: if self.conjugate { Direction::Conjugate } else { Direction::FrankWolfe },
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct FairnessArgs {
    /// Aggregate the Gini coefficient by max or demand-weighted mean.
    #[arg(long, default_value = "max")]
    pub gini_aggregation: String,
}

impl FairnessArgs {
    pub fn options(&self) -> Result<FairnessOptions, InputError> {
        let gini_aggregation = match self.gini_aggregation.as_str() {
            "max" => Aggregation::Max,
            "mean" => Aggregation::Mean,
            other => return Err(InputError(format!("unknown gini aggregation {other:?}"))),
        };
        Ok(FairnessOptions { gini_aggregation, ..FairnessOptions::default() })
    }
}

/// Sweep records come from CSV files or are computed from an instance.
#[derive(Args, Debug, Clone)]
pub struct SweepSource {
    /// I-TAP sweep CSV written by `fairflow sweep`.
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
    /// I-Solution sweep CSV.
    #[arg(long)]
    pub isolution_csv: Option<PathBuf>,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub fairness: FairnessArgs,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Unfairness metric gating the β selection.
    #[arg(long, default_value = "u")]
    pub metric: String,
}

impl SweepSource {
    pub fn metric(&self) -> Result<Metric, InputError> {
        Metric::parse(&self.metric).ok_or_else(|| InputError(format!("unknown metric {:?}", self.metric)))
    }
}

fn configure_jobs(flag: Option<usize>) -> anyhow::Result<()> {
    let jobs = match std::env::var("FAIRFLOW_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| InputError(format!("FAIRFLOW_JOBS must be a positive integer, got {v:?}")))?,
        Err(_) => flag.unwrap_or(0),
    };
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    Ok(())
}

fn assign_code(e: &AssignError) -> u8 {
    match e {
        AssignError::Routing { .. } => 3,
        AssignError::Network(_) | AssignError::Parameter(_) => 2,
        _ => 1,
    }
}

/// 2 for unreadable or invalid input, 3 for routing failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<NetworkError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<AssignError>() {
            return assign_code(e);
        }
        if let Some(e) = cause.downcast_ref::<SweepError>() {
            match e {
                SweepError::Assign(a) => return assign_code(a),
                SweepError::Parameter(_) | SweepError::Csv { .. } => return 2,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<PricingError>() {
            match e {
                PricingError::Assign(a) => return assign_code(a),
                PricingError::Classes(_) => return 2,
                _ => {}
            }
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    let result = configure_jobs(cli.jobs).and_then(|()| match cli.command {
        Command::Solve { instance, solver, fairness, alpha, out } => {
            commands::solve(&argv, &instance, &solver, &fairness, alpha, &out)
        }
        Command::Sweep { instance, solver, fairness, step, methods, out } => {
            commands::sweep(&argv, &instance, &solver, &fairness, step, &methods, &out)
        }
        Command::Pareto { source, betas, methods, out } => {
            commands::pareto(&argv, &source, &betas, &methods, &out)
        }
        Command::BetaSo { source, beta, method, out } => {
            commands::beta_so(&argv, &source, beta, &method, &out)
        }
        Command::Price { instance, solver, alpha, classes, lp, generation_rounds, out } => {
            commands::price(
                &argv,
                &instance,
                &solver,
                alpha,
                classes.as_deref(),
                lp,
                generation_rounds,
                &out,
            )
        }
        Command::Bounds { source, betas, out } => commands::bounds(&argv, &source, &betas, &out),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
