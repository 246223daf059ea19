//! `cde`: generate synthetic data, fit and select conditional density
//! estimates, evaluate losses and run rate sweeps.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use cde_core::evaluation::EstimatorSpec;
use cde_core::CdeError;
use clap::{Parser, Subcommand};

use config::{resolve, FlagMap, GlobalArgs};

/// A configuration or input problem; exits with status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "cde", version, about = "Conditional density estimation experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from a density family and write it as CSV.
    Generate {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Fit a fixed-tuning or adaptive estimator and report its loss.
    Fit {
        /// Training CSV; sampled from the family when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        kernel_order: Option<usize>,
        #[arg(long)]
        adaptive: bool,
        #[arg(long)]
        cross_fit: bool,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        z_samples: Option<usize>,
    },
    /// Minimum-distance selection among candidate tunings on a split sample.
    Select {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        kernel_order: Option<usize>,
        #[arg(long)]
        grid_points: Option<usize>,
    },
    /// Loss and per-z total variation of a saved estimator against a family.
    Evaluate {
        /// Output of `fit`, or a bare estimator document.
        #[arg(long)]
        estimator: Option<PathBuf>,
        #[arg(long)]
        z_samples: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Loss against sample size and the fitted log-log slope.
    RateSweep {
        #[arg(long, value_delimiter = ',')]
        n_values: Option<Vec<usize>>,
        #[arg(long)]
        replications: Option<usize>,
        /// Use the tuning-free estimator instead of rate-optimal tuning.
        #[arg(long)]
        adaptive: bool,
        #[arg(long)]
        z_samples: Option<usize>,
    },
    /// Grid certificates of Hölder smoothness in x and TV smoothness in z.
    CheckSmoothness {
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        w1: Option<f64>,
        #[arg(long)]
        w2: Option<f64>,
    },
    /// Moment conditions of the Legendre kernels.
    KernelCheck {
        #[arg(long, value_delimiter = ',')]
        orders: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long)]
        max_degree: Option<usize>,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let g = &cli.global;
    if g.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(g.threads).build_global()?;
    }
    match cli.command {
        Command::Generate { n } => {
            let (cfg, resolved) = resolve(g, FlagMap::default().set("n", n).into_inner())?;
            commands::generate(cfg, resolved)?;
        }
        Command::Fit {
            data,
            n,
            h,
            m,
            kernel_order,
            adaptive,
            cross_fit,
            grid_points,
            z_samples,
        } => {
            let flags = FlagMap::default()
                .set("data", data)
                .set("n", n)
                .set("h", h)
                .set("m", m)
                .set("kernel_order", kernel_order)
                .flag("adaptive", adaptive || cross_fit)
                .flag("cross_fit", cross_fit)
                .set("grid_points", grid_points)
                .set("z_samples", z_samples);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            commands::fit(cfg, resolved)?;
        }
        Command::Select {
            data,
            n,
            kernel_order,
            grid_points,
        } => {
            let flags = FlagMap::default()
                .set("data", data)
                .set("n", n)
                .set("kernel_order", kernel_order)
                .set("grid_points", grid_points);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            commands::select(cfg, resolved)?;
        }
        Command::Evaluate {
            estimator,
            z_samples,
            epsilon,
        } => {
            let flags = FlagMap::default()
                .set("estimator", estimator)
                .set("z_samples", z_samples)
                .set("epsilon", epsilon);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            commands::evaluate(cfg, resolved)?;
        }
        Command::RateSweep {
            n_values,
            replications,
            adaptive,
            z_samples,
        } => {
            let estimator = adaptive.then_some(EstimatorSpec::Adaptive {
                kernel_order: 0,
                grid_points: None,
                cross_fit: false,
            });
            let flags = FlagMap::default()
                .set("n_values", n_values)
                .set("replications", replications)
                .set("estimator", estimator)
                .set("z_samples", z_samples);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            commands::rate_sweep_cmd(cfg, resolved)?;
        }
        Command::CheckSmoothness { beta, gamma, w1, w2 } => {
            let flags = FlagMap::default()
                .set("beta", beta)
                .set("gamma", gamma)
                .set("w1", w1)
                .set("w2", w2);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            commands::check_smoothness(cfg, resolved)?;
        }
        Command::KernelCheck {
            orders,
            dims,
            max_degree,
        } => {
            let flags = FlagMap::default()
                .set("orders", orders)
                .set("dims", dims)
                .set("max_degree", max_degree);
            let (cfg, resolved) = resolve(g, flags.into_inner())?;
            return commands::kernel_check(cfg, resolved);
        }
    }
    Ok(true)
}

fn is_validation(err: &anyhow::Error) -> bool {
    err.chain().any(|cause| {
        if cause.is::<Invalid>() || cause.is::<serde_json::Error>() {
            return true;
        }
        matches!(
            cause.downcast_ref::<CdeError>(),
            Some(
                CdeError::DimensionMismatch { .. }
                    | CdeError::OutOfUnitCube { .. }
                    | CdeError::InvalidParameter { .. }
                    | CdeError::PerturbationBudget { .. }
                    | CdeError::UnsupportedSmoothness(_)
                    | CdeError::NoCandidates
                    | CdeError::TooFewPoints { .. }
                    | CdeError::Format(_)
                    | CdeError::Json(_)
            )
        )
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some checks failed");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation(&err) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
