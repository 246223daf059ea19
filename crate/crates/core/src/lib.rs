//! Conditional density estimation on the unit cube with binned kernel
//! smoothing, higher-order Legendre kernels and tuning-free minimum-distance
//! selection, plus synthetic ground-truth families and rate experiments.

pub mod conditional;
pub mod data;
pub mod densities;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod kernels;
pub mod quadrature;
pub mod rng;
pub mod selection;

pub use conditional::{ConditionalDensity, UniformDensity};
pub use data::Dataset;
pub use error::{CdeError, Result};
pub use estimator::{make_proper, theorem2_tuning, BinnedCDE, ProperCDE, Rounding, Tuning};
pub use evaluation::{
    binomial_inverse_moment, fit_loglog_slope, minimax_exponent, per_z_tv_report, rate_sweep, weighted_l1_loss,
    EstimatorSpec, LossEstimate, LossEvaluator, RateSweepConfig, RateSweepResult,
};
pub use kernels::{moment_check, Kernel1D, MomentReport, ProductKernel};
pub use quadrature::{GaussLegendre, MidpointGrid};
pub use selection::{
    adaptive_fit, oracle_inequality_check, yatracos_select, AdaptiveFit, AdaptiveOptions, YatracosStatistics,
};

/// Version string embedded in every output artifact.
pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
