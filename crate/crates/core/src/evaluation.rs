//! Weighted L1 loss, per-z total-variation diagnostics, rate sweeps and the
//! small closed-form helpers they rely on.
//!
//! The loss of an estimate `p̂` against a truth `p` is
//! `∫∫ |p̂(x|z) − p(x|z)| dx p_Z(z) dz`; the z-integral is a Monte Carlo
//! average over draws from the truth's own Z sampler and the x-integral is a
//! midpoint rule.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::ConditionalDensity;
use crate::densities::DensityFamily;
use crate::error::{invalid, CdeError, Result};
use crate::estimator::{default_normalizer_points, make_proper, tuning_with_rounding, BinnedCDE, Rounding};
use crate::kernels::ProductKernel;
use crate::quadrature::MidpointGrid;
use crate::rng::{derive_seed, stream_rng};
use crate::selection::{adaptive_fit, AdaptiveOptions};

const LOSS_TAG: u64 = 0x4c4f_5353;
const SAMPLE_TAG: u64 = 0x4441_5441;
const FIT_TAG: u64 = 0x0046_4954;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEstimate {
    pub mean: f64,
    /// Standard error of the mean across z draws.
    pub std_error: f64,
    pub z_samples: usize,
    pub x_quadrature_points: usize,
    pub seed: u64,
}

/// Default x-quadrature resolution per axis for losses.
pub fn default_loss_points(dim_x: usize) -> usize {
    match dim_x {
        1 => 512,
        2 => 64,
        _ => 16,
    }
}

/// Fixed z draws and tabulated truth profiles, reusable across many estimates.
#[derive(Debug, Clone)]
pub struct LossEvaluator {
    dim_x: usize,
    dim_z: usize,
    grid: MidpointGrid,
    z_points: Vec<Vec<f64>>,
    truth_profiles: Vec<Vec<f64>>,
    seed: u64,
}

impl LossEvaluator {
    /// Draws `z_samples` values of Z from `truth` with `seed`.
    pub fn new(truth: &DensityFamily, z_samples: usize, x_points_per_axis: usize, seed: u64) -> Result<Self> {
        if z_samples == 0 {
            return Err(invalid("z_samples", "need at least one z draw"));
        }
        let mut rng = stream_rng(seed, &[LOSS_TAG]);
        let zs = (0..z_samples)
            .map(|_| truth.z_marginal().sample(truth.dim_z(), &mut rng))
            .collect();
        let mut ev = Self::with_z_points(truth, zs, x_points_per_axis)?;
        ev.seed = seed;
        Ok(ev)
    }

    /// Uses the given z values, equally weighted, with any density as the reference.
    pub fn with_z_points<T: ConditionalDensity + ?Sized>(
        truth: &T,
        z_points: Vec<Vec<f64>>,
        x_points_per_axis: usize,
    ) -> Result<Self> {
        if z_points.is_empty() {
            return Err(invalid("z_samples", "need at least one z value"));
        }
        if x_points_per_axis == 0 {
            return Err(invalid("x_points_per_axis", "must be positive"));
        }
        if let Some(z) = z_points.iter().find(|z| z.len() != truth.dim_z()) {
            return Err(CdeError::DimensionMismatch {
                expected: truth.dim_z(),
                got: z.len(),
            });
        }
        let grid = MidpointGrid::new(truth.dim_x(), x_points_per_axis);
        let truth_profiles = z_points.iter().map(|z| truth.profile(z, &grid)).collect();
        Ok(Self {
            dim_x: truth.dim_x(),
            dim_z: truth.dim_z(),
            grid,
            z_points,
            truth_profiles,
            seed: 0,
        })
    }

    pub fn z_points(&self) -> &[Vec<f64>] {
        &self.z_points
    }

    pub fn grid(&self) -> MidpointGrid {
        self.grid
    }

    /// `∫ |p̂(x|z) − p(x|z)| dx` for every stored z.
    pub fn per_z_l1<C: ConditionalDensity + ?Sized>(&self, estimate: &C) -> Result<Vec<f64>> {
        for (expected, got) in [(self.dim_x, estimate.dim_x()), (self.dim_z, estimate.dim_z())] {
            if expected != got {
                return Err(CdeError::DimensionMismatch { expected, got });
            }
        }
        let w = self.grid.weight();
        let mut memo: HashMap<usize, Vec<f64>> = HashMap::new();
        Ok(self
            .z_points
            .iter()
            .zip(&self.truth_profiles)
            .map(|(z, truth)| {
                let fresh;
                let est: &[f64] = match estimate.z_cell(z) {
                    Some(cell) => memo.entry(cell).or_insert_with(|| estimate.profile(z, &self.grid)),
                    None => {
                        fresh = estimate.profile(z, &self.grid);
                        &fresh
                    }
                };
                est.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum::<f64>() * w
            })
            .collect())
    }

    pub fn loss<C: ConditionalDensity + ?Sized>(&self, estimate: &C) -> LossEstimate {
        self.try_loss(estimate)
            .expect("estimate dimensions must match the truth")
    }

    pub fn try_loss<C: ConditionalDensity + ?Sized>(&self, estimate: &C) -> Result<LossEstimate> {
        let per_z = self.per_z_l1(estimate)?;
        let (mean, sd) = mean_and_sd(&per_z);
        Ok(LossEstimate {
            mean,
            std_error: sd / (per_z.len() as f64).sqrt(),
            z_samples: per_z.len(),
            x_quadrature_points: self.grid.len(),
            seed: self.seed,
        })
    }
}

/// Sample mean and (n−1)-normalized standard deviation; the latter is 0 for one value.
fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Monte Carlo estimate of the weighted L1 loss of `estimate` against `truth`.
pub fn weighted_l1_loss<C: ConditionalDensity + ?Sized>(
    estimate: &C,
    truth: &DensityFamily,
    z_samples: usize,
    x_points_per_axis: usize,
    seed: u64,
) -> Result<LossEstimate> {
    LossEvaluator::new(truth, z_samples, x_points_per_axis, seed)?.try_loss(estimate)
}

/// Distribution of `TV(p̂(·|z), p(·|z))` over a z grid and its Markov exceedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerZTvReport {
    pub z_points: usize,
    pub x_points_per_axis: usize,
    pub epsilon: f64,
    pub mean: f64,
    /// Quantiles at levels 0, 0.25, 0.5, 0.75, 0.9, 1.
    pub quantiles: Vec<(f64, f64)>,
    pub threshold: f64,
    /// Fraction of z values with TV above `mean / ε`.
    pub exceed_fraction: f64,
    /// `√(ε(1−ε)/G)` for `G` z values.
    pub mc_std_error: f64,
    pub pass: bool,
}

pub const TV_QUANTILE_LEVELS: [f64; 6] = [0.0, 0.25, 0.5, 0.75, 0.9, 1.0];

/// Per-z total variation on an equally weighted z grid.
///
/// Passes when the fraction of z above `mean/ε` is at most `ε` plus three
/// Monte Carlo standard errors.
pub fn per_z_tv_report<C: ConditionalDensity + ?Sized, T: ConditionalDensity + ?Sized>(
    estimate: &C,
    truth: &T,
    z_grid: &[Vec<f64>],
    x_points_per_axis: usize,
    epsilon: f64,
) -> Result<PerZTvReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let ev = LossEvaluator::with_z_points(truth, z_grid.to_vec(), x_points_per_axis)?;
    let tv: Vec<f64> = ev.per_z_l1(estimate)?.into_iter().map(|v| 0.5 * v).collect();
    let g = tv.len() as f64;
    let mean = tv.iter().sum::<f64>() / g;
    let threshold = mean / epsilon;
    let exceed_fraction = tv.iter().filter(|&&v| v > threshold).count() as f64 / g;
    let mc_std_error = (epsilon * (1.0 - epsilon) / g).sqrt();
    let mut sorted = tv.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = TV_QUANTILE_LEVELS
        .iter()
        .map(|&q| (q, sorted[((q * (g - 1.0)).round() as usize).min(sorted.len() - 1)]))
        .collect();
    Ok(PerZTvReport {
        z_points: tv.len(),
        x_points_per_axis,
        epsilon,
        mean,
        quantiles,
        threshold,
        exceed_fraction,
        mc_std_error,
        pass: exceed_fraction <= epsilon + 3.0 * mc_std_error,
    })
}

/// Exponent `−1/(d_X/β + d_Z/γ + 2)` of the minimax rate.
///
/// `γ > 1` is treated as `γ = 1` with a warning; `β = ∞` is allowed.
pub fn minimax_exponent(beta: f64, gamma: f64, dim_x: usize, dim_z: usize) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(invalid("beta", format!("must be positive, got {beta}")));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let gamma = if gamma > 1.0 {
        log::warn!("gamma = {gamma} > 1 forces z-independence; using gamma = 1");
        1.0
    } else {
        gamma
    };
    Ok(-1.0 / (dim_x as f64 / beta + dim_z as f64 / gamma + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseMoment {
    pub value: f64,
    /// Set when `p = 0` and the value is the limit 1.
    pub degenerate: bool,
}

/// `E[1/(S+1)]` for `S ~ Bin(n, p)`, i.e. `(1 − (1−p)^{n+1}) / ((n+1) p)`.
pub fn binomial_inverse_moment(n: u64, p: f64) -> Result<InverseMoment> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(InverseMoment {
            value: 1.0,
            degenerate: true,
        });
    }
    let k = n as f64 + 1.0;
    let tail = -(k * (-p).ln_1p()).exp_m1();
    Ok(InverseMoment {
        value: tail / (k * p),
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ln(loss)` on `ln(n)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(CdeError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    for (row, &(n, loss)) in points.iter().enumerate() {
        if !(loss > 0.0) {
            return Err(CdeError::NonPositiveLoss { row, loss });
        }
        if !(n > 0.0) {
            return Err(invalid(
                "n",
                format!("row {row}: sample size must be positive, got {n}"),
            ));
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("n", "need at least two distinct sample sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
    })
}

fn default_c() -> f64 {
    1.0
}

/// How each replication turns a sample into an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorSpec {
    /// Rate-optimal `(h, m)` for known smoothness.
    RateOptimal {
        beta: f64,
        gamma: f64,
        #[serde(default = "default_c")]
        c_h: f64,
        #[serde(default = "default_c")]
        c_m: f64,
        #[serde(default)]
        rounding: Rounding,
        #[serde(default)]
        kernel_order: usize,
        #[serde(default)]
        grid_points: Option<usize>,
    },
    /// The same `(h, m)` for every sample size.
    Explicit {
        h: f64,
        m: usize,
        #[serde(default)]
        kernel_order: usize,
        #[serde(default)]
        grid_points: Option<usize>,
    },
    Adaptive {
        #[serde(default)]
        kernel_order: usize,
        #[serde(default)]
        grid_points: Option<usize>,
        #[serde(default)]
        cross_fit: bool,
    },
    /// The true density itself; a zero-loss control.
    Truth,
}

/// Settings of a rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepConfig {
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub estimator: EstimatorSpec,
    pub seed: u64,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_points_per_axis: Option<usize>,
    /// Accepted distance between fitted slope and target exponent.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_z_samples() -> usize {
    256
}

fn default_tolerance() -> f64 {
    0.08
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub replication: usize,
    pub loss: f64,
    pub h: Option<f64>,
    pub m: Option<usize>,
    /// Whether `(h, m)` came from data-driven selection.
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub n: usize,
    pub replications: usize,
    pub mean_loss: f64,
    /// `sd / √replications`.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSweepResult {
    pub config: RateSweepConfig,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummaryRow>,
    /// `None` when some mean loss is zero and no log-log fit exists.
    pub fit: Option<SlopeFit>,
    pub degenerate: bool,
    pub target_exponent: Option<f64>,
    pub within_tolerance: Option<bool>,
}

/// Estimates the convergence exponent of `config.estimator` on `family`.
///
/// Every `(n, replication)` cell draws its own random stream from
/// `(seed, n, replication)`, so results do not depend on scheduling.
pub fn rate_sweep(family: &DensityFamily, config: &RateSweepConfig) -> Result<RateSweepResult> {
    let mut distinct = config.n_values.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(invalid("n_values", "need at least three distinct sample sizes"));
    }
    if let Some(&n) = config.n_values.iter().find(|&&n| n < 16) {
        return Err(invalid("n_values", format!("each n must be at least 16, got {n}")));
    }
    if config.replications == 0 {
        return Err(invalid("replications", "need at least one replication"));
    }
    let x_points = config
        .x_points_per_axis
        .unwrap_or_else(|| default_loss_points(family.dim_x()));
    let cells: Vec<(usize, usize)> = config
        .n_values
        .iter()
        .flat_map(|&n| (0..config.replications).map(move |r| (n, r)))
        .collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(n, rep)| run_cell(family, config, n, rep, x_points))
        .collect::<Result<_>>()?;

    let summary: Vec<SweepSummaryRow> = config
        .n_values
        .iter()
        .map(|&n| {
            let losses: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.loss).collect();
            let (mean, sd) = mean_and_sd(&losses);
            SweepSummaryRow {
                n,
                replications: losses.len(),
                mean_loss: mean,
                std_error: sd / (losses.len() as f64).sqrt(),
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = summary.iter().map(|s| (s.n as f64, s.mean_loss)).collect();
    let (fit, degenerate) = match fit_loglog_slope(&points) {
        Ok(f) => (Some(f), false),
        Err(CdeError::NonPositiveLoss { .. }) => (None, true),
        Err(e) => return Err(e),
    };
    let target_exponent = family
        .smoothness()
        .map(|s| minimax_exponent(s.beta, s.gamma, family.dim_x(), family.dim_z()))
        .transpose()?;
    let within_tolerance = match (fit, target_exponent) {
        (Some(f), Some(t)) => Some((f.slope - t).abs() <= config.tolerance),
        _ => None,
    };
    Ok(RateSweepResult {
        config: config.clone(),
        rows,
        summary,
        fit,
        degenerate,
        target_exponent,
        within_tolerance,
    })
}

fn run_cell(
    family: &DensityFamily,
    config: &RateSweepConfig,
    n: usize,
    rep: usize,
    x_points: usize,
) -> Result<SweepRow> {
    let tags = [n as u64, rep as u64];
    let mut rng = stream_rng(config.seed, &[SAMPLE_TAG, tags[0], tags[1]]);
    let (data, _) = family.sample_with_rng(n, &mut rng)?;
    let evaluator = LossEvaluator::new(
        family,
        config.z_samples,
        x_points,
        derive_seed(config.seed, &[LOSS_TAG, tags[0], tags[1]]),
    )?;
    let dx = family.dim_x();
    let fixed = |h: f64, m: usize, order: usize, grid: Option<usize>| -> Result<SweepRow> {
        let cde = BinnedCDE::fit(&data, h, m, ProductKernel::legendre(order, dx))?;
        let est = make_proper(cde, grid.unwrap_or_else(|| default_normalizer_points(dx)))?;
        Ok(SweepRow {
            n,
            replication: rep,
            loss: evaluator.try_loss(&est)?.mean,
            h: Some(h),
            m: Some(m),
            selected: false,
        })
    };
    match &config.estimator {
        EstimatorSpec::RateOptimal {
            beta,
            gamma,
            c_h,
            c_m,
            rounding,
            kernel_order,
            grid_points,
        } => {
            let t = tuning_with_rounding(n, dx, family.dim_z(), *beta, *gamma, *c_h, *c_m, *rounding)?;
            fixed(t.h, t.m, *kernel_order, *grid_points)
        }
        EstimatorSpec::Explicit {
            h,
            m,
            kernel_order,
            grid_points,
        } => fixed(*h, *m, *kernel_order, *grid_points),
        EstimatorSpec::Adaptive {
            kernel_order,
            grid_points,
            cross_fit,
        } => {
            let options = AdaptiveOptions {
                kernel_order: *kernel_order,
                grid_points_per_axis: grid_points.unwrap_or_else(|| default_normalizer_points(dx)),
                cross_fit: *cross_fit,
            };
            let fit = adaptive_fit(&data, &options, derive_seed(config.seed, &[FIT_TAG, tags[0], tags[1]]))?;
            Ok(SweepRow {
                n,
                replication: rep,
                loss: evaluator.try_loss(&fit.estimate)?.mean,
                h: Some(fit.chosen.h),
                m: Some(fit.chosen.m),
                selected: true,
            })
        }
        EstimatorSpec::Truth => Ok(SweepRow {
            n,
            replication: rep,
            loss: evaluator.try_loss(family)?.mean,
            h: None,
            m: None,
            selected: false,
        }),
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn provenance_block(provenance: &[String]) -> String {
    let mut buf = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(buf, "# {part}");
        }
    }
    buf
}

impl RateSweepResult {
    /// Per-replication table: `n,replication,loss,h,m,selected_flag`.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &[String]) -> Result<()> {
        let mut buf = provenance_block(provenance);
        buf.push_str("n,replication,loss,h,m,selected_flag\n");
        for r in &self.rows {
            let _ = writeln!(
                buf,
                "{},{},{},{},{},{}",
                r.n,
                r.replication,
                r.loss,
                opt(r.h),
                opt(r.m),
                u8::from(r.selected)
            );
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Plot-ready table: `n,log_n,mean_loss,log_loss,std_error,fit_log_loss`.
    pub fn write_plot_csv<W: Write>(&self, mut out: W, provenance: &[String]) -> Result<()> {
        let mut buf = provenance_block(provenance);
        buf.push_str("n,log_n,mean_loss,log_loss,std_error,fit_log_loss\n");
        for s in &self.summary {
            let log_n = (s.n as f64).ln();
            let log_loss = if s.mean_loss > 0.0 {
                s.mean_loss.ln().to_string()
            } else {
                String::new()
            };
            let fitted = opt(self.fit.map(|f| f.intercept + f.slope * log_n));
            let _ = writeln!(
                buf,
                "{},{},{},{},{},{}",
                s.n, log_n, s.mean_loss, log_loss, s.std_error, fitted
            );
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Slope, intercept, target and tolerance with the per-n table.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "slope": self.fit.map(|f| f.slope),
            "intercept": self.fit.map(|f| f.intercept),
            "r_squared": self.fit.map(|f| f.r_squared),
            "degenerate": self.degenerate,
            "target_exponent": self.target_exponent,
            "tolerance": self.config.tolerance,
            "within_tolerance": self.within_tolerance,
            "summary": self.summary,
            "config": self.config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::UniformDensity;
    use crate::densities::{make_linear_pair, FamilySpec};

    #[test]
    fn constant_estimate_against_linear_truth() {
        let (p1, _) = make_linear_pair(0.0, 1, 1).unwrap();
        let u = UniformDensity { dim_x: 1, dim_z: 1 };
        let l = weighted_l1_loss(&u, &p1, 16, 512, 1).unwrap();
        // Midpoint rule is exact for |1 − 2x| on an even grid.
        assert!((l.mean - 0.5).abs() < 1e-12);
        assert_eq!(l.std_error, 0.0);
        assert_eq!(weighted_l1_loss(&p1, &p1, 16, 512, 1).unwrap().mean, 0.0);
        let uni = DensityFamily::uniform(1, 1);
        assert_eq!(weighted_l1_loss(&u, &uni, 8, 64, 1).unwrap().mean, 0.0);
    }

    #[test]
    fn loss_is_symmetric_for_exact_evaluators() {
        let (p1, p2) = make_linear_pair(0.3, 2, 1).unwrap();
        let a = LossEvaluator::new(&p1, 32, 32, 5).unwrap();
        let b = LossEvaluator::with_z_points(&p2, a.z_points().to_vec(), 32).unwrap();
        let ab = a.loss(&p2).mean;
        let ba = b.loss(&p1).mean;
        assert!((ab - ba).abs() < 1e-14);
        assert!(ab > 0.0 && ab <= 2.0);
    }

    #[test]
    fn std_error_scales_with_inverse_root_of_draws() {
        let f: DensityFamily = serde_json::from_str::<FamilySpec>(r#"{"name":"perturbed","r":2,"m":2}"#)
            .unwrap()
            .build()
            .unwrap();
        let u = UniformDensity { dim_x: 1, dim_z: 1 };
        let small = weighted_l1_loss(&u, &f, 2000, 128, 3).unwrap();
        let large = weighted_l1_loss(&u, &f, 8000, 128, 4).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn per_z_tv_for_the_truth_is_zero() {
        let (p1, _) = make_linear_pair(0.5, 1, 1).unwrap();
        let zs: Vec<Vec<f64>> = (0..10).map(|i| vec![(i as f64 + 0.5) / 10.0]).collect();
        let r = per_z_tv_report(&p1, &p1, &zs, 64, 0.5).unwrap();
        assert_eq!(r.mean, 0.0);
        assert_eq!(r.exceed_fraction, 0.0);
        assert!(r.pass);
        assert!(per_z_tv_report(&p1, &p1, &zs, 64, 1.0).is_err());
    }

    #[test]
    fn exponent_examples() {
        assert_eq!(minimax_exponent(1.0, 1.0, 1, 1).unwrap(), -0.25);
        assert!((minimax_exponent(f64::INFINITY, 1.0, 5, 1).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(minimax_exponent(2.0, 1.0, 2, 1).unwrap(), -0.25);
        assert_eq!(minimax_exponent(1.0, 3.0, 1, 1).unwrap(), -0.25);
        assert!(minimax_exponent(0.0, 1.0, 1, 1).is_err());
        assert!(minimax_exponent(1.0, -1.0, 1, 1).is_err());
    }

    #[test]
    fn inverse_moment_examples() {
        assert!((binomial_inverse_moment(1, 0.5).unwrap().value - 0.75).abs() < 1e-15);
        assert!((binomial_inverse_moment(2, 1.0).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
        for n in [0u64, 3, 100] {
            let v = binomial_inverse_moment(n, 1.0).unwrap().value;
            assert!((v - 1.0 / (n as f64 + 1.0)).abs() < 1e-15);
        }
        let z = binomial_inverse_moment(9, 0.0).unwrap();
        assert!(z.degenerate && z.value == 1.0);
        assert!(binomial_inverse_moment(1, 1.5).is_err());
        // Tiny p: the series 1 − n p / 2 dominates.
        let tiny = binomial_inverse_moment(10, 1e-12).unwrap().value;
        assert!((tiny - (1.0 - 5e-12)).abs() < 1e-15);
    }

    #[test]
    fn inverse_moment_matches_enumeration() {
        for (n, p) in [(5u64, 0.2), (20, 0.5), (12, 0.9)] {
            let mut pmf = vec![1.0f64];
            for _ in 0..n {
                let mut next = vec![0.0; pmf.len() + 1];
                for (k, &w) in pmf.iter().enumerate() {
                    next[k] += w * (1.0 - p);
                    next[k + 1] += w * p;
                }
                pmf = next;
            }
            let direct: f64 = pmf.iter().enumerate().map(|(k, w)| w / (k as f64 + 1.0)).sum();
            assert!((binomial_inverse_moment(n, p).unwrap().value - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn slope_examples() {
        let exact: Vec<(f64, f64)> = [16.0, 64.0, 256.0, 1024.0]
            .iter()
            .map(|&n: &f64| (n, n.powf(-0.25)))
            .collect();
        let f = fit_loglog_slope(&exact).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let flat = fit_loglog_slope(&[(10.0, 0.2), (20.0, 0.2), (40.0, 0.2)]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert_eq!(flat.r_squared, 1.0);
        let third: Vec<(f64, f64)> = [8.0, 27.0, 1000.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 * n.powf(-1.0 / 3.0)))
            .collect();
        let g = fit_loglog_slope(&third).unwrap();
        assert!((g.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((g.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            fit_loglog_slope(&[(1.0, 0.1), (2.0, 0.0), (3.0, 0.1)]),
            Err(CdeError::NonPositiveLoss { row: 1, .. })
        ));
        assert!(matches!(
            fit_loglog_slope(&[(1.0, 0.1), (2.0, 0.1)]),
            Err(CdeError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn truth_sweep_is_degenerate() {
        let f = DensityFamily::uniform(1, 1);
        let cfg = RateSweepConfig {
            n_values: vec![16, 32, 64],
            replications: 2,
            estimator: EstimatorSpec::Truth,
            seed: 1,
            z_samples: 8,
            x_points_per_axis: Some(32),
            tolerance: 0.08,
        };
        let r = rate_sweep(&f, &cfg).unwrap();
        assert!(r.degenerate);
        assert!(r.fit.is_none());
        assert!(r.rows.iter().all(|row| row.loss == 0.0));
        let two = RateSweepConfig {
            n_values: vec![16, 32, 32],
            ..cfg
        };
        assert!(rate_sweep(&f, &two).is_err());
    }

    #[test]
    fn sweep_is_reproducible_and_writes_tables() {
        let f: DensityFamily = serde_json::from_str::<FamilySpec>(r#"{"name":"perturbed","r":2,"m":2}"#)
            .unwrap()
            .build()
            .unwrap();
        let cfg = RateSweepConfig {
            n_values: vec![64, 128, 256],
            replications: 3,
            estimator: EstimatorSpec::RateOptimal {
                beta: 1.0,
                gamma: 1.0,
                c_h: 1.0,
                c_m: 1.0,
                rounding: Rounding::Up,
                kernel_order: 0,
                grid_points: None,
            },
            seed: 42,
            z_samples: 32,
            x_points_per_axis: Some(128),
            tolerance: 0.08,
        };
        let a = rate_sweep(&f, &cfg).unwrap();
        let b = rate_sweep(&f, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.target_exponent, Some(-0.25));
        assert_eq!(a.rows[0].m, Some(3));
        let mut csv = Vec::new();
        a.write_csv(&mut csv, &["seed: 42".into()]).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# seed: 42\nn,replication,loss,h,m,selected_flag\n64,0,"));
        assert_eq!(text.lines().count(), 2 + 9);
        let mut plot = Vec::new();
        a.write_plot_csv(&mut plot, &[]).unwrap();
        assert_eq!(String::from_utf8(plot).unwrap().lines().count(), 4);
        assert_eq!(a.summary_json()["target_exponent"], serde_json::json!(-0.25));
    }
}
