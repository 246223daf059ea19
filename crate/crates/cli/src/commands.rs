use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::Path;

use anyhow::Context;
use cde_core::densities::{check_holder, check_tv_smooth, DensityFamily};
use cde_core::estimator::{default_normalizer_points, make_proper, tuning_with_rounding, ProperCDE, Tuning};
use cde_core::evaluation::{default_loss_points, per_z_tv_report};
use cde_core::rng::derive_seed;
use cde_core::selection::{split_halves, tuning_grid, AdaptiveEstimate, OracleReport};
use cde_core::{
    adaptive_fit, moment_check, rate_sweep, yatracos_select, AdaptiveOptions, BinnedCDE, CdeError, ConditionalDensity,
    Dataset, LossEvaluator, MidpointGrid, ProductKernel, RateSweepConfig, VERSION,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{
    sibling, EvaluateConfig, FitConfig, GenerateConfig, KernelCheckConfig, RateSweepCommandConfig, SelectConfig,
    SmoothnessConfig,
};
use crate::Invalid;

const FIT_TAG: u64 = 1;
const LOSS_TAG: u64 = 2;

/// `#` header lines for CSV outputs.
fn provenance(command: &str, resolved: &Value) -> Vec<String> {
    vec![
        VERSION.to_string(),
        format!("command: {command}"),
        format!("config: {resolved}"),
    ]
}

fn envelope(command: &str, resolved: &Value) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("version".into(), json!(VERSION));
    m.insert("command".into(), json!(command));
    m.insert("config".into(), resolved.clone());
    m
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn write_json(out: Option<&Path>, value: &Value) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(out, text.as_bytes())
}

fn load_data(path: Option<&Path>, family: &DensityFamily, n: usize, seed: u64) -> anyhow::Result<Dataset> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(Dataset::read_csv(BufReader::new(file))?)
        }
        None => Ok(family.sample(n, seed)?),
    }
}

fn loss_evaluator(
    family: &DensityFamily,
    z_samples: usize,
    x_points: Option<usize>,
    seed: u64,
) -> anyhow::Result<LossEvaluator> {
    let x_points = x_points.unwrap_or_else(|| default_loss_points(family.dim_x()));
    Ok(LossEvaluator::new(
        family,
        z_samples,
        x_points,
        derive_seed(seed, &[LOSS_TAG]),
    )?)
}

fn grid_of(dim: usize, points_per_axis: usize) -> Vec<Vec<f64>> {
    MidpointGrid::new(dim, points_per_axis)
        .points()
        .chunks_exact(dim)
        .map(<[f64]>::to_vec)
        .collect()
}

pub fn generate(cfg: GenerateConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let data = family.sample(cfg.n, cfg.seed)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf, &provenance("generate", &resolved))?;
    write_bytes(cfg.out.as_deref(), &buf)
}

pub fn fit(cfg: FitConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let data = load_data(cfg.data.as_deref(), &family, cfg.n, cfg.seed)?;
    let grid_points = cfg
        .grid_points
        .unwrap_or_else(|| default_normalizer_points(data.dim_x()));
    let mut doc = envelope("fit", &resolved);
    doc.insert("n".into(), json!(data.len()));

    let (estimate, tuning) = if cfg.adaptive {
        let options = AdaptiveOptions {
            kernel_order: cfg.kernel_order,
            grid_points_per_axis: grid_points,
            cross_fit: cfg.cross_fit,
        };
        let fitted = adaptive_fit(&data, &options, derive_seed(cfg.seed, &[FIT_TAG]))?;
        doc.insert("selection".into(), serde_json::to_value(&fitted.diagnostics)?);
        (fitted.estimate, fitted.chosen)
    } else {
        let tuning = match (cfg.h, cfg.m) {
            (Some(h), Some(m)) => Tuning { h, m },
            (h, m) => {
                let smooth = family.smoothness();
                let beta = cfg.beta.or(smooth.map(|s| s.beta));
                let gamma = cfg.gamma.or(smooth.map(|s| s.gamma));
                let (Some(beta), Some(gamma)) = (beta, gamma) else {
                    return Err(Invalid("fit needs h and m, beta and gamma, or adaptive".into()).into());
                };
                let t = tuning_with_rounding(
                    data.len().max(1),
                    data.dim_x(),
                    data.dim_z(),
                    beta,
                    gamma,
                    1.0,
                    1.0,
                    cfg.rounding,
                )?;
                Tuning {
                    h: h.unwrap_or(t.h),
                    m: m.unwrap_or(t.m),
                }
            }
        };
        let kernel = ProductKernel::legendre(cfg.kernel_order, data.dim_x());
        let proper = make_proper(BinnedCDE::fit(&data, tuning.h, tuning.m, kernel)?, grid_points)?;
        (AdaptiveEstimate::Single(proper), tuning)
    };
    doc.insert("tuning".into(), serde_json::to_value(tuning)?);
    let parts: Vec<&ProperCDE> = match &estimate {
        AdaptiveEstimate::Single(p) => vec![p],
        AdaptiveEstimate::CrossFit(a, b) => vec![a, b],
    };
    let docs: Vec<_> = parts.iter().map(|p| p.to_document()).collect();
    doc.insert("estimators".into(), serde_json::to_value(docs)?);
    if !cfg.no_truth {
        let evaluator = loss_evaluator(&family, cfg.z_samples, cfg.x_points, cfg.seed)?;
        doc.insert("loss".into(), serde_json::to_value(evaluator.try_loss(&estimate)?)?);
    }
    write_json(cfg.out.as_deref(), &Value::Object(doc))
}

pub fn select(cfg: SelectConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let data = load_data(cfg.data.as_deref(), &family, cfg.n, cfg.seed)?;
    let grid_points = cfg
        .grid_points
        .unwrap_or_else(|| default_normalizer_points(data.dim_x()));
    let tunings = match cfg.candidates {
        Some(t) => t,
        None => tuning_grid(data.len().max(1), data.dim_x()),
    };
    if tunings.is_empty() {
        return Err(CdeError::NoCandidates.into());
    }
    let (train, holdout) = split_halves(&data, derive_seed(cfg.seed, &[FIT_TAG]));
    let candidates = tunings
        .par_iter()
        .map(|t| {
            let kernel = ProductKernel::legendre(cfg.kernel_order, train.dim_x());
            make_proper(BinnedCDE::fit(&train, t.h, t.m, kernel)?, grid_points)
        })
        .collect::<cde_core::Result<Vec<_>>>()?;
    let (selected, stats) = yatracos_select(&candidates, &holdout, grid_points)?;

    let mut doc = envelope("select", &resolved);
    doc.insert("train_size".into(), json!(train.len()));
    doc.insert("holdout_size".into(), json!(holdout.len()));
    doc.insert("candidates".into(), serde_json::to_value(&tunings)?);
    doc.insert("selected".into(), json!(selected));
    doc.insert("chosen".into(), serde_json::to_value(tunings[selected])?);
    doc.insert("statistics".into(), serde_json::to_value(&stats)?);
    if !cfg.no_truth {
        let evaluator = loss_evaluator(&family, cfg.z_samples, cfg.x_points, cfg.seed)?;
        let losses = candidates
            .par_iter()
            .map(|c| evaluator.try_loss(c).map(|l| l.mean))
            .collect::<cde_core::Result<Vec<_>>>()?;
        let delta = cfg.delta.unwrap_or(1.0 / data.len() as f64);
        let report = OracleReport::from_losses(selected, &losses, holdout.len(), delta)?;
        doc.insert("losses".into(), json!(losses));
        doc.insert("oracle".into(), serde_json::to_value(report)?);
    }
    write_json(cfg.out.as_deref(), &Value::Object(doc))
}

/// Reads a `fit` output (one or two estimators) or a bare estimator document.
fn read_estimate(path: &Path) -> anyhow::Result<AdaptiveEstimate> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
    let docs = match value.get("estimators") {
        Some(list) => serde_json::from_value(list.clone())?,
        None => vec![serde_json::from_value(value)?],
    };
    let mut parts = docs
        .iter()
        .map(ProperCDE::from_document)
        .collect::<cde_core::Result<Vec<_>>>()?;
    match parts.len() {
        1 => Ok(AdaptiveEstimate::Single(parts.remove(0))),
        2 => {
            let b = parts.remove(1);
            Ok(AdaptiveEstimate::CrossFit(parts.remove(0), b))
        }
        k => Err(Invalid(format!("{}: expected one or two estimators, found {k}", path.display())).into()),
    }
}

pub fn evaluate(cfg: EvaluateConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let estimate = read_estimate(&cfg.estimator)?;
    for (expected, got) in [(family.dim_x(), estimate.dim_x()), (family.dim_z(), estimate.dim_z())] {
        if expected != got {
            return Err(CdeError::DimensionMismatch { expected, got }.into());
        }
    }
    let x_points = cfg.x_points.unwrap_or_else(|| default_loss_points(family.dim_x()));
    let evaluator = loss_evaluator(&family, cfg.z_samples, Some(x_points), cfg.seed)?;
    let tv_points = cfg.tv_z_points.unwrap_or(match family.dim_z() {
        1 => 1000,
        2 => 32,
        _ => 10,
    });
    let z_grid = grid_of(family.dim_z(), tv_points);
    let tv = per_z_tv_report(&estimate, &family, &z_grid, x_points, cfg.epsilon)?;
    let mut doc = envelope("evaluate", &resolved);
    doc.insert("loss".into(), serde_json::to_value(evaluator.try_loss(&estimate)?)?);
    doc.insert("per_z_tv".into(), serde_json::to_value(tv)?);
    write_json(cfg.out.as_deref(), &Value::Object(doc))
}

pub fn rate_sweep_cmd(cfg: RateSweepCommandConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let sweep = RateSweepConfig {
        n_values: cfg.n_values,
        replications: cfg.replications,
        estimator: cfg.estimator,
        seed: cfg.seed,
        z_samples: cfg.z_samples,
        x_points_per_axis: cfg.x_points,
        tolerance: cfg.tolerance,
    };
    let result = rate_sweep(&family, &sweep)?;
    let mut summary = result.summary_json();
    summary["version"] = json!(VERSION);
    summary["config"] = resolved.clone();
    match cfg.out.as_deref() {
        Some(path) => {
            let prov = provenance("rate-sweep", &resolved);
            let mut rows = Vec::new();
            result.write_csv(&mut rows, &prov)?;
            write_bytes(Some(path), &rows)?;
            let mut plot = Vec::new();
            result.write_plot_csv(&mut plot, &prov)?;
            write_bytes(Some(&sibling(path, "plot.csv")), &plot)?;
            write_json(Some(&sibling(path, "summary.json")), &summary)?;
            log::info!("wrote {} and its summary and plot files", path.display());
        }
        None => write_json(None, &summary)?,
    }
    Ok(())
}

pub fn check_smoothness(cfg: SmoothnessConfig, resolved: Value) -> anyhow::Result<()> {
    let family = cfg.family.build()?;
    let smooth = family.smoothness();
    let beta = cfg.beta.or(smooth.map(|s| s.beta));
    let gamma = cfg.gamma.or(smooth.map(|s| s.gamma));
    let w1 = cfg.w1.or(smooth.and_then(|s| s.w1)).unwrap_or(f64::INFINITY);
    let w2 = cfg.w2.or(smooth.and_then(|s| s.w2)).unwrap_or(f64::INFINITY);
    let mut doc = envelope("check-smoothness", &resolved);
    let holder = match beta {
        Some(b) if b.is_finite() => {
            let xs = grid_of(family.dim_x(), cfg.holder_x_points);
            let zs = grid_of(family.dim_z(), cfg.holder_z_points);
            Some(check_holder(&family, b, w1, &xs, &zs)?)
        }
        _ => None,
    };
    let tv = match gamma {
        Some(g) => {
            let zs = grid_of(family.dim_z(), cfg.tv_z_points);
            let x_points = cfg.tv_x_points.unwrap_or_else(|| default_loss_points(family.dim_x()));
            Some(check_tv_smooth(
                &family,
                g,
                w2,
                &zs,
                &MidpointGrid::new(family.dim_x(), x_points),
            )?)
        }
        None => None,
    };
    doc.insert("holder".into(), serde_json::to_value(holder)?);
    doc.insert("tv".into(), serde_json::to_value(tv)?);
    write_json(cfg.out.as_deref(), &Value::Object(doc))
}

/// Returns whether every kernel passed.
pub fn kernel_check(cfg: KernelCheckConfig, resolved: Value) -> anyhow::Result<bool> {
    if cfg.dims.contains(&0) {
        return Err(Invalid("kernel dimensions must be positive".into()).into());
    }
    let mut reports = Vec::new();
    for &order in &cfg.orders {
        for &dim in &cfg.dims {
            let kernel = ProductKernel::legendre(order, dim);
            reports.push(moment_check(&kernel, cfg.max_degree.unwrap_or(order), cfg.tolerance));
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    let mut doc = envelope("kernel-check", &resolved);
    doc.insert("pass".into(), json!(pass));
    doc.insert("reports".into(), serde_json::to_value(reports)?);
    write_json(cfg.out.as_deref(), &Value::Object(doc))?;
    Ok(pass)
}
