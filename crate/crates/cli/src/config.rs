//! Per-command experiment configs: a JSON file, then flag overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use cde_core::densities::FamilySpec;
use cde_core::estimator::{Rounding, Tuning};
use cde_core::evaluation::EstimatorSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::Invalid;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GlobalArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0, value_name = "N")]
    pub threads: usize,
    /// Density family name, e.g. `perturbed`, `linear`, `exp-wave`.
    #[arg(long, global = true, value_name = "NAME")]
    pub family: Option<String>,
    /// Family parameter `KEY=VALUE`; VALUE is parsed as JSON when possible.
    #[arg(long = "param", global = true, value_name = "KEY=VALUE")]
    pub params: Vec<String>,
}

pub fn default_family() -> FamilySpec {
    serde_json::from_value(json!({"name": "perturbed", "r": 1, "m": 1})).expect("valid default family")
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn apply_family_flags(base: &mut Map<String, Value>, global: &GlobalArgs) -> anyhow::Result<()> {
    if global.family.is_none() && global.params.is_empty() {
        return Ok(());
    }
    let mut family = match base.remove("family") {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(Invalid("`family` must be an object".into()).into()),
        None => match serde_json::to_value(default_family())? {
            Value::Object(m) if global.family.is_none() => m,
            _ => Map::new(),
        },
    };
    if let Some(name) = &global.family {
        if family.get("name").and_then(Value::as_str) != Some(name.as_str()) {
            family = Map::new();
        }
        family.insert("name".into(), Value::String(name.clone()));
    }
    for p in &global.params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| Invalid(format!("--param expects KEY=VALUE, got `{p}`")))?;
        family.insert(k.trim().to_string(), parse_value(v.trim()));
    }
    base.insert("family".into(), Value::Object(family));
    Ok(())
}

/// Merges file, command flags and global flags (in that order) into `T`.
///
/// Returns the typed config and its fully resolved JSON form.
pub fn resolve<T: DeserializeOwned + Serialize>(
    global: &GlobalArgs,
    command_flags: Map<String, Value>,
) -> anyhow::Result<(T, Value)> {
    let mut base = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            match serde_json::from_str::<Value>(&text)
                .map_err(|e| Invalid(format!("config {}: {e}", path.display())))?
            {
                Value::Object(m) => m,
                _ => return Err(Invalid(format!("config {}: expected a JSON object", path.display())).into()),
            }
        }
        None => Map::new(),
    };
    base.extend(command_flags);
    if let Some(seed) = global.seed {
        base.insert("seed".into(), json!(seed));
    }
    if let Some(out) = &global.out {
        base.insert("out".into(), json!(out));
    }
    apply_family_flags(&mut base, global)?;
    let typed: T = serde_json::from_value(Value::Object(base)).map_err(|e| Invalid(format!("config: {e}")))?;
    let resolved = serde_json::to_value(&typed)?;
    Ok((typed, resolved))
}

/// Collects the flags that were actually given.
#[derive(Default)]
pub struct FlagMap(Map<String, Value>);

impl FlagMap {
    pub fn set<V: Serialize>(mut self, key: &str, value: Option<V>) -> Self {
        if let Some(v) = value {
            self.0
                .insert(key.into(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }

    pub fn flag(self, key: &str, on: bool) -> Self {
        self.set(key, on.then_some(true))
    }

    pub fn into_inner(self) -> Map<String, Value> {
        self.0
    }
}

fn zero() -> u64 {
    0
}

fn default_n() -> usize {
    1000
}

fn default_z_samples() -> usize {
    256
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Training data: a CSV file, or a fresh sample from `family`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    /// When set, data come from this file and `family` only serves as the truth for the loss.
    #[serde(default)]
    pub data: Option<PathBuf>,
    /// Skip the loss report even when the truth is known.
    #[serde(default)]
    pub no_truth: bool,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub kernel_order: usize,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub m: Option<usize>,
    /// Smoothness for rate-optimal tuning; defaults to the family's own.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub rounding: Rounding,
    #[serde(default)]
    pub adaptive: bool,
    #[serde(default)]
    pub cross_fit: bool,
    /// Normalizer (and selection) grid points per x axis.
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_points: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub no_truth: bool,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default)]
    pub kernel_order: usize,
    /// Candidate tunings; the adaptive grid for the full sample size when absent.
    #[serde(default)]
    pub candidates: Option<Vec<Tuning>>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// Failure probability of the oracle bound; `1/n` when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_points: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_epsilon() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// The truth.
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    /// A `fit` output or a bare estimator document.
    pub estimator: PathBuf,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_points: Option<usize>,
    /// Midpoint z values per axis for the per-z TV diagnostic; 1000 for one z axis,
    /// 32 per axis for two and 10 beyond when absent.
    #[serde(default)]
    pub tv_z_points: Option<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_n_values() -> Vec<usize> {
    vec![512, 1024, 2048, 4096, 8192, 16384]
}

fn default_replications() -> usize {
    20
}

fn default_estimator() -> EstimatorSpec {
    EstimatorSpec::RateOptimal {
        beta: 1.0,
        gamma: 1.0,
        c_h: 1.0,
        c_m: 1.0,
        rounding: Rounding::Up,
        kernel_order: 0,
        grid_points: None,
    }
}

fn default_tolerance() -> f64 {
    0.08
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweepCommandConfig {
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorSpec,
    #[serde(default = "zero")]
    pub seed: u64,
    #[serde(default = "default_z_samples")]
    pub z_samples: usize,
    #[serde(default)]
    pub x_points: Option<usize>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Per-replication CSV; the summary JSON and plot CSV are written next to it.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_holder_x() -> usize {
    64
}

fn default_holder_z() -> usize {
    8
}

fn default_tv_z() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothnessConfig {
    #[serde(default = "default_family")]
    pub family: FamilySpec,
    /// Hölder exponent; the family's own when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Constants to certify against; reports only the ratios when absent.
    #[serde(default)]
    pub w1: Option<f64>,
    #[serde(default)]
    pub w2: Option<f64>,
    /// Grid points per axis for the Hölder check in x.
    #[serde(default = "default_holder_x")]
    pub holder_x_points: usize,
    #[serde(default = "default_holder_z")]
    pub holder_z_points: usize,
    #[serde(default = "default_tv_z")]
    pub tv_z_points: usize,
    /// x quadrature points per axis for the TV check; the loss default when absent.
    #[serde(default)]
    pub tv_x_points: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_orders() -> Vec<usize> {
    (0..=4).collect()
}

fn default_dims() -> Vec<usize> {
    vec![1, 2]
}

fn default_moment_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelCheckConfig {
    #[serde(default = "default_orders")]
    pub orders: Vec<usize>,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    /// Highest total moment degree; each kernel's own order when absent.
    #[serde(default)]
    pub max_degree: Option<usize>,
    #[serde(default = "default_moment_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// `<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}
