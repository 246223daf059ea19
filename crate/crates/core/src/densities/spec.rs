use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    make_bump, make_exp_family, make_linear_pair, make_perturbed_family, BumpKind, DensityFamily, ExponentFn,
    Smoothness, ZMarginal,
};
use crate::error::{invalid, Result};
use crate::rng::stream_rng;

/// Sign tensor of a perturbed family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SignPattern {
    /// `(−1)^{Σ i_k + Σ j_k}`.
    #[default]
    Checkerboard,
    /// Independent fair signs drawn from the given seed.
    Random {
        seed: u64,
    },
    Explicit {
        signs: Vec<i8>,
    },
}

impl SignPattern {
    pub fn materialize(&self, dim_x: usize, dim_z: usize, r: usize, m: usize) -> Vec<i8> {
        let cells_z = m.pow(dim_z as u32);
        let total = r.pow(dim_x as u32) * cells_z;
        match self {
            SignPattern::Explicit { signs } => signs.clone(),
            SignPattern::Random { seed } => {
                use rand::Rng;
                let mut rng = stream_rng(*seed, &[0x5167]);
                (0..total).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
            }
            SignPattern::Checkerboard => (0..total)
                .map(|flat| {
                    let (i, j) = (flat / cells_z, flat % cells_z);
                    let digits = digit_sum(i, r) + digit_sum(j, m);
                    if digits.is_multiple_of(2) {
                        1
                    } else {
                        -1
                    }
                })
                .collect(),
        }
    }
}

fn digit_sum(mut flat: usize, base: usize) -> usize {
    let mut s = 0;
    while flat > 0 {
        s += flat % base;
        flat /= base;
    }
    s
}

fn one() -> usize {
    1
}

fn default_rho_fraction() -> f64 {
    0.9
}

/// Named family plus parameters, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Uniform {
        #[serde(default = "one")]
        dim_x: usize,
        #[serde(default = "one")]
        dim_z: usize,
        #[serde(default)]
        z_marginal: ZMarginal,
    },
    /// `p₁` (or `p₂` when `second`) of the linear pair.
    Linear {
        c: f64,
        #[serde(default = "one")]
        dim_x: usize,
        #[serde(default = "one")]
        dim_z: usize,
        #[serde(default)]
        second: bool,
        #[serde(default)]
        z_marginal: ZMarginal,
    },
    /// Bump-perturbed uniform density. Amplitude is either `rho` or
    /// `rho_fraction` of the largest amplitude the validity budget allows.
    Perturbed {
        #[serde(default = "one")]
        dim_x: usize,
        #[serde(default = "one")]
        dim_z: usize,
        r: usize,
        m: usize,
        #[serde(default)]
        rho: Option<f64>,
        #[serde(default = "default_rho_fraction")]
        rho_fraction: f64,
        #[serde(default)]
        signs: SignPattern,
        #[serde(default)]
        z_marginal: ZMarginal,
    },
    /// `g(x, z) = scale · mean(x) · mean(z)`.
    ExpProduct {
        #[serde(default = "one")]
        dim_x: usize,
        #[serde(default = "one")]
        dim_z: usize,
        scale: f64,
        #[serde(default)]
        z_marginal: ZMarginal,
    },
    /// `g(x, z) = scale · sin(2π(mean(x) + mean(z)))`.
    ExpWave {
        #[serde(default = "one")]
        dim_x: usize,
        #[serde(default = "one")]
        dim_z: usize,
        scale: f64,
        #[serde(default)]
        z_marginal: ZMarginal,
    },
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl FamilySpec {
    pub fn build(&self) -> Result<DensityFamily> {
        match self {
            FamilySpec::Uniform {
                dim_x,
                dim_z,
                z_marginal,
            } => {
                if *dim_x == 0 {
                    return Err(invalid("dim_x", "must be positive"));
                }
                DensityFamily::uniform(*dim_x, *dim_z)
                    .with_smoothness(Smoothness {
                        beta: f64::INFINITY,
                        gamma: 1.0,
                        w1: Some(0.0),
                        w2: Some(0.0),
                    })
                    .with_z_marginal(z_marginal.clone())
            }
            FamilySpec::Linear {
                c,
                dim_x,
                dim_z,
                second,
                z_marginal,
            } => {
                let (p1, p2) = make_linear_pair(*c, *dim_x, *dim_z)?;
                let f = if *second { p2 } else { p1 };
                f.with_z_marginal(z_marginal.clone())
            }
            FamilySpec::Perturbed {
                dim_x,
                dim_z,
                r,
                m,
                rho,
                rho_fraction,
                signs,
                z_marginal,
            } => {
                if *dim_x == 0 || *r == 0 || *m == 0 {
                    return Err(invalid("perturbed", "dim_x, r and m must be positive"));
                }
                let bump = make_bump(BumpKind::SmoothCompact);
                let rho = match rho {
                    Some(v) => *v,
                    None => max_rho(*dim_x, *dim_z, *r, *m, bump.sup_norm()) * rho_fraction,
                };
                let delta = signs.materialize(*dim_x, *dim_z, *r, *m);
                make_perturbed_family(*dim_x, *dim_z, delta, *r, *m, rho, bump)?
                    .with_smoothness(Smoothness {
                        beta: 1.0,
                        gamma: 1.0,
                        w1: None,
                        w2: None,
                    })
                    .with_z_marginal(z_marginal.clone())
            }
            FamilySpec::ExpProduct {
                dim_x,
                dim_z,
                scale,
                z_marginal,
            } => {
                let s = *scale;
                let g: ExponentFn = Arc::new(move |x: &[f64], z: &[f64]| s * mean(x) * mean(z));
                make_exp_family(*dim_x, *dim_z, g, s.abs(), 1.0, 1.0)?.with_z_marginal(z_marginal.clone())
            }
            FamilySpec::ExpWave {
                dim_x,
                dim_z,
                scale,
                z_marginal,
            } => {
                let s = *scale;
                let g: ExponentFn =
                    Arc::new(move |x: &[f64], z: &[f64]| s * (2.0 * std::f64::consts::PI * (mean(x) + mean(z))).sin());
                make_exp_family(*dim_x, *dim_z, g, s.abs(), 1.0, 1.0)?.with_z_marginal(z_marginal.clone())
            }
        }
    }
}

/// Largest `ρ` meeting `ρ^d r^{d_X/2} m^{d_Z/2} ‖h‖_∞^d ≤ 1/2`.
pub fn max_rho(dim_x: usize, dim_z: usize, r: usize, m: usize, bump_sup: f64) -> f64 {
    let d = (dim_x + dim_z) as f64;
    let denom = (r as f64).powf(dim_x as f64 / 2.0) * (m as f64).powf(dim_z as f64 / 2.0) * bump_sup.powf(d);
    (0.5 / denom).powf(1.0 / d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditional::ConditionalDensity;

    #[test]
    fn parses_and_builds() {
        let spec: FamilySpec =
            serde_json::from_str(r#"{"name":"perturbed","r":2,"m":2,"signs":{"kind":"random","seed":3}}"#).unwrap();
        let f = spec.build().unwrap();
        assert_eq!((f.dim_x(), f.dim_z()), (1, 1));
        let spec: FamilySpec = serde_json::from_str(r#"{"name":"linear","c":0.0}"#).unwrap();
        assert_eq!(spec.build().unwrap().density(&[0.25], &[0.5]), 0.5);
        let bad: FamilySpec = serde_json::from_str(r#"{"name":"perturbed","r":2,"m":2,"rho":5.0}"#).unwrap();
        assert!(bad.build().is_err());
        assert!(serde_json::from_str::<FamilySpec>(r#"{"name":"nope"}"#).is_err());
    }

    #[test]
    fn checkerboard_alternates() {
        let s = SignPattern::Checkerboard.materialize(1, 1, 2, 2);
        assert_eq!(s, vec![1, -1, -1, 1]);
        let s = SignPattern::Random { seed: 1 }.materialize(1, 1, 4, 4);
        assert_eq!(s.len(), 16);
        assert!(s.contains(&1) && s.contains(&-1));
    }
}
