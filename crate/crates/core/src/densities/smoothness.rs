//! Grid certificates for Hölder smoothness in x and γ-TV smoothness in z.
//!
//! These are finite-grid checks, not proofs: the reported ratio is a lower
//! bound on the true smoothness constant.

use serde::{Deserialize, Serialize};

use crate::conditional::ConditionalDensity;
use crate::error::{invalid, CdeError, Result};
use crate::quadrature::MidpointGrid;

const FD_STEP: f64 = 1e-5;
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolderReport {
    pub beta: f64,
    pub w1: f64,
    /// Derivative order checked: the largest integer strictly below β.
    pub derivative_order: usize,
    pub max_ratio: f64,
    /// `(x, x', z)` attaining `max_ratio`.
    pub worst: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub x_points: usize,
    pub z_points: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvReport {
    pub gamma: f64,
    pub w2: f64,
    pub max_ratio: f64,
    /// `(z, z')` attaining `max_ratio`.
    pub worst: Option<(Vec<f64>, Vec<f64>)>,
    pub z_points: usize,
    pub x_points_per_axis: usize,
    pub pass: bool,
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Largest integer strictly less than `beta`.
pub(crate) fn strict_floor(beta: f64) -> usize {
    (beta.ceil() - 1.0).max(0.0) as usize
}

fn gradient<D: ConditionalDensity + ?Sized>(family: &D, x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let lo = (x[k] - FD_STEP).max(0.0);
            let hi = (x[k] + FD_STEP).min(1.0);
            probe[k] = hi;
            let fh = family.density(&probe, z);
            probe[k] = lo;
            let fl = family.density(&probe, z);
            probe[k] = x[k];
            (fh - fl) / (hi - lo)
        })
        .collect()
}

/// Max over grid pairs of `|D^α p(x|z) − D^α p(x'|z)| / ‖x − x'‖₁^{β−⌊β⌋}`, compared to `w1`.
pub fn check_holder<D: ConditionalDensity + ?Sized>(
    family: &D,
    beta: f64,
    w1: f64,
    x_points: &[Vec<f64>],
    z_points: &[Vec<f64>],
) -> Result<HolderReport> {
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be positive"));
    }
    let order = strict_floor(beta);
    if order >= 2 {
        return Err(CdeError::UnsupportedSmoothness(order));
    }
    let exponent = beta - order as f64;
    let mut max_ratio = 0.0f64;
    let mut worst = None;
    for z in z_points {
        // One feature vector per x: the density itself, or its gradient.
        let features: Vec<Vec<f64>> = x_points
            .iter()
            .map(|x| {
                if order == 0 {
                    vec![family.density(x, z)]
                } else {
                    gradient(family, x, z)
                }
            })
            .collect();
        for i in 0..x_points.len() {
            for j in (i + 1)..x_points.len() {
                let dist = l1_dist(&x_points[i], &x_points[j]);
                if dist == 0.0 {
                    continue;
                }
                let diff = features[i]
                    .iter()
                    .zip(&features[j])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                let ratio = diff / dist.powf(exponent);
                if ratio > max_ratio {
                    max_ratio = ratio;
                    worst = Some((x_points[i].clone(), x_points[j].clone(), z.clone()));
                }
            }
        }
    }
    Ok(HolderReport {
        beta,
        w1,
        derivative_order: order,
        max_ratio,
        worst,
        x_points: x_points.len(),
        z_points: z_points.len(),
        pass: max_ratio <= w1 * (1.0 + RATIO_SLACK),
    })
}

/// Max over z-grid pairs of `‖p(·|z) − p(·|z')‖₁ / ‖z − z'‖₁^γ`, compared to `w2`.
pub fn check_tv_smooth<D: ConditionalDensity + ?Sized>(
    family: &D,
    gamma: f64,
    w2: f64,
    z_points: &[Vec<f64>],
    x_grid: &MidpointGrid,
) -> Result<TvReport> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "must be positive"));
    }
    let profiles: Vec<Vec<f64>> = z_points.iter().map(|z| family.profile(z, x_grid)).collect();
    let w = x_grid.weight();
    let mut max_ratio = 0.0f64;
    let mut worst = None;
    for i in 0..z_points.len() {
        for j in (i + 1)..z_points.len() {
            let dist = l1_dist(&z_points[i], &z_points[j]);
            if dist == 0.0 {
                continue;
            }
            let l1: f64 = profiles[i]
                .iter()
                .zip(&profiles[j])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * w;
            let ratio = l1 / dist.powf(gamma);
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = Some((z_points[i].clone(), z_points[j].clone()));
            }
        }
    }
    Ok(TvReport {
        gamma,
        w2,
        max_ratio,
        worst,
        z_points: z_points.len(),
        x_points_per_axis: x_grid.points_per_axis,
        pass: max_ratio <= w2 * (1.0 + RATIO_SLACK),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{make_bump, make_linear_pair, make_perturbed_family, BumpKind, DensityFamily};

    fn line(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![(i as f64 + 0.5) / n as f64]).collect()
    }

    /// `fraction` of the largest amplitude allowed by the validity budget.
    fn perturbed(fraction: f64) -> DensityFamily {
        let bump = make_bump(BumpKind::SmoothCompact);
        let rho = fraction / (2.0 * bump.sup_norm());
        make_perturbed_family(1, 1, vec![1, -1, -1, 1], 2, 2, rho, bump).unwrap()
    }

    #[test]
    fn strict_floor_convention() {
        assert_eq!(strict_floor(1.0), 0);
        assert_eq!(strict_floor(0.5), 0);
        assert_eq!(strict_floor(1.5), 1);
        assert_eq!(strict_floor(2.0), 1);
        assert_eq!(strict_floor(2.5), 2);
    }

    #[test]
    fn uniform_passes_with_zero_ratio() {
        let u = DensityFamily::uniform(1, 1);
        let r = check_holder(&u, 0.7, 1e-3, &line(30), &line(5)).unwrap();
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.pass);
        let t = check_tv_smooth(&u, 1.0, 1e-3, &line(10), &MidpointGrid::new(1, 64)).unwrap();
        assert_eq!(t.max_ratio, 0.0);
        assert!(t.pass);
    }

    #[test]
    fn linear_pair_holder_constant() {
        let (p1, _) = make_linear_pair(0.0, 1, 1).unwrap();
        let pass = check_holder(&p1, 1.0, 2.0, &line(40), &line(3)).unwrap();
        assert!((pass.max_ratio - 2.0).abs() < 1e-9);
        assert!(pass.pass);
        assert!(!check_holder(&p1, 1.0, 1.9, &line(40), &line(3)).unwrap().pass);
        // Gradient is constant: the β ∈ (1, 2] check sees no variation.
        let smooth = check_holder(&p1, 1.5, 1e-3, &line(20), &line(2)).unwrap();
        assert_eq!(smooth.derivative_order, 1);
        assert!(smooth.max_ratio < 1e-6);
        assert!(matches!(
            check_holder(&p1, 2.5, 1.0, &line(5), &line(1)),
            Err(CdeError::UnsupportedSmoothness(2))
        ));
    }

    #[test]
    fn oversized_perturbation_fails_budget() {
        let small = perturbed(0.5);
        let budget = check_holder(&small, 1.0, 0.0, &line(64), &line(16)).unwrap().max_ratio;
        let big = perturbed(1.0);
        let r = check_holder(&big, 1.0, budget, &line(64), &line(16)).unwrap();
        assert!(!r.pass);
        assert!(r.max_ratio > 1.5 * budget);
    }

    #[test]
    fn tv_ratio_is_stable_for_gamma_one() {
        let f = perturbed(1.0);
        let grid = MidpointGrid::new(1, 512);
        let coarse = check_tv_smooth(&f, 1.0, 1e9, &line(64), &grid).unwrap();
        let fine = check_tv_smooth(&f, 1.0, 1e9, &line(128), &grid).unwrap();
        assert!(coarse.max_ratio > 0.0);
        assert!((fine.max_ratio / coarse.max_ratio - 1.0).abs() < 0.1);
    }
}
