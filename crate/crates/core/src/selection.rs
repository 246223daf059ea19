//! Minimum-distance (Yatracos) selection among candidate conditional densities
//! and the sample-splitting adaptive estimator built on it.
//!
//! For candidates `f_1..f_N` the Yatracos set `A_ij` holds the `(x, z)` with
//! `f_i(x|z) > f_j(x|z)`. A candidate's discrepancy on a set compares the mass
//! it predicts for the set, averaged over the holdout `Z_k`, with the empirical
//! frequency of holdout pairs falling into it. The winner minimizes the worst
//! discrepancy over all ordered pairs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::ConditionalDensity;
use crate::data::Dataset;
use crate::error::{invalid, CdeError, Result};
use crate::estimator::{make_proper, BinnedCDE, ProperCDE, Tuning};
use crate::evaluation::LossEvaluator;
use crate::kernels::ProductKernel;
use crate::quadrature::MidpointGrid;
use crate::rng::derive_seed;

const SPLIT_TAG: u64 = 0x0053_504c_4954;

/// Outcome of one selection round.
///
/// Matrices are `N × N`, row-major, indexed `[i * N + j]` for the set `A_ij`;
/// diagonals are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YatracosStatistics {
    pub candidates: usize,
    pub holdout_size: usize,
    pub grid: MidpointGrid,
    /// `P_n(A_ij)`.
    pub empirical_mass: Vec<f64>,
    /// `D_j(A_ij)`: discrepancy of candidate `j` on its own pair set.
    pub pair_discrepancy: Vec<f64>,
    /// Worst discrepancy of each candidate over every set `A_ab`.
    pub sup_discrepancy: Vec<f64>,
    /// Set `(a, b)` attaining each candidate's supremum.
    pub sup_set: Vec<Option<(usize, usize)>>,
    pub selected: usize,
}

impl YatracosStatistics {
    pub fn empirical(&self, i: usize, j: usize) -> f64 {
        self.empirical_mass[i * self.candidates + j]
    }

    pub fn discrepancy(&self, i: usize, j: usize) -> f64 {
        self.pair_discrepancy[i * self.candidates + j]
    }
}

/// Candidates checked to be proper densities on a grid.
pub struct CandidateSet<C> {
    candidates: Vec<C>,
}

impl<C: ConditionalDensity> CandidateSet<C> {
    /// Verifies nonnegativity and unit mass (`± tol`) at the given z values.
    pub fn new(candidates: Vec<C>, z_points: &[Vec<f64>], grid: &MidpointGrid, tol: f64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(CdeError::NoCandidates);
        }
        for (c, cand) in candidates.iter().enumerate() {
            for z in z_points {
                let profile = cand.profile(z, grid);
                if let Some(v) = profile.iter().find(|v| !(**v >= 0.0)) {
                    return Err(invalid(
                        "candidates",
                        format!("candidate {c} takes value {v} at z = {z:?}"),
                    ));
                }
                let mass = grid.integrate_values(&profile);
                if (mass - 1.0).abs() > tol {
                    return Err(invalid(
                        "candidates",
                        format!("candidate {c} integrates to {mass} at z = {z:?}"),
                    ));
                }
            }
        }
        Ok(Self { candidates })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn as_slice(&self) -> &[C] {
        &self.candidates
    }

    pub fn into_inner(self) -> Vec<C> {
        self.candidates
    }
}

/// Holdout points that share every candidate's z-cell share all profiles.
struct Groups {
    representative: Vec<usize>,
    weight: Vec<f64>,
}

fn group_holdout<C: ConditionalDensity>(cands: &[C], holdout: &Dataset) -> Groups {
    let n = holdout.len();
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut representative = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for k in 0..n {
        let z = holdout.z(k);
        let mut key: Vec<usize> = Vec::with_capacity(cands.len() + 1);
        let mut continuous = false;
        for c in cands {
            match c.z_cell(z) {
                Some(cell) => key.push(cell),
                None => {
                    continuous = true;
                    key.push(usize::MAX);
                }
            }
        }
        if continuous {
            key.push(k);
        }
        let next = representative.len();
        let g = *ids.entry(key).or_insert(next);
        if g == next {
            representative.push(k);
            counts.push(0);
        }
        counts[g] += 1;
    }
    Groups {
        representative,
        weight: counts.into_iter().map(|c| c as f64 / n as f64).collect(),
    }
}

/// Σ mask·values with four independent accumulators.
#[inline]
fn masked_sum(mask: &[f64], values: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mc = mask.chunks_exact(4);
    let vc = values.chunks_exact(4);
    let (mr, vr) = (mc.remainder(), vc.remainder());
    for (m, v) in mc.zip(vc) {
        acc[0] += m[0] * v[0];
        acc[1] += m[1] * v[1];
        acc[2] += m[2] * v[2];
        acc[3] += m[3] * v[3];
    }
    let mut tail = 0.0;
    for (m, v) in mr.iter().zip(vr) {
        tail += m * v;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Picks the candidate whose predicted masses best match the holdout on every Yatracos set.
///
/// Inner integrals use the midpoint grid with `grid_points_per_axis` nodes per
/// axis; empirical frequencies use exact evaluations at the holdout points.
/// Ties go to the lowest index.
pub fn yatracos_select<C: ConditionalDensity>(
    cands: &[C],
    holdout: &Dataset,
    grid_points_per_axis: usize,
) -> Result<(usize, YatracosStatistics)> {
    let n_cand = cands.len();
    if n_cand == 0 {
        return Err(CdeError::NoCandidates);
    }
    if holdout.is_empty() {
        return Err(invalid("holdout", "need at least one holdout point"));
    }
    if grid_points_per_axis == 0 {
        return Err(invalid("grid_points_per_axis", "must be positive"));
    }
    for c in cands {
        for (expected, got) in [(c.dim_x(), holdout.dim_x()), (c.dim_z(), holdout.dim_z())] {
            if expected != got {
                return Err(CdeError::DimensionMismatch { expected, got });
            }
        }
    }
    holdout.check_unit_cube()?;

    let n = holdout.len();
    let grid = MidpointGrid::new(holdout.dim_x(), grid_points_per_axis);
    let g_len = grid.len();
    let cell_weight = grid.weight();

    // Exact values at the holdout points decide P_n.
    let point_values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|k| {
            let (x, z) = (holdout.x(k), holdout.z(k));
            cands.iter().map(move |c| c.density(x, z))
        })
        .collect();
    let mut empirical_mass = vec![0.0; n_cand * n_cand];
    for row in point_values.chunks_exact(n_cand) {
        for a in 0..n_cand {
            for b in 0..n_cand {
                if row[a] > row[b] {
                    empirical_mass[a * n_cand + b] += 1.0;
                }
            }
        }
    }
    for v in &mut empirical_mass {
        *v /= n as f64;
    }

    let groups = group_holdout(cands, holdout);
    // profiles[g][c * g_len ..] = f_c(· | Z_rep(g)) on the grid.
    let mut cache: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut profiles: Vec<Vec<f64>> = Vec::with_capacity(groups.representative.len());
    for &k in &groups.representative {
        let z = holdout.z(k);
        let mut block = Vec::with_capacity(n_cand * g_len);
        for (c, cand) in cands.iter().enumerate() {
            match cand.z_cell(z) {
                Some(cell) => {
                    let p = cache.entry((c, cell)).or_insert_with(|| cand.profile(z, &grid));
                    block.extend_from_slice(p);
                }
                None => block.extend(cand.profile(z, &grid)),
            }
        }
        profiles.push(block);
    }
    drop(cache);
    // ∫ f_c(·|Z_k) over the whole cube, per group.
    let totals: Vec<Vec<f64>> = profiles
        .iter()
        .map(|block| {
            block
                .chunks_exact(g_len)
                .map(|p| p.iter().sum::<f64>() * cell_weight)
                .collect()
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..n_cand)
        .flat_map(|a| ((a + 1)..n_cand).map(move |b| (a, b)))
        .collect();

    // For each unordered pair: predicted masses of A_ab and A_ba under every candidate.
    let masses: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut in_ab = vec![0.0; n_cand];
            let mut in_ba = vec![0.0; n_cand];
            let mut gt = vec![0.0; g_len];
            let mut eq = vec![0.0; g_len];
            for (g, block) in profiles.iter().enumerate() {
                let w = groups.weight[g];
                let pa = &block[a * g_len..(a + 1) * g_len];
                let pb = &block[b * g_len..(b + 1) * g_len];
                let (mut n_gt, mut n_eq) = (0usize, 0usize);
                for x in 0..g_len {
                    let (va, vb) = (pa[x], pb[x]);
                    let is_gt = va > vb;
                    let is_eq = va == vb;
                    n_gt += is_gt as usize;
                    n_eq += is_eq as usize;
                    gt[x] = f64::from(u8::from(is_gt));
                    eq[x] = f64::from(u8::from(is_eq));
                }
                if n_eq == g_len {
                    continue;
                }
                for c in 0..n_cand {
                    let total = totals[g][c];
                    let pc = &block[c * g_len..(c + 1) * g_len];
                    let s_gt = match n_gt {
                        0 => 0.0,
                        k if k == g_len => total,
                        _ => masked_sum(&gt, pc) * cell_weight,
                    };
                    let s_eq = if n_eq == 0 {
                        0.0
                    } else {
                        masked_sum(&eq, pc) * cell_weight
                    };
                    in_ab[c] += w * s_gt;
                    in_ba[c] += w * (total - s_gt - s_eq).max(0.0);
                }
            }
            (in_ab, in_ba)
        })
        .collect();

    let mut pair_discrepancy = vec![0.0; n_cand * n_cand];
    let mut sup_discrepancy = vec![0.0f64; n_cand];
    let mut sup_set = vec![None; n_cand];
    for (&(a, b), (in_ab, in_ba)) in pairs.iter().zip(&masses) {
        let p_ab = empirical_mass[a * n_cand + b];
        let p_ba = empirical_mass[b * n_cand + a];
        pair_discrepancy[a * n_cand + b] = (in_ab[b] - p_ab).abs();
        pair_discrepancy[b * n_cand + a] = (in_ba[a] - p_ba).abs();
        for c in 0..n_cand {
            for (d, set) in [((in_ab[c] - p_ab).abs(), (a, b)), ((in_ba[c] - p_ba).abs(), (b, a))] {
                if d > sup_discrepancy[c] {
                    sup_discrepancy[c] = d;
                    sup_set[c] = Some(set);
                }
            }
        }
    }

    let mut selected = 0;
    for c in 1..n_cand {
        if sup_discrepancy[c] < sup_discrepancy[selected] {
            selected = c;
        }
    }
    Ok((
        selected,
        YatracosStatistics {
            candidates: n_cand,
            holdout_size: n,
            grid,
            empirical_mass,
            pair_discrepancy,
            sup_discrepancy,
            sup_set,
            selected,
        },
    ))
}

/// Comparison of the selected candidate against the best one in the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub selected: usize,
    pub selected_loss: f64,
    pub best: usize,
    pub best_loss: f64,
    pub candidates: usize,
    pub holdout_size: usize,
    pub delta: f64,
    /// `14 √(log(N/δ)/n)`.
    pub excess: f64,
    /// `3 L_min + excess`.
    pub bound: f64,
    pub pass: bool,
}

/// Excess term `14 √(log(N/δ)/n)` of the oracle inequality.
pub fn oracle_excess(candidates: usize, holdout_size: usize, delta: f64) -> f64 {
    14.0 * ((candidates as f64 / delta).ln() / holdout_size as f64).sqrt()
}

impl OracleReport {
    /// Builds the report from known candidate losses.
    pub fn from_losses(selected: usize, losses: &[f64], holdout_size: usize, delta: f64) -> Result<Self> {
        if losses.is_empty() {
            return Err(CdeError::NoCandidates);
        }
        if selected >= losses.len() {
            return Err(invalid("selected", "index out of range"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if holdout_size == 0 {
            return Err(invalid("holdout", "need at least one holdout point"));
        }
        let mut best = 0;
        for (c, &l) in losses.iter().enumerate() {
            if l < losses[best] {
                best = c;
            }
        }
        let excess = oracle_excess(losses.len(), holdout_size, delta);
        let bound = 3.0 * losses[best] + excess;
        Ok(Self {
            selected,
            selected_loss: losses[selected],
            best,
            best_loss: losses[best],
            candidates: losses.len(),
            holdout_size,
            delta,
            excess,
            bound,
            pass: losses[selected] <= bound,
        })
    }
}

/// Runs selection and checks `L_sel ≤ 3 L_min + 14 √(log(N/δ)/n)` with losses from `evaluator`.
pub fn oracle_inequality_check<C: ConditionalDensity + Send>(
    cands: &[C],
    evaluator: &LossEvaluator,
    holdout: &Dataset,
    delta: f64,
    grid_points_per_axis: usize,
) -> Result<OracleReport> {
    let (selected, _) = yatracos_select(cands, holdout, grid_points_per_axis)?;
    let losses: Vec<f64> = cands.par_iter().map(|c| evaluator.loss(c).mean).collect();
    OracleReport::from_losses(selected, &losses, holdout.len(), delta)
}

/// `⌈v⌉` for non-negative `v`, ignoring round-off just above an integer.
fn ceil_guarded(v: f64) -> u32 {
    (v - 1e-9).ceil().max(0.0) as u32
}

/// Bandwidths `2^k n^{-1/d_X}` for `k = 0..=⌈log₂ n^{1/d_X}⌉`.
pub fn bandwidth_grid(n: usize, dim_x: usize) -> Vec<f64> {
    let base = (n as f64).powf(-1.0 / dim_x as f64);
    let top = ceil_guarded((n as f64).log2() / dim_x as f64);
    (0..=top).map(|k| base * 2f64.powi(k as i32)).collect()
}

/// Bin counts `1, 2, 4, …, 2^{⌈log₂(n)/2⌉}`.
pub fn bin_grid(n: usize) -> Vec<usize> {
    let top = ceil_guarded((n as f64).log2() / 2.0);
    (0..=top).map(|k| 1usize << k).collect()
}

/// Full tuning grid, bandwidth-major.
pub fn tuning_grid(n: usize, dim_x: usize) -> Vec<Tuning> {
    let ms = bin_grid(n);
    bandwidth_grid(n, dim_x)
        .into_iter()
        .flat_map(|h| ms.iter().map(move |&m| Tuning { h, m }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub kernel_order: usize,
    /// Nodes per axis for both the candidates' normalizers and the selection integrals.
    pub grid_points_per_axis: usize,
    /// Also select with the halves swapped and average the two estimates.
    pub cross_fit: bool,
}

impl AdaptiveOptions {
    pub fn new(kernel_order: usize, dim_x: usize) -> Self {
        Self {
            kernel_order,
            grid_points_per_axis: crate::estimator::default_normalizer_points(dim_x),
            cross_fit: false,
        }
    }
}

/// Selection record for one (training half, holdout half) assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRound {
    pub train_size: usize,
    pub holdout_size: usize,
    pub selected: usize,
    pub chosen: Tuning,
    pub sup_discrepancy: Vec<f64>,
}

/// JSON-ready diagnostics of an adaptive fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiagnostics {
    pub n: usize,
    pub split_seed: u64,
    pub options: AdaptiveOptions,
    pub h_values: Vec<f64>,
    pub m_values: Vec<usize>,
    /// Candidate `c` uses `grid[c]`.
    pub grid: Vec<Tuning>,
    pub rounds: Vec<SelectionRound>,
}

/// The adaptive estimate: one selected candidate, or the average of two under cross-fitting.
#[derive(Debug, Clone, PartialEq)]
pub enum AdaptiveEstimate {
    Single(ProperCDE),
    CrossFit(ProperCDE, ProperCDE),
}

impl AdaptiveEstimate {
    pub fn primary(&self) -> &ProperCDE {
        match self {
            AdaptiveEstimate::Single(p) | AdaptiveEstimate::CrossFit(p, _) => p,
        }
    }
}

impl ConditionalDensity for AdaptiveEstimate {
    fn dim_x(&self) -> usize {
        self.primary().dim_x()
    }
    fn dim_z(&self) -> usize {
        self.primary().dim_z()
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        match self {
            AdaptiveEstimate::Single(p) => p.density(x, z),
            AdaptiveEstimate::CrossFit(a, b) => 0.5 * (a.density(x, z) + b.density(x, z)),
        }
    }
    fn z_cell(&self, z: &[f64]) -> Option<usize> {
        match self {
            AdaptiveEstimate::Single(p) => p.z_cell(z),
            AdaptiveEstimate::CrossFit(a, b) => {
                let ma = a.base().m().pow(a.dim_z() as u32);
                Some(a.z_cell(z)? + ma * b.z_cell(z)?)
            }
        }
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        match self {
            AdaptiveEstimate::Single(p) => p.profile(z, grid),
            AdaptiveEstimate::CrossFit(a, b) => a
                .profile(z, grid)
                .into_iter()
                .zip(b.profile(z, grid))
                .map(|(u, v)| 0.5 * (u + v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveFit {
    pub estimate: AdaptiveEstimate,
    pub chosen: Tuning,
    pub diagnostics: SelectionDiagnostics,
    /// Candidates fitted on the first half, in grid order.
    pub candidates: Vec<ProperCDE>,
    pub statistics: YatracosStatistics,
}

/// Seeded shuffle; even positions form the first half, odd positions the second.
pub fn split_halves(data: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut crate::rng::stream_rng(seed, &[SPLIT_TAG]));
    let first: Vec<usize> = order.iter().step_by(2).copied().collect();
    let second: Vec<usize> = order.iter().skip(1).step_by(2).copied().collect();
    (data.select(&first), data.select(&second))
}

fn fit_candidates(train: &Dataset, grid: &[Tuning], options: &AdaptiveOptions) -> Result<Vec<ProperCDE>> {
    grid.par_iter()
        .map(|t| {
            let kernel = ProductKernel::legendre(options.kernel_order, train.dim_x());
            make_proper(BinnedCDE::fit(train, t.h, t.m, kernel)?, options.grid_points_per_axis)
        })
        .collect()
}

/// Tuning-free estimator: fit every grid candidate on one half, select on the other.
pub fn adaptive_fit(data: &Dataset, options: &AdaptiveOptions, seed: u64) -> Result<AdaptiveFit> {
    let n = data.len();
    if n < 4 {
        return Err(CdeError::TooFewPoints { needed: 4, got: n });
    }
    data.check_unit_cube()?;
    let split_seed = derive_seed(seed, &[SPLIT_TAG]);
    let (d1, d2) = split_halves(data, seed);
    let grid = tuning_grid(n, data.dim_x());

    let candidates = fit_candidates(&d1, &grid, options)?;
    let (selected, statistics) = yatracos_select(&candidates, &d2, options.grid_points_per_axis)?;
    let mut rounds = vec![SelectionRound {
        train_size: d1.len(),
        holdout_size: d2.len(),
        selected,
        chosen: grid[selected],
        sup_discrepancy: statistics.sup_discrepancy.clone(),
    }];
    let estimate = if options.cross_fit {
        let mirrored = fit_candidates(&d2, &grid, options)?;
        let (sel2, stats2) = yatracos_select(&mirrored, &d1, options.grid_points_per_axis)?;
        rounds.push(SelectionRound {
            train_size: d2.len(),
            holdout_size: d1.len(),
            selected: sel2,
            chosen: grid[sel2],
            sup_discrepancy: stats2.sup_discrepancy,
        });
        AdaptiveEstimate::CrossFit(candidates[selected].clone(), mirrored[sel2].clone())
    } else {
        AdaptiveEstimate::Single(candidates[selected].clone())
    };
    Ok(AdaptiveFit {
        estimate,
        chosen: grid[selected],
        diagnostics: SelectionDiagnostics {
            n,
            split_seed,
            options: *options,
            h_values: bandwidth_grid(n, data.dim_x()),
            m_values: bin_grid(n),
            grid,
            rounds,
        },
        candidates,
        statistics,
    })
}
