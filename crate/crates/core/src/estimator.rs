//! Binned kernel conditional density estimator and its proper-density wrapper.
//!
//! The Z-cube is partitioned into `m^{d_Z}` equal boxes. Inside the box that
//! contains `z`, the estimate is an ordinary kernel density estimate of X built
//! from the samples whose Z fell in that box:
//!
//! ```text
//! p̂(x | z) = h^{-d_X} · Σ_{i ∈ bin(z)} K((X_i - x) / h) / |bin(z)|
//! ```
//!
//! with `0/0 = 0` for empty boxes. [`ProperCDE`] truncates the negative part
//! and renormalizes over [0, 1]^{d_X}, falling back to the uniform density for
//! boxes with no mass.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::conditional::ConditionalDensity;
use crate::data::Dataset;
use crate::error::{invalid, CdeError, Result};
use crate::kernels::ProductKernel;
use crate::quadrature::MidpointGrid;

/// Samples of one Z-box, sorted lexicographically (flattened, stride `d_X`).
#[derive(Debug, Clone, PartialEq)]
struct Bin {
    points: Vec<f64>,
}

impl Bin {
    fn len(&self, dim_x: usize) -> usize {
        self.points.len() / dim_x
    }
}

/// Fitted binned kernel estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCDE {
    h: f64,
    m: usize,
    dim_x: usize,
    dim_z: usize,
    kernel: ProductKernel,
    n: usize,
    bins: BTreeMap<usize, Bin>,
}

impl BinnedCDE {
    /// Bins the data by Z and stores the X samples of each box.
    pub fn fit(data: &Dataset, h: f64, m: usize, kernel: ProductKernel) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("bandwidth must be positive and finite, got {h}")));
        }
        if m == 0 {
            return Err(invalid("m", "need at least one bin per axis"));
        }
        if data.dim_x() == 0 {
            return Err(invalid("dim_x", "X must have at least one coordinate"));
        }
        if kernel.dim() != data.dim_x() {
            return Err(CdeError::DimensionMismatch {
                expected: data.dim_x(),
                got: kernel.dim(),
            });
        }
        if m.checked_pow(data.dim_z() as u32).is_none() {
            return Err(invalid("m", format!("m^d_z overflows for m = {m}")));
        }
        data.check_unit_cube()?;

        let dim_x = data.dim_x();
        let mut grouped: BTreeMap<usize, Vec<&[f64]>> = BTreeMap::new();
        for (x, z) in data.iter() {
            grouped.entry(bin_of(z, m)).or_default().push(x);
        }
        let bins = grouped
            .into_iter()
            .map(|(idx, mut xs)| {
                xs.sort_by(|a, b| lex_cmp(a, b));
                let mut points = Vec::with_capacity(xs.len() * dim_x);
                for x in xs {
                    points.extend_from_slice(x);
                }
                (idx, Bin { points })
            })
            .collect();
        Ok(Self {
            h,
            m,
            dim_x,
            dim_z: data.dim_z(),
            kernel,
            n: data.len(),
            bins,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    /// Flat (row-major) index of the box containing `z`; coordinates clamp to [0, 1].
    pub fn bin_index(&self, z: &[f64]) -> usize {
        bin_of(z, self.m)
    }

    /// Multi-index `(j_1, .., j_dz)`, zero based, of a flat box index.
    pub fn bin_multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim_z];
        for slot in out.iter_mut().rev() {
            *slot = flat % self.m;
            flat /= self.m;
        }
        out
    }

    pub fn bin_count(&self, flat: usize) -> usize {
        self.bins.get(&flat).map_or(0, |b| b.len(self.dim_x))
    }

    /// Flat indices of boxes holding at least one sample, ascending.
    pub fn nonempty_bins(&self) -> impl Iterator<Item = usize> + '_ {
        self.bins.keys().copied()
    }

    /// X samples of a box, lexicographically sorted.
    pub fn bin_samples(&self, flat: usize) -> impl Iterator<Item = &[f64]> + '_ {
        self.bins
            .get(&flat)
            .into_iter()
            .flat_map(|b| b.points.chunks_exact(self.dim_x))
    }

    fn check_dims(&self, x: &[f64], z: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(CdeError::DimensionMismatch {
                expected: self.dim_x,
                got: x.len(),
            });
        }
        if z.len() != self.dim_z {
            return Err(CdeError::DimensionMismatch {
                expected: self.dim_z,
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Raw estimate; may be negative for kernels of order two or more.
    pub fn eval_raw(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_dims(x, z)?;
        Ok(self.eval_in_bin(self.bin_index(z), x))
    }

    pub(crate) fn eval_in_bin(&self, flat: usize, x: &[f64]) -> f64 {
        let Some(bin) = self.bins.get(&flat) else {
            return 0.0;
        };
        let inv_h = 1.0 / self.h;
        let d = self.dim_x;
        let (lo, hi) = self.window(bin, x[0]);
        let mut sum = 0.0;
        for xi in bin.points[lo * d..hi * d].chunks_exact(d) {
            sum += self.kernel.eval_scaled_diff(xi, x, inv_h);
        }
        sum / (bin.len(d) as f64 * self.h.powi(d as i32))
    }

    /// Range of samples whose first coordinate lies within `h` of `x0`.
    fn window(&self, bin: &Bin, x0: f64) -> (usize, usize) {
        let d = self.dim_x;
        let count = bin.len(d);
        let first = |i: usize| bin.points[i * d];
        let lo = partition_point(count, |i| first(i) < x0 - self.h);
        let hi = partition_point(count, |i| first(i) <= x0 + self.h);
        (lo, hi.max(lo))
    }

    /// Raw estimate at every node of `grid` for one box.
    pub fn bin_profile(&self, flat: usize, grid: &MidpointGrid) -> Vec<f64> {
        if !self.bins.contains_key(&flat) {
            return vec![0.0; grid.len()];
        }
        grid.points()
            .chunks_exact(grid.dim)
            .map(|x| self.eval_in_bin(flat, x))
            .collect()
    }
}

impl ConditionalDensity for BinnedCDE {
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_z(&self) -> usize {
        self.dim_z
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        self.eval_in_bin(self.bin_index(z), x)
    }
    fn z_cell(&self, z: &[f64]) -> Option<usize> {
        Some(self.bin_index(z))
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        self.bin_profile(self.bin_index(z), grid)
    }
}

fn bin_of(z: &[f64], m: usize) -> usize {
    let mf = m as f64;
    z.iter().fold(0usize, |acc, &v| {
        let j = ((v * mf).floor().max(0.0) as usize).min(m - 1);
        acc * m + j
    })
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn partition_point(len: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, len);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Truncated and renormalized estimator; a proper density for every `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProperCDE {
    base: BinnedCDE,
    grid: MidpointGrid,
    /// `C = ∫ (p̂)_+ dx` for boxes that do not fall back to the uniform density.
    normalizers: BTreeMap<usize, f64>,
}

/// Smallest normalizer grid accepted by [`make_proper`].
pub const MIN_NORMALIZER_POINTS: usize = 16;

/// Default normalizer resolution per axis.
pub fn default_normalizer_points(dim_x: usize) -> usize {
    match dim_x {
        1 => 256,
        2 => 64,
        _ => 16,
    }
}

/// Computes per-box normalizers on a midpoint grid with `points_per_axis` nodes per axis.
pub fn make_proper(cde: BinnedCDE, points_per_axis: usize) -> Result<ProperCDE> {
    if points_per_axis < MIN_NORMALIZER_POINTS {
        return Err(invalid(
            "quadrature_points_per_axis",
            format!("need at least {MIN_NORMALIZER_POINTS}, got {points_per_axis}"),
        ));
    }
    let grid = MidpointGrid::new(cde.dim_x, points_per_axis);
    let normalizers = cde
        .bins
        .keys()
        .filter_map(|&flat| {
            let mass: f64 = cde
                .bin_profile(flat, &grid)
                .into_iter()
                .map(|v| v.max(0.0))
                .sum::<f64>()
                * grid.weight();
            (mass > 0.0 && mass.is_finite()).then_some((flat, mass))
        })
        .collect();
    Ok(ProperCDE {
        base: cde,
        grid,
        normalizers,
    })
}

impl ProperCDE {
    pub fn base(&self) -> &BinnedCDE {
        &self.base
    }

    pub fn normalizer_grid(&self) -> MidpointGrid {
        self.grid
    }

    /// `C` for the box, or `None` when it uses the constant fallback.
    pub fn normalizer(&self, flat: usize) -> Option<f64> {
        self.normalizers.get(&flat).copied()
    }

    pub fn is_fallback(&self, flat: usize) -> bool {
        !self.normalizers.contains_key(&flat)
    }

    pub fn eval_proper(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.base.check_dims(x, z)?;
        Ok(self.density(x, z))
    }

    fn eval_in_bin(&self, flat: usize, x: &[f64]) -> f64 {
        match self.normalizers.get(&flat) {
            Some(c) => self.base.eval_in_bin(flat, x).max(0.0) / c,
            None => 1.0,
        }
    }

    pub fn to_document(&self) -> EstimatorDocument {
        let base = &self.base;
        EstimatorDocument {
            format: DOCUMENT_FORMAT.to_string(),
            dim_x: base.dim_x,
            dim_z: base.dim_z,
            h: base.h,
            m: base.m,
            kernel_order: base.kernel.order(),
            n: base.n,
            normalizer_grid_points: self.grid.points_per_axis,
            bins: base
                .bins
                .iter()
                .map(|(&flat, bin)| BinDocument {
                    index: base.bin_multi_index(flat),
                    normalizer: self.normalizer(flat),
                    samples: bin.points.chunks_exact(base.dim_x).map(<[f64]>::to_vec).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    /// Rebuilds the estimator; normalizers are recomputed and checked against the document.
    pub fn from_document(doc: &EstimatorDocument) -> Result<Self> {
        if doc.format != DOCUMENT_FORMAT {
            return Err(CdeError::Format(format!("unknown format `{}`", doc.format)));
        }
        let mut data = Dataset::new(doc.dim_x, doc.dim_z);
        for bin in &doc.bins {
            if bin.index.len() != doc.dim_z || bin.index.iter().any(|&j| j >= doc.m) {
                return Err(CdeError::Format(format!("bad bin index {:?}", bin.index)));
            }
            // Bin centre reproduces the bin assignment.
            let z: Vec<f64> = bin.index.iter().map(|&j| (j as f64 + 0.5) / doc.m as f64).collect();
            for x in &bin.samples {
                data.push(x, &z)?;
            }
        }
        if data.len() != doc.n {
            return Err(CdeError::Format(format!(
                "document lists {} samples but n = {}",
                data.len(),
                doc.n
            )));
        }
        let kernel = ProductKernel::legendre(doc.kernel_order, doc.dim_x);
        let base = BinnedCDE::fit(&data, doc.h, doc.m, kernel)?;
        make_proper(base, doc.normalizer_grid_points)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EstimatorDocument = serde_json::from_str(text)?;
        Self::from_document(&doc)
    }
}

impl ConditionalDensity for ProperCDE {
    fn dim_x(&self) -> usize {
        self.base.dim_x
    }
    fn dim_z(&self) -> usize {
        self.base.dim_z
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        self.eval_in_bin(self.base.bin_index(z), x)
    }
    fn z_cell(&self, z: &[f64]) -> Option<usize> {
        Some(self.base.bin_index(z))
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        let flat = self.base.bin_index(z);
        match self.normalizers.get(&flat) {
            Some(c) => self
                .base
                .bin_profile(flat, grid)
                .into_iter()
                .map(|v| v.max(0.0) / c)
                .collect(),
            None => vec![1.0; grid.len()],
        }
    }
}

pub const DOCUMENT_FORMAT: &str = "binned-cde/1";

/// Self-describing JSON form of a fitted [`ProperCDE`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorDocument {
    pub format: String,
    pub dim_x: usize,
    pub dim_z: usize,
    pub h: f64,
    pub m: usize,
    pub kernel_order: usize,
    pub n: usize,
    pub normalizer_grid_points: usize,
    pub bins: Vec<BinDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinDocument {
    /// Zero-based multi-index of the Z-box.
    pub index: Vec<usize>,
    pub normalizer: Option<f64>,
    pub samples: Vec<Vec<f64>>,
}

/// How the bin count is rounded from its real-valued rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Nearest,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub h: f64,
    pub m: usize,
}

/// Rate-optimal bandwidth and bin count for known smoothness:
/// `h = c_h n^{-1/D}`, `m = round(c_m n^{β/D})` with `D = d_X + d_Z β/γ + 2β`.
pub fn theorem2_tuning(
    n: usize,
    dim_x: usize,
    dim_z: usize,
    beta: f64,
    gamma: f64,
    c_h: f64,
    c_m: f64,
) -> Result<Tuning> {
    tuning_with_rounding(n, dim_x, dim_z, beta, gamma, c_h, c_m, Rounding::Nearest)
}

#[allow(clippy::too_many_arguments)]
pub fn tuning_with_rounding(
    n: usize,
    dim_x: usize,
    dim_z: usize,
    beta: f64,
    gamma: f64,
    c_h: f64,
    c_m: f64,
    rounding: Rounding,
) -> Result<Tuning> {
    if n == 0 {
        return Err(invalid("n", "need at least one sample"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive and finite, got {beta}")));
    }
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if gamma > 1.0 {
        return Err(invalid(
            "gamma",
            format!(
                "gamma = {gamma} > 1 only admits conditional densities that do not depend on z; pass gamma = 1 explicitly"
            ),
        ));
    }
    if !(c_h > 0.0 && c_m > 0.0) {
        return Err(invalid("c_h/c_m", "constants must be positive"));
    }
    let denom = dim_x as f64 + dim_z as f64 * beta / gamma + 2.0 * beta;
    let nf = n as f64;
    let h = c_h * nf.powf(-1.0 / denom);
    let raw_m = c_m * nf.powf(beta / denom);
    let m = match rounding {
        Rounding::Nearest => raw_m.round(),
        // Guard against 8.000000000000002 style round-off before taking the ceiling.
        Rounding::Up => (raw_m - 1e-9).ceil(),
    };
    Ok(Tuning {
        h,
        m: (m as usize).max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(pairs: &[(f64, f64)]) -> Dataset {
        let v: Vec<_> = pairs.iter().map(|&(x, z)| (vec![x], vec![z])).collect();
        Dataset::from_pairs(1, 1, &v).unwrap()
    }

    #[test]
    fn single_sample_box_kernel() {
        let cde = BinnedCDE::fit(&one_d(&[(0.3, 0.5)]), 1.0, 1, ProductKernel::legendre(0, 1)).unwrap();
        for &(x, z) in &[(0.0, 0.0), (0.3, 0.5), (0.9, 0.2), (1.0, 1.0)] {
            assert_eq!(cde.eval_raw(&[x], &[z]).unwrap(), 0.5);
        }
    }

    #[test]
    fn two_samples_narrow_bandwidth() {
        let xs = [0.2, 0.25];
        let cde = BinnedCDE::fit(
            &one_d(&[(xs[0], 0.1), (xs[1], 0.2)]),
            0.1,
            1,
            ProductKernel::legendre(0, 1),
        )
        .unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            let ind = |xi: f64| if (xi - x).abs() <= 0.1 { 5.0 } else { 0.0 };
            let expected = (ind(xs[0]) + ind(xs[1])) / 2.0;
            let got = cde.eval_raw(&[x], &[0.7]).unwrap();
            assert!((got - expected).abs() < 1e-12, "x={x} got={got} expected={expected}");
        }
    }

    #[test]
    fn empty_bins_and_empty_data_give_zero() {
        let cde = BinnedCDE::fit(&one_d(&[(0.3, 0.1)]), 0.5, 4, ProductKernel::legendre(0, 1)).unwrap();
        assert_eq!(cde.eval_raw(&[0.3], &[0.9]).unwrap(), 0.0);
        let empty = BinnedCDE::fit(&Dataset::new(1, 1), 0.5, 4, ProductKernel::legendre(2, 1)).unwrap();
        assert_eq!(empty.eval_raw(&[0.5], &[0.5]).unwrap(), 0.0);
        assert_eq!(empty.n(), 0);
    }

    #[test]
    fn bin_convention_is_half_open_with_closed_end() {
        let cde = BinnedCDE::fit(&Dataset::new(1, 2), 0.5, 4, ProductKernel::legendre(0, 1)).unwrap();
        assert_eq!(cde.bin_index(&[0.0, 0.0]), 0);
        assert_eq!(cde.bin_index(&[0.25, 0.0]), 4);
        assert_eq!(cde.bin_index(&[0.2499, 1.0]), 3);
        assert_eq!(cde.bin_index(&[1.0, 1.0]), 15);
        assert_eq!(cde.bin_multi_index(14), vec![3, 2]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let k = ProductKernel::legendre(0, 1);
        assert!(matches!(
            BinnedCDE::fit(&one_d(&[(0.3, 0.1), (1.5, 0.2)]), 0.5, 1, k.clone()),
            Err(CdeError::OutOfUnitCube { index: 1, .. })
        ));
        assert!(BinnedCDE::fit(&one_d(&[]), 0.0, 1, k.clone()).is_err());
        assert!(BinnedCDE::fit(&one_d(&[]), 0.1, 0, k.clone()).is_err());
        assert!(BinnedCDE::fit(&one_d(&[]), 0.1, 1, ProductKernel::legendre(0, 2)).is_err());
        let cde = BinnedCDE::fit(&one_d(&[(0.3, 0.1)]), 0.5, 1, k).unwrap();
        assert!(cde.eval_raw(&[0.1, 0.2], &[0.1]).is_err());
        assert!(cde.eval_raw(&[0.1], &[]).is_err());
    }

    #[test]
    fn proper_fallback_and_identity() {
        let cde = BinnedCDE::fit(&one_d(&[(0.5, 0.1)]), 0.25, 2, ProductKernel::legendre(0, 1)).unwrap();
        let p = make_proper(cde, 256).unwrap();
        // Kernel bump sits fully inside [0, 1]: C = 1 and nothing changes.
        assert!((p.normalizer(0).unwrap() - 1.0).abs() < 1e-12);
        assert!((p.eval_proper(&[0.4], &[0.1]).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(p.eval_proper(&[0.01], &[0.1]).unwrap(), 0.0);
        assert!(p.is_fallback(1));
        assert_eq!(p.eval_proper(&[0.3], &[0.9]).unwrap(), 1.0);
        assert!(make_proper(p.base().clone(), 8).is_err());
    }

    #[test]
    fn proper_truncates_negative_lobes() {
        // Order-two kernel: a narrow cluster produces negative side lobes.
        let data = one_d(&[(0.45, 0.5), (0.5, 0.5), (0.55, 0.5)]);
        let cde = BinnedCDE::fit(&data, 0.3, 1, ProductKernel::legendre(2, 1)).unwrap();
        let raw_min = (0..=200)
            .map(|i| cde.eval_raw(&[i as f64 / 200.0], &[0.5]).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(raw_min < 0.0);
        let p = make_proper(cde.clone(), 256).unwrap();
        // Oracle: C from an independent fine Gauss-Legendre quadrature of the positive part.
        let rule = crate::quadrature::GaussLegendre::new(16);
        let c = rule.integrate_composite(0.0, 1.0, 4000, |x| cde.eval_raw(&[x], &[0.5]).unwrap().max(0.0));
        assert!((p.normalizer(0).unwrap() - c).abs() < 1e-3);
        let integral = rule.integrate_composite(0.0, 1.0, 4000, |x| p.eval_proper(&[x], &[0.5]).unwrap());
        assert!((integral - 1.0).abs() < 1e-3, "integral {integral}");
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            let raw = cde.eval_raw(&[x], &[0.5]).unwrap();
            let v = p.eval_proper(&[x], &[0.5]).unwrap();
            assert!(v >= 0.0);
            if raw < 0.0 {
                assert_eq!(v, 0.0);
            } else {
                assert!((v - raw / p.normalizer(0).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tuning_examples() {
        let t = theorem2_tuning(4096, 1, 1, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((t.h - 0.125).abs() < 1e-12);
        assert_eq!(t.m, 8);
        let t = theorem2_tuning(1, 3, 2, 1.5, 0.5, 1.0, 1.0).unwrap();
        assert_eq!((t.h, t.m), (1.0, 1));
        let t = theorem2_tuning(4096, 2, 1, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert!((t.h - 4096f64.powf(-0.125)).abs() < 1e-12);
        assert!((t.h - 0.35355339).abs() < 1e-6);
        assert_eq!(t.m, 8);
        assert!(theorem2_tuning(100, 1, 1, 1.0, 1.5, 1.0, 1.0).is_err());
        let up = tuning_with_rounding(512, 1, 1, 1.0, 1.0, 1.0, 1.0, Rounding::Up).unwrap();
        assert_eq!(up.m, 5);
        let exact = tuning_with_rounding(4096, 1, 1, 1.0, 1.0, 1.0, 1.0, Rounding::Up).unwrap();
        assert_eq!(exact.m, 8);
    }

    #[test]
    fn json_round_trip() {
        let data = one_d(&[(0.1, 0.1), (0.4, 0.2), (0.9, 0.8), (0.6, 0.85)]);
        let p = make_proper(
            BinnedCDE::fit(&data, 0.2, 3, ProductKernel::legendre(2, 1)).unwrap(),
            64,
        )
        .unwrap();
        let back = ProperCDE::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
        let doc = p.to_document();
        assert_eq!(doc.bins.len(), 2);
        assert_eq!(doc.bins[1].index, vec![2]);
    }
}
