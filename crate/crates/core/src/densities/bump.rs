//! Smooth two-lobe bump on [0, 1] with zero mean and unit L2 norm.

use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLegendre;

/// `h(x) = a · (g(2x) − g(2x − 1))` with `g(t) = exp(−1 / (t(1 − t)))` on (0, 1).
///
/// The lobes are mirror images of opposite sign, so `∫h = 0`; `a` is fixed
/// numerically so that `∫h² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    scale: f64,
    /// `‖h^{(k)}‖_∞` for `k = 0..=derivative_order`.
    sup_norms: Vec<f64>,
    l1_norm: f64,
    /// Numerators `P_k` with `g^{(k)}(t) = g(t) · P_k(t) / (t(1−t))^{2k}`.
    #[serde(skip)]
    numerators: Vec<Vec<f64>>,
}

/// Recorded derivative orders unless asked otherwise.
pub const DEFAULT_DERIVATIVE_ORDER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BumpKind {
    #[default]
    SmoothCompact,
}

/// Builds the bump and records sup-norms of derivatives up to `DEFAULT_DERIVATIVE_ORDER`.
pub fn make_bump(kind: BumpKind) -> BumpFunction {
    BumpFunction::new(kind, DEFAULT_DERIVATIVE_ORDER)
}

fn base(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        (-1.0 / (t * (1.0 - t))).exp()
    }
}

fn poly_eval(p: &[f64], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_derivative(p: &[f64]) -> Vec<f64> {
    if p.len() <= 1 {
        return vec![0.0];
    }
    p.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect()
}

/// `P_{k+1} = (P_k' q − 2k P_k q') q + P_k q'` with `q = t(1−t)`.
fn derivative_numerators(order: usize) -> Vec<Vec<f64>> {
    let q = [0.0, 1.0, -1.0];
    let dq = [1.0, -2.0];
    let mut out = vec![vec![1.0]];
    for k in 0..order {
        let p = &out[k];
        let a = poly_mul(&poly_derivative(p), &q);
        let b: Vec<f64> = poly_mul(p, &dq).iter().map(|c| -2.0 * k as f64 * c).collect();
        let next = poly_add(&poly_mul(&poly_add(&a, &b), &q), &poly_mul(p, &dq));
        out.push(next);
    }
    out
}

impl BumpFunction {
    pub fn new(_kind: BumpKind, derivative_order: usize) -> Self {
        let rule = GaussLegendre::new(16);
        let base_sq = rule.integrate_composite(0.0, 1.0, 256, |t| base(t).powi(2));
        let base_l1 = rule.integrate_composite(0.0, 1.0, 256, base);
        let scale = 1.0 / base_sq.sqrt();
        let numerators = derivative_numerators(derivative_order);
        let mut bump = Self {
            scale,
            sup_norms: Vec::new(),
            l1_norm: scale * base_l1,
            numerators,
        };
        // Lobes are disjoint: ‖h^{(k)}‖_∞ = a 2^k sup|g^{(k)}|.
        let samples = 20_000;
        bump.sup_norms = (0..=derivative_order)
            .map(|k| {
                let sup = (1..samples)
                    .map(|i| bump.base_derivative(k, i as f64 / samples as f64).abs())
                    .fold(0.0, f64::max);
                scale * 2f64.powi(k as i32) * sup
            })
            .collect();
        bump
    }

    fn ensure_numerators(&self, k: usize) -> std::borrow::Cow<'_, [Vec<f64>]> {
        if k < self.numerators.len() {
            std::borrow::Cow::Borrowed(&self.numerators)
        } else {
            std::borrow::Cow::Owned(derivative_numerators(k))
        }
    }

    fn base_derivative(&self, k: usize, t: f64) -> f64 {
        let g = base(t);
        if g == 0.0 {
            return 0.0;
        }
        let nums = self.ensure_numerators(k);
        let q = t * (1.0 - t);
        g * poly_eval(&nums[k], t) / q.powi(2 * k as i32)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.scale * (base(2.0 * x) - base(2.0 * x - 1.0))
    }

    /// k-th derivative of `h`.
    pub fn derivative(&self, k: usize, x: f64) -> f64 {
        self.scale * 2f64.powi(k as i32) * (self.base_derivative(k, 2.0 * x) - self.base_derivative(k, 2.0 * x - 1.0))
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norms[0]
    }

    /// `‖h^{(k)}‖_∞` for the recorded orders.
    pub fn derivative_sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    /// `∫|h|`.
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        let b = make_bump(BumpKind::SmoothCompact);
        let rule = GaussLegendre::new(16);
        let mean = rule.integrate_composite(0.0, 1.0, 512, |x| b.eval(x));
        let sq = rule.integrate_composite(0.0, 1.0, 512, |x| b.eval(x).powi(2));
        assert!(mean.abs() < 1e-8, "mean {mean}");
        assert!((sq - 1.0).abs() < 1e-6, "sq {sq}");
        assert!(b.l1_norm() > 0.5 && b.l1_norm() < 1.0);
        assert_eq!(b.eval(0.0), 0.0);
        assert_eq!(b.eval(1.0), 0.0);
        assert_eq!(b.eval(0.5), 0.0);
        // Peak of the first lobe at x = 1/4 is a·e^{-4}.
        assert!((b.eval(0.25) - b.scale() * (-4.0f64).exp()).abs() < 1e-12);
        assert!((b.sup_norm() - b.eval(0.25)).abs() < 1e-9);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = make_bump(BumpKind::SmoothCompact);
        let eps = 1e-5;
        for i in 1..40 {
            let x = i as f64 / 40.0;
            for k in 0..3 {
                let fd = (b.derivative(k, x + eps) - b.derivative(k, x - eps)) / (2.0 * eps);
                let exact = b.derivative(k + 1, x);
                let scale = b.derivative_sup_norms()[k + 1];
                assert!((fd - exact).abs() < 1e-5 * scale, "k={k} x={x} fd={fd} exact={exact}");
            }
        }
        let norms = b.derivative_sup_norms();
        assert_eq!(norms.len(), DEFAULT_DERIVATIVE_ORDER + 1);
        assert!(norms.windows(2).all(|w| w[1] > w[0]));
    }
}
