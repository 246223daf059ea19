//! Higher-order polynomial kernels on [-1, 1] and their tensor products.
//!
//! The order-`ℓ` kernel is `K(u) = Σ_{j≤ℓ} φ_j(0) φ_j(u)` where `φ_j` are the
//! orthonormal Legendre polynomials on [-1, 1]. It reproduces every polynomial
//! of degree at most `ℓ` at the origin, so `∫K = 1` and `∫u^k K = 0` for
//! `1 ≤ k ≤ ℓ`. Coefficients are stored in monomial form, which stays well
//! conditioned up to roughly `ℓ = 12`.

use serde::{Deserialize, Serialize};

use crate::error::{CdeError, Result};
use crate::quadrature::{advance, GaussLegendre};

/// Orders above this lose accuracy in the monomial representation.
pub const PRACTICAL_MAX_ORDER: usize = 12;

/// One-dimensional polynomial kernel supported on [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel1D {
    order: usize,
    /// Monomial coefficients, ascending powers.
    coefficients: Vec<f64>,
}

impl Kernel1D {
    /// Builds the Legendre-projection kernel of order `order`.
    pub fn legendre(order: usize) -> Self {
        if order > PRACTICAL_MAX_ORDER {
            log::warn!("kernel order {order} exceeds {PRACTICAL_MAX_ORDER}; monomial coefficients may be inaccurate");
        }
        let legendre = legendre_coefficients(order);
        let mut coefficients = vec![0.0; order + 1];
        for (j, p) in legendre.iter().enumerate() {
            // φ_j(0) φ_j(u) = (2j+1)/2 · P_j(0) · P_j(u)
            let scale = (2 * j + 1) as f64 / 2.0 * p[0];
            if scale == 0.0 {
                continue;
            }
            for (c, &pc) in coefficients.iter_mut().zip(p) {
                *c += scale * pc;
            }
        }
        Self { order, coefficients }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Polynomial value, ignoring the support restriction.
    #[inline]
    fn polynomial(&self, u: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            0.0
        } else {
            self.polynomial(u)
        }
    }
}

/// Monomial coefficients of P_0..=P_n (ascending powers).
fn legendre_coefficients(n: usize) -> Vec<Vec<f64>> {
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    polys.push(vec![1.0]);
    if n >= 1 {
        polys.push(vec![0.0, 1.0]);
    }
    for k in 2..=n {
        let kf = k as f64;
        let mut next = vec![0.0; k + 1];
        for (i, &c) in polys[k - 1].iter().enumerate() {
            next[i + 1] += (2.0 * kf - 1.0) * c / kf;
        }
        for (i, &c) in polys[k - 2].iter().enumerate() {
            next[i] -= (kf - 1.0) * c / kf;
        }
        polys.push(next);
    }
    polys
}

/// Product kernel `K(u) = Π_k K_k(u_k)` on [-1, 1]^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductKernel {
    per_axis: Vec<Kernel1D>,
}

impl ProductKernel {
    pub fn new(per_axis: Vec<Kernel1D>) -> Self {
        Self { per_axis }
    }

    /// Same Legendre kernel of order `order` on every one of `dim` axes.
    pub fn legendre(order: usize, dim: usize) -> Self {
        let k = Kernel1D::legendre(order);
        Self { per_axis: vec![k; dim] }
    }

    pub fn dim(&self) -> usize {
        self.per_axis.len()
    }

    pub fn axes(&self) -> &[Kernel1D] {
        &self.per_axis
    }

    /// Smallest per-axis order; moments up to this total degree vanish.
    pub fn order(&self) -> usize {
        self.per_axis.iter().map(Kernel1D::order).min().unwrap_or(0)
    }

    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(CdeError::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        Ok(self.eval_unchecked(u))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, u: &[f64]) -> f64 {
        let mut acc = 1.0;
        for (k, &x) in self.per_axis.iter().zip(u) {
            if x.abs() > 1.0 {
                return 0.0;
            }
            acc *= k.polynomial(x);
        }
        acc
    }

    /// Evaluates `K((a - b) / h)` without allocating.
    #[inline]
    pub(crate) fn eval_scaled_diff(&self, a: &[f64], b: &[f64], inv_h: f64) -> f64 {
        let mut acc = 1.0;
        for ((k, &x), &y) in self.per_axis.iter().zip(a).zip(b) {
            let u = (x - y) * inv_h;
            if u.abs() > 1.0 {
                return 0.0;
            }
            acc *= k.polynomial(u);
        }
        acc
    }
}

/// One multi-index moment of a kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentEntry {
    pub alpha: Vec<usize>,
    pub value: f64,
    /// `∫|K(u)|·|u^α| du`.
    pub abs_value: f64,
    /// Whether the moment must vanish (1 ≤ |α| ≤ order) or equal one (α = 0).
    pub required: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: usize,
    pub dim: usize,
    pub max_total_degree: usize,
    pub tolerance: f64,
    pub quadrature_nodes_per_axis: usize,
    pub integral: f64,
    pub integral_of_square: f64,
    pub moments: Vec<MomentEntry>,
    pub pass: bool,
}

/// Tensorized Gauss–Legendre check of every moment with `|α| ≤ max_total_degree`.
pub fn moment_check(kernel: &ProductKernel, max_total_degree: usize, tol: f64) -> MomentReport {
    let dim = kernel.dim();
    let poly_degree = kernel.axes().iter().map(Kernel1D::order).max().unwrap_or(0);
    // Per-axis integrand degree is at most 2·order (for K²) or order + |α|.
    let deg = (2 * poly_degree).max(poly_degree + max_total_degree);
    let nodes = (deg + 2).div_ceil(2) + 4;
    let rule = GaussLegendre::new(nodes);
    let order = kernel.order();

    let integral = rule.integrate_tensor(dim, |u| kernel.eval_unchecked(u));
    let integral_of_square = rule.integrate_tensor(dim, |u| kernel.eval_unchecked(u).powi(2));

    let abs_rule = GaussLegendre::new(8);
    let mut moments = Vec::new();
    let mut alpha = vec![0usize; dim];
    loop {
        let total: usize = alpha.iter().sum();
        if total <= max_total_degree {
            let value = rule.integrate_tensor(dim, |u| {
                let mono: f64 = u.iter().zip(&alpha).map(|(x, &a)| x.powi(a as i32)).product();
                mono * kernel.eval_unchecked(u)
            });
            // |K|·|u^α| factorizes across axes.
            let abs_value: f64 = kernel
                .axes()
                .iter()
                .zip(&alpha)
                .map(|(k, &a)| abs_rule.integrate_composite(-1.0, 1.0, 128, |x| (k.eval(x) * x.powi(a as i32)).abs()))
                .product();
            let (required, pass) = if total == 0 {
                (true, (value - 1.0).abs() <= tol)
            } else if total <= order {
                (true, value.abs() <= tol)
            } else {
                (false, true)
            };
            moments.push(MomentEntry {
                alpha: alpha.clone(),
                value,
                abs_value,
                required,
                pass,
            });
        }
        if dim == 0 || !advance(&mut alpha, max_total_degree + 1) {
            break;
        }
    }
    moments.sort_by(|a, b| {
        let ta: usize = a.alpha.iter().sum();
        let tb: usize = b.alpha.iter().sum();
        ta.cmp(&tb).then_with(|| b.alpha.cmp(&a.alpha))
    });
    let pass = moments.iter().all(|m| m.pass) && integral_of_square.is_finite();
    MomentReport {
        order,
        dim,
        max_total_degree,
        tolerance: tol,
        quadrature_nodes_per_axis: nodes,
        integral,
        integral_of_square,
        moments,
        pass,
    }
}
