//! Gauss–Legendre rules and tensor midpoint grids on the unit cube.

use serde::{Deserialize, Serialize};

/// Gauss–Legendre rule with `n` nodes on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Chebyshev-style initial guess for the i-th largest root.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Number of nodes giving exact integration of polynomials up to `degree`.
    pub fn nodes_for_degree(degree: usize) -> usize {
        degree / 2 + 1
    }

    /// Integrates `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Composite rule: `panels` equal sub-intervals of [a, b].
    pub fn integrate_composite(&self, a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let step = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + step * p as f64;
                self.integrate(lo, lo + step, &f)
            })
            .sum()
    }

    /// Integrates `f` over [-1, 1]^dim with the tensor product of this rule.
    pub fn integrate_tensor(&self, dim: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let n = self.nodes.len();
        let mut idx = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                point[k] = self.nodes[i];
                w *= self.weights[i];
            }
            total += w * f(&point);
            if !advance(&mut idx, n) {
                break;
            }
        }
        total
    }
}

/// Evaluates the Legendre polynomial P_n and its derivative at `x`.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Odometer increment over `[0, base)^len`. Returns false after wrapping.
pub(crate) fn advance(idx: &mut [usize], base: usize) -> bool {
    for i in (0..idx.len()).rev() {
        idx[i] += 1;
        if idx[i] < base {
            return true;
        }
        idx[i] = 0;
    }
    false
}

/// Tensor midpoint grid over [0, 1]^dim with `points_per_axis` cells per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidpointGrid {
    pub dim: usize,
    pub points_per_axis: usize,
}

impl MidpointGrid {
    pub fn new(dim: usize, points_per_axis: usize) -> Self {
        assert!(points_per_axis >= 1);
        Self { dim, points_per_axis }
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of each node (cell volume).
    pub fn weight(&self) -> f64 {
        (self.points_per_axis as f64).powi(-(self.dim as i32))
    }

    pub fn axis_nodes(&self) -> Vec<f64> {
        let k = self.points_per_axis as f64;
        (0..self.points_per_axis).map(|i| (i as f64 + 0.5) / k).collect()
    }

    /// All nodes, row-major, flattened with stride `dim`.
    pub fn points(&self) -> Vec<f64> {
        let axis = self.axis_nodes();
        let mut out = Vec::with_capacity(self.len() * self.dim);
        if self.dim == 0 {
            return out;
        }
        let mut idx = vec![0usize; self.dim];
        loop {
            out.extend(idx.iter().map(|&i| axis[i]));
            if !advance(&mut idx, self.points_per_axis) {
                break;
            }
        }
        out
    }

    /// Midpoint rule applied to already-tabulated node values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.weight()
    }
}
