//! Ground-truth conditional density families with exact evaluators and samplers.

mod bump;
mod smoothness;
mod spec;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bump::{make_bump, BumpFunction, BumpKind, DEFAULT_DERIVATIVE_ORDER};
pub use smoothness::{check_holder, check_tv_smooth, HolderReport, TvReport};
pub use spec::{max_rho, FamilySpec, SignPattern};

use crate::conditional::ConditionalDensity;
use crate::data::Dataset;
use crate::error::{invalid, CdeError, Result};
use crate::quadrature::{GaussLegendre, MidpointGrid};
use crate::rng::stream_rng;

/// Known smoothness of a family: Hölder `(β, W₁)` in x and γ-TV `(γ, W₂)` in z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    pub beta: f64,
    pub gamma: f64,
    pub w1: Option<f64>,
    pub w2: Option<f64>,
}

/// Sampler for the marginal of Z, applied independently per axis.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ZMarginal {
    #[default]
    Uniform,
    /// Density 1 on [0, ½], 0 on (½, ¾), 2 on [¾, 1]: discontinuous, no atoms.
    Split,
    /// With probability `atom_weight` a uniformly chosen atom, otherwise U[0, 1].
    Atomic { atoms: Vec<f64>, atom_weight: f64 },
}

impl ZMarginal {
    fn validate(&self) -> Result<()> {
        if let ZMarginal::Atomic { atoms, atom_weight } = self {
            if atoms.is_empty() || atoms.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(invalid("atoms", "need at least one atom, all inside [0, 1]"));
            }
            if !(0.0..=1.0).contains(atom_weight) {
                return Err(invalid("atom_weight", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        (0..dim)
            .map(|_| match self {
                ZMarginal::Uniform => rng.random::<f64>(),
                ZMarginal::Split => {
                    let u: f64 = rng.random();
                    if rng.random::<bool>() {
                        0.5 * u
                    } else {
                        0.75 + 0.25 * u
                    }
                }
                ZMarginal::Atomic { atoms, atom_weight } => {
                    if rng.random::<f64>() < *atom_weight {
                        atoms[rng.random_range(0..atoms.len())]
                    } else {
                        rng.random()
                    }
                }
            })
            .collect()
    }
}

/// Uniform density plus signed products of localized bumps in x and z.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFamily {
    dim_x: usize,
    dim_z: usize,
    r: usize,
    m: usize,
    rho: f64,
    /// Signs indexed by `i_flat * m^{d_z} + j_flat`.
    signs: Vec<i8>,
    bump: BumpFunction,
}

/// Left-hand side of the validity budget `ρ^d r^{d_X/2} m^{d_Z/2} ‖h‖_∞^d`.
pub fn perturbation_budget(dim_x: usize, dim_z: usize, r: usize, m: usize, rho: f64, bump_sup: f64) -> f64 {
    let d = (dim_x + dim_z) as i32;
    rho.powi(d) * (r as f64).powf(dim_x as f64 / 2.0) * (m as f64).powf(dim_z as f64 / 2.0) * bump_sup.powi(d)
}

impl PerturbedFamily {
    /// Validates the sign tensor and the `≤ 1/2` budget that keeps the density in [1/2, 3/2].
    pub fn new(
        dim_x: usize,
        dim_z: usize,
        signs: Vec<i8>,
        r: usize,
        m: usize,
        rho: f64,
        bump: BumpFunction,
    ) -> Result<Self> {
        if r == 0 || m == 0 {
            return Err(invalid("r/m", "resolutions must be positive"));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(invalid("rho", format!("must be non-negative, got {rho}")));
        }
        let expected = r.pow(dim_x as u32) * m.pow(dim_z as u32);
        if signs.len() != expected {
            return Err(invalid(
                "delta",
                format!(
                    "sign tensor needs r^d_x * m^d_z = {expected} entries, got {}",
                    signs.len()
                ),
            ));
        }
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("delta", "entries must be +1 or -1"));
        }
        let lhs = perturbation_budget(dim_x, dim_z, r, m, rho, bump.sup_norm());
        if lhs > 0.5 {
            return Err(CdeError::PerturbationBudget { lhs });
        }
        Ok(Self {
            dim_x,
            dim_z,
            r,
            m,
            rho,
            signs,
            bump,
        })
    }

    pub fn budget(&self) -> f64 {
        perturbation_budget(self.dim_x, self.dim_z, self.r, self.m, self.rho, self.bump.sup_norm())
    }

    pub fn bump(&self) -> &BumpFunction {
        &self.bump
    }

    pub fn resolutions(&self) -> (usize, usize) {
        (self.r, self.m)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Active cell and product of localized bumps `Π ρ√res · h(res·v − i)`.
    fn factor(&self, v: &[f64], res: usize) -> (usize, f64) {
        let rf = res as f64;
        let amp = self.rho * rf.sqrt();
        let mut flat = 0;
        let mut prod = 1.0;
        for &c in v {
            let i = ((c * rf).floor().max(0.0) as usize).min(res - 1);
            flat = flat * res + i;
            prod *= amp * self.bump.eval(c * rf - i as f64);
        }
        (flat, prod)
    }

    fn eval_with_z(&self, x: &[f64], j: usize, wz: f64) -> f64 {
        let (i, wx) = self.factor(x, self.r);
        let cells_z = self.m.pow(self.dim_z as u32);
        1.0 + f64::from(self.signs[i * cells_z + j]) * wx * wz
    }
}

/// Bounded `g(x, z)` defining `p(x|z) ∝ exp(g(x, z))`.
pub type ExponentFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `p(x|z) = exp(g(x,z)) / ∫exp(g(x',z)) dx'`, normalized by composite Gauss–Legendre per z.
#[derive(Clone)]
pub struct ExpFamily {
    g: ExponentFn,
    bound: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl fmt::Debug for ExpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpFamily")
            .field("bound", &self.bound)
            .field("nodes_per_axis", &self.nodes.len())
            .finish()
    }
}

impl ExpFamily {
    fn new(g: ExponentFn, bound: f64, dim_x: usize) -> Self {
        let panels = match dim_x {
            1 => 16,
            2 => 8,
            _ => 4,
        };
        let rule = GaussLegendre::new(8);
        let step = 1.0 / panels as f64;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * step;
            for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(mid + 0.5 * step * t);
                weights.push(0.5 * step * w);
            }
        }
        Self {
            g,
            bound,
            nodes,
            weights,
        }
    }

    pub fn normalizer(&self, dim_x: usize, z: &[f64]) -> f64 {
        let k = self.nodes.len();
        let mut idx = vec![0usize; dim_x];
        let mut x = vec![0.0; dim_x];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for (a, &i) in idx.iter().enumerate() {
                x[a] = self.nodes[i];
                w *= self.weights[i];
            }
            total += w * (self.g)(&x, z).exp();
            if !crate::quadrature::advance(&mut idx, k) {
                break;
            }
        }
        total
    }
}

#[derive(Debug, Clone)]
pub enum FamilyKind {
    Uniform,
    /// `p₁(x) = 2(1−c)·mean(x) + c`, or `p₂ = 2 − p₁` when `second`.
    Linear {
        c: f64,
        second: bool,
    },
    Perturbed(PerturbedFamily),
    Exp(ExpFamily),
}

/// A ground-truth conditional density together with a sampler for Z.
#[derive(Debug, Clone)]
pub struct DensityFamily {
    dim_x: usize,
    dim_z: usize,
    kind: FamilyKind,
    z_marginal: ZMarginal,
    smoothness: Option<Smoothness>,
}

/// Density restricted to one value of z, with any z-dependent work done once.
enum Slice<'a> {
    Constant(f64),
    Linear {
        c: f64,
        second: bool,
    },
    Perturbed {
        fam: &'a PerturbedFamily,
        j: usize,
        wz: f64,
    },
    Exp {
        fam: &'a ExpFamily,
        z: &'a [f64],
        inv_norm: f64,
    },
}

impl Slice<'_> {
    fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return 0.0;
        }
        match self {
            Slice::Constant(v) => *v,
            Slice::Linear { c, second } => {
                let mean = x.iter().sum::<f64>() / x.len() as f64;
                let p1 = 2.0 * (1.0 - c) * mean + c;
                if *second {
                    2.0 - p1
                } else {
                    p1
                }
            }
            Slice::Perturbed { fam, j, wz } => fam.eval_with_z(x, *j, *wz),
            Slice::Exp { fam, z, inv_norm } => (fam.g)(x, z).exp() * inv_norm,
        }
    }
}

/// Statistics of one rejection-sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingStats {
    pub proposals: u64,
    pub accepted: u64,
}

impl SamplingStats {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

impl DensityFamily {
    pub fn uniform(dim_x: usize, dim_z: usize) -> Self {
        Self {
            dim_x,
            dim_z,
            kind: FamilyKind::Uniform,
            z_marginal: ZMarginal::Uniform,
            smoothness: None,
        }
    }

    pub fn from_perturbed(family: PerturbedFamily) -> Self {
        Self {
            dim_x: family.dim_x,
            dim_z: family.dim_z,
            kind: FamilyKind::Perturbed(family),
            z_marginal: ZMarginal::Uniform,
            smoothness: None,
        }
    }

    pub fn with_z_marginal(mut self, z_marginal: ZMarginal) -> Result<Self> {
        z_marginal.validate()?;
        self.z_marginal = z_marginal;
        Ok(self)
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = Some(smoothness);
        self
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn z_marginal(&self) -> &ZMarginal {
        &self.z_marginal
    }

    pub fn smoothness(&self) -> Option<Smoothness> {
        self.smoothness
    }

    /// Upper bound on the density used by the rejection sampler.
    pub fn sup_bound(&self) -> f64 {
        match &self.kind {
            FamilyKind::Uniform => 1.0,
            FamilyKind::Linear { c, .. } => 2.0 - c,
            FamilyKind::Perturbed(_) => 1.5,
            FamilyKind::Exp(e) => (2.0 * e.bound).exp(),
        }
    }

    fn slice<'a>(&'a self, z: &'a [f64]) -> Slice<'a> {
        match &self.kind {
            FamilyKind::Uniform => Slice::Constant(1.0),
            FamilyKind::Linear { c, second } => Slice::Linear { c: *c, second: *second },
            FamilyKind::Perturbed(p) => {
                let (j, wz) = p.factor(z, p.m);
                Slice::Perturbed { fam: p, j, wz }
            }
            FamilyKind::Exp(e) => Slice::Exp {
                fam: e,
                z,
                inv_norm: 1.0 / e.normalizer(self.dim_x, z),
            },
        }
    }

    /// Draws `n` pairs: Z from the marginal, X | Z by rejection from the uniform proposal.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = stream_rng(seed, &[]);
        Ok(self.sample_with_rng(n, &mut rng)?.0)
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Dataset, SamplingStats)> {
        let bound = self.sup_bound();
        let mut data = Dataset::new(self.dim_x, self.dim_z);
        let mut stats = SamplingStats {
            proposals: 0,
            accepted: 0,
        };
        let mut x = vec![0.0; self.dim_x];
        for _ in 0..n {
            let z = self.z_marginal.sample(self.dim_z, rng);
            let slice = self.slice(&z);
            loop {
                for v in x.iter_mut() {
                    *v = rng.random();
                }
                stats.proposals += 1;
                let value = slice.eval(&x);
                if value > bound * (1.0 + 1e-12) {
                    return Err(CdeError::SupBoundViolated { value, bound });
                }
                if rng.random::<f64>() * bound < value {
                    break;
                }
            }
            stats.accepted += 1;
            data.push(&x, &z)?;
        }
        Ok((data, stats))
    }
}

impl ConditionalDensity for DensityFamily {
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_z(&self) -> usize {
        self.dim_z
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        self.slice(z).eval(x)
    }
    fn z_cell(&self, _z: &[f64]) -> Option<usize> {
        match self.kind {
            FamilyKind::Uniform | FamilyKind::Linear { .. } => Some(0),
            _ => None,
        }
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        let slice = self.slice(z);
        grid.points().chunks_exact(grid.dim).map(|x| slice.eval(x)).collect()
    }
}

/// The pair `p₁ = 2(1−c)·mean(x) + c`, `p₂ = 2 − p₁`; both ignore z and average to uniform.
pub fn make_linear_pair(c: f64, dim_x: usize, dim_z: usize) -> Result<(DensityFamily, DensityFamily)> {
    if !(0.0..=1.0).contains(&c) {
        return Err(invalid("c", format!("must lie in [0, 1], got {c}")));
    }
    if dim_x == 0 {
        return Err(invalid("dim_x", "must be positive"));
    }
    let make = |second| DensityFamily {
        dim_x,
        dim_z,
        kind: FamilyKind::Linear { c, second },
        z_marginal: ZMarginal::Uniform,
        smoothness: Some(Smoothness {
            beta: 1.0,
            gamma: 1.0,
            w1: Some(2.0 * (1.0 - c) / dim_x as f64),
            w2: Some(0.0),
        }),
    };
    Ok((make(false), make(true)))
}

/// Builds the perturbed family `1 + Σ Δ_{ī,j̄} Π h_{i,r}(x_k) Π h_{j,m}(z_k)`.
pub fn make_perturbed_family(
    dim_x: usize,
    dim_z: usize,
    delta: Vec<i8>,
    r: usize,
    m: usize,
    rho: f64,
    bump: BumpFunction,
) -> Result<DensityFamily> {
    Ok(DensityFamily::from_perturbed(PerturbedFamily::new(
        dim_x, dim_z, delta, r, m, rho, bump,
    )?))
}

/// `p(x|z) = exp(g(x,z)) / ∫exp(g)dx` for `|g| ≤ bound`; smoothness is caller-declared metadata.
pub fn make_exp_family(
    dim_x: usize,
    dim_z: usize,
    g: ExponentFn,
    bound: f64,
    beta: f64,
    gamma: f64,
) -> Result<DensityFamily> {
    if !(bound >= 0.0 && bound.is_finite()) {
        return Err(invalid("M", "bound must be finite and non-negative"));
    }
    if dim_x == 0 {
        return Err(invalid("dim_x", "must be positive"));
    }
    Ok(DensityFamily {
        dim_x,
        dim_z,
        kind: FamilyKind::Exp(ExpFamily::new(g, bound, dim_x)),
        z_marginal: ZMarginal::Uniform,
        smoothness: Some(Smoothness {
            beta,
            gamma,
            w1: None,
            w2: None,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_integral(f: &DensityFamily, z: &[f64], points: usize) -> f64 {
        let grid = MidpointGrid::new(f.dim_x(), points);
        grid.integrate_values(&f.profile(z, &grid))
    }

    fn perturbed_1d(rho_fraction: f64) -> DensityFamily {
        let bump = make_bump(BumpKind::SmoothCompact);
        let rho = 0.999 * rho_fraction * max_rho(1, 1, 2, 2, bump.sup_norm());
        make_perturbed_family(1, 1, vec![1, -1, -1, 1], 2, 2, rho, bump).unwrap()
    }

    #[test]
    fn linear_pair_examples() {
        let (p1, p2) = make_linear_pair(1.0, 2, 1).unwrap();
        assert_eq!(p1.density(&[0.2, 0.9], &[0.3]), 1.0);
        assert_eq!(p2.density(&[0.2, 0.9], &[0.3]), 1.0);
        let (p1, p2) = make_linear_pair(0.0, 1, 1).unwrap();
        assert_eq!(p1.density(&[0.5], &[0.1]), 1.0);
        assert_eq!(p1.density(&[0.25], &[0.1]), 0.5);
        for i in 0..=20 {
            let x = [i as f64 / 20.0];
            assert!((0.5 * p1.density(&x, &[0.4]) + 0.5 * p2.density(&x, &[0.4]) - 1.0).abs() < 1e-15);
        }
        assert!(make_linear_pair(1.5, 1, 1).is_err());
        assert!(make_linear_pair(-0.1, 1, 1).is_err());
    }

    #[test]
    fn perturbed_budget_enforced() {
        let bump = make_bump(BumpKind::SmoothCompact);
        let too_big = 1.01 * max_rho(1, 1, 2, 2, bump.sup_norm());
        match make_perturbed_family(1, 1, vec![1; 4], 2, 2, too_big, bump.clone()) {
            Err(CdeError::PerturbationBudget { lhs }) => assert!(lhs > 0.5 && lhs < 0.52),
            other => panic!("unexpected {other:?}"),
        }
        assert!(make_perturbed_family(1, 1, vec![1; 3], 2, 2, 0.1, bump.clone()).is_err());
        assert!(make_perturbed_family(1, 1, vec![1, 0, 1, 1], 2, 2, 0.1, bump).is_err());
    }

    #[test]
    fn perturbed_zero_rho_is_uniform() {
        let f = perturbed_1d(0.0);
        for i in 0..50 {
            let t = i as f64 / 49.0;
            assert_eq!(f.density(&[t], &[1.0 - t]), 1.0);
        }
    }

    #[test]
    fn perturbed_integrates_to_one_and_stays_in_band() {
        let f = perturbed_1d(1.0);
        let mut rng = stream_rng(3, &[]);
        for _ in 0..20 {
            let z = [rng.random::<f64>()];
            assert!((grid_integral(&f, &z, 4096) - 1.0).abs() < 1e-6);
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..100 {
            for j in 0..100 {
                let v = f.density(&[(i as f64 + 0.5) / 100.0], &[(j as f64 + 0.5) / 100.0]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        assert!(lo >= 0.5 && hi <= 1.5, "lo={lo} hi={hi}");
        assert!(lo < 0.9, "perturbation should be visible, lo={lo}");
    }

    #[test]
    fn perturbed_two_dimensional_x() {
        let bump = make_bump(BumpKind::SmoothCompact);
        let rho = 0.999 * max_rho(2, 1, 2, 3, bump.sup_norm());
        let signs: Vec<i8> = (0..12).map(|k| if k % 3 == 0 { 1 } else { -1 }).collect();
        let f = make_perturbed_family(2, 1, signs, 2, 3, rho, bump).unwrap();
        for &z in &[0.1, 0.45, 0.8] {
            assert!((grid_integral(&f, &[z], 256) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_family_closed_form() {
        let g: ExponentFn = Arc::new(|x: &[f64], z: &[f64]| x[0] * z[0]);
        let f = make_exp_family(1, 1, g, 1.0, 1.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((f.density(&[1.0], &[1.0]) - e / (e - 1.0)).abs() < 1e-10);
        assert!((f.density(&[1.0], &[1.0]) - 1.5820).abs() < 1e-4);
        let z = 0.3f64;
        assert!((f.density(&[0.7], &[z]) - z * (0.7 * z).exp() / (z.exp() - 1.0)).abs() < 1e-10);
        for &z in &[0.0, 0.2, 0.9] {
            assert!((grid_integral(&f, &[z], 2048) - 1.0).abs() < 1e-6);
        }
        assert!((f.sup_bound() - e * e).abs() < 1e-12);
        let zero = make_exp_family(2, 1, Arc::new(|_: &[f64], _: &[f64]| 0.0), 0.0, 1.0, 1.0).unwrap();
        assert!((zero.density(&[0.3, 0.6], &[0.2]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic_and_handles_empty() {
        let f = perturbed_1d(1.0);
        assert_eq!(f.sample(100, 5).unwrap(), f.sample(100, 5).unwrap());
        assert_ne!(f.sample(100, 5).unwrap(), f.sample(100, 6).unwrap());
        assert!(f.sample(0, 1).unwrap().is_empty());
        let mut rng = stream_rng(9, &[]);
        let (_, stats) = f.sample_with_rng(5000, &mut rng).unwrap();
        assert!(
            stats.acceptance_rate() >= 2.0 / 3.0 - 0.02,
            "{}",
            stats.acceptance_rate()
        );
    }

    #[test]
    fn z_marginals() {
        let mut rng = stream_rng(1, &[]);
        for _ in 0..1000 {
            let z = ZMarginal::Split.sample(2, &mut rng);
            assert!(z.iter().all(|&v| v <= 0.5 || v >= 0.75));
        }
        let atomic = ZMarginal::Atomic {
            atoms: vec![0.25],
            atom_weight: 0.5,
        };
        let hits = (0..4000).filter(|_| atomic.sample(1, &mut rng)[0] == 0.25).count();
        assert!((hits as f64 / 4000.0 - 0.5).abs() < 0.05);
        assert!(DensityFamily::uniform(1, 1)
            .with_z_marginal(ZMarginal::Atomic {
                atoms: vec![],
                atom_weight: 0.5
            })
            .is_err());
    }
}
