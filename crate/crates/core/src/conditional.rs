use crate::quadrature::MidpointGrid;

/// Anything that evaluates a conditional density `p(x | z)` on the unit cube.
pub trait ConditionalDensity: Sync {
    fn dim_x(&self) -> usize;
    fn dim_z(&self) -> usize;

    /// Unchecked evaluation; slices must have lengths `dim_x()` and `dim_z()`.
    fn density(&self, x: &[f64], z: &[f64]) -> f64;

    /// Cell identifier such that `p(· | z)` is the same function for every `z`
    /// sharing it. `None` when the density varies continuously in `z`.
    fn z_cell(&self, _z: &[f64]) -> Option<usize> {
        None
    }

    /// Values of `p(· | z)` at every node of `grid`, in grid order.
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        grid.points()
            .chunks_exact(grid.dim)
            .map(|x| self.density(x, z))
            .collect()
    }
}

impl<T: ConditionalDensity + ?Sized> ConditionalDensity for &T {
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_z(&self) -> usize {
        (**self).dim_z()
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        (**self).density(x, z)
    }
    fn z_cell(&self, z: &[f64]) -> Option<usize> {
        (**self).z_cell(z)
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        (**self).profile(z, grid)
    }
}

impl<T: ConditionalDensity + ?Sized + Send> ConditionalDensity for Box<T> {
    fn dim_x(&self) -> usize {
        (**self).dim_x()
    }
    fn dim_z(&self) -> usize {
        (**self).dim_z()
    }
    fn density(&self, x: &[f64], z: &[f64]) -> f64 {
        (**self).density(x, z)
    }
    fn z_cell(&self, z: &[f64]) -> Option<usize> {
        (**self).z_cell(z)
    }
    fn profile(&self, z: &[f64], grid: &MidpointGrid) -> Vec<f64> {
        (**self).profile(z, grid)
    }
}

/// The constant density 1 on [0, 1]^dim_x, independent of `z`.
#[derive(Debug, Clone, Copy)]
pub struct UniformDensity {
    pub dim_x: usize,
    pub dim_z: usize,
}

impl ConditionalDensity for UniformDensity {
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn dim_z(&self) -> usize {
        self.dim_z
    }
    fn density(&self, x: &[f64], _z: &[f64]) -> f64 {
        if x.iter().all(|v| (0.0..=1.0).contains(v)) {
            1.0
        } else {
            0.0
        }
    }
    fn z_cell(&self, _z: &[f64]) -> Option<usize> {
        Some(0)
    }
}
