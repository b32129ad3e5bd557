//! Periodic grids on the unit torus and the fields that live on them.
//!
//! The torus is the cell `[-1/2, 1/2)^d` with opposite faces identified. Grid
//! point `j` along an axis sits at `-1/2 + j h` with `h = 1/n`. Values are
//! stored row-major with the last axis contiguous; axis 0 carries `x_1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid with `n` points per axis on the `dim`-dimensional torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be even and >= 8, got {n}"
            )));
        }
        Ok(TorusGrid { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Quadrature weight `h^d` of a single grid point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of grid points, `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -0.5 + j as f64 * self.spacing()
    }

    /// Per-axis indices of a flat index, axis 0 first.
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rest = flat;
        for a in (0..self.dim).rev() {
            out[a] = rest % self.n;
            rest /= self.n;
        }
        out
    }

    /// Coordinates of a grid point; unused trailing entries are zero.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coordinate(idx[a]);
        }
        x
    }

    /// Minimal-image displacement per axis for an index offset.
    pub fn torus_offset(&self, m: usize) -> f64 {
        let m = m % self.n;
        let wrapped = m.min(self.n - m);
        wrapped as f64 * self.spacing()
    }

    pub(crate) fn ensure_same(&self, other: &TorusGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                expected_dim: self.dim,
                expected_n: self.n,
                found_dim: other.dim,
                found_n: other.n,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::arg(
                "values",
                format!("expected {} values, got {}", grid.len(), values.len()),
            ));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "scalar field",
                index,
            });
        }
        Ok(ScalarField { grid, values })
    }

    /// Skips the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        ScalarField::from_raw(grid, vec![0.0; grid.len()])
    }

    pub fn constant(grid: TorusGrid, value: f64) -> Self {
        ScalarField::from_raw(grid, vec![value; grid.len()])
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|j| f(grid.point(j))).collect();
        ScalarField::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        ScalarField::new(self.grid, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        ScalarField::from_raw(self.grid, self.values.iter().map(|v| v * s).collect())
    }

    pub fn zip_with(
        &self,
        other: &ScalarField,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField> {
        self.grid.ensure_same(&other.grid)?;
        ScalarField::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        )
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub(crate) fn check_finite(&self, what: &'static str) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { what, index }),
            None => Ok(()),
        }
    }
}

/// A vector field with one scalar component per torus dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let grid = *components
            .first()
            .ok_or_else(|| Error::arg("components", "vector field needs components"))?
            .grid();
        if components.len() != grid.dim() {
            return Err(Error::arg(
                "components",
                format!("expected {} components, got {}", grid.dim(), components.len()),
            ));
        }
        for c in &components {
            grid.ensure_same(c.grid())?;
        }
        Ok(VectorField { grid, components })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        VectorField {
            grid,
            components: (0..grid.dim()).map(|_| ScalarField::zeros(grid)).collect(),
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }

    /// Pointwise `|b|^2`.
    pub fn magnitude_squared(&self) -> ScalarField {
        let mut out = vec![0.0; self.grid.len()];
        for c in &self.components {
            for (o, v) in out.iter_mut().zip(c.values()) {
                *o += v * v;
            }
        }
        ScalarField::from_raw(self.grid, out)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude_squared().max_abs().sqrt()
    }

    pub fn sub(&self, other: &VectorField) -> Result<VectorField> {
        self.grid.ensure_same(&other.grid)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        VectorField::new(components)
    }

    /// Flips the sign of every component.
    pub fn negate(&self) -> VectorField {
        VectorField {
            grid: self.grid,
            components: self.components.iter().map(|c| c.scale(-1.0)).collect(),
        }
    }
}
