//! Space-time grid on `[-L, L] x [0, T]` and realized fields on it.
//!
//! Cells are centered at `x_i = -L + (i + 1/2) dx`; with `nx` odd the middle
//! cell sits exactly on `x = 0`. Time levels are `t_n = n dt`, `n = 0..=nt`.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial half-width `L`.
    pub half_width: f64,
    /// Number of spatial cells (odd).
    pub nx: usize,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Number of time steps.
    pub nt: usize,
}

impl GridSpec {
    pub fn new(half_width: f64, nx: usize, horizon: f64, nt: usize) -> Result<Self> {
        let g = GridSpec {
            half_width,
            nx,
            horizon,
            nt,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(invalid(format!("grid half-width must be > 0, got {}", self.half_width)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid(format!("grid horizon must be > 0, got {}", self.horizon)));
        }
        if self.nx == 0 || self.nx % 2 == 0 {
            return Err(invalid(format!(
                "nx must be odd so the grid is symmetric about 0, got {}",
                self.nx
            )));
        }
        if self.nt == 0 {
            return Err(invalid("nt must be >= 1"));
        }
        Ok(())
    }

    /// Resolution guard for the one-step kernel: `sqrt(dt) >= dx`.
    ///
    /// Below this the sampled Gaussian of variance `dt` no longer carries unit
    /// mass on the grid (error `~ 2 exp(-2 pi^2 dt / dx^2)`).
    pub fn check_resolution(&self) -> Result<()> {
        let (dx, dt) = (self.dx(), self.dt());
        if dt.sqrt() < dx * (1.0 - 1e-12) {
            return Err(invalid(format!(
                "time step too small for the spatial cell: sqrt(dt) = {:.4e} < dx = {:.4e}",
                dt.sqrt(),
                dx
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.nx as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.dx()
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Index of the cell centered at `x = 0`.
    #[inline]
    pub fn center(&self) -> usize {
        self.nx / 2
    }

    pub fn xs(&self) -> Array1<f64> {
        Array1::from_iter((0..self.nx).map(|i| self.x(i)))
    }

    /// Grid with cells split `space` ways and steps split `time` ways.
    ///
    /// `space` must be odd to keep the refined grid symmetric and nested.
    pub fn refine(&self, space: usize, time: usize) -> Result<Self> {
        if space == 0 || space % 2 == 0 || time == 0 {
            return Err(invalid(format!(
                "refinement factors must be odd (space) and positive, got ({space}, {time})"
            )));
        }
        GridSpec::new(self.half_width, self.nx * space, self.horizon, self.nt * time)
    }

    /// If `fine` nests inside `self`, returns `(space, time)` factors.
    pub fn nesting(&self, fine: &GridSpec) -> Option<(usize, usize)> {
        if fine.half_width != self.half_width || fine.horizon != self.horizon {
            return None;
        }
        if fine.nx % self.nx != 0 || fine.nt % self.nt != 0 {
            return None;
        }
        let s = fine.nx / self.nx;
        (s % 2 == 1).then_some((s, fine.nt / self.nt))
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self == other
    }

    /// Spatial field from a function of `x`.
    pub fn field(&self, f: impl Fn(f64) -> f64) -> Array1<f64> {
        Array1::from_iter((0..self.nx).map(|i| f(self.x(i))))
    }

    /// Recorded truncation tail for a weighted quantity: `e^{-lambda L}` times
    /// the largest magnitude the field reaches in the two edge cells.
    pub fn tail_bound(&self, f: ArrayView1<f64>, lambda: f64) -> f64 {
        let edge = f[0].abs().max(f[self.nx - 1].abs());
        (-lambda * self.half_width).exp() * edge
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            half_width: 10.0,
            nx: 401,
            horizon: 1.0,
            nt: 400,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetricParams {
    pub lambda: f64,
    /// Series truncation depth for the tempered metrics.
    pub n_max: usize,
}

impl WeightedMetricParams {
    pub fn new(lambda: f64, n_max: usize) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid(format!("lambda must be > 0, got {lambda}")));
        }
        if n_max == 0 {
            return Err(invalid("n_max must be >= 1"));
        }
        Ok(WeightedMetricParams { lambda, n_max })
    }

    /// Upper bound on the dropped series terms, `sum_{n > N} 2^{-n} = 2^{-N}`.
    pub fn series_tail(&self) -> f64 {
        0.5f64.powi(self.n_max as i32)
    }

    /// Smallest rate visited by the tempered series, `1 / N`.
    pub fn lambda_min(&self) -> f64 {
        1.0 / self.n_max as f64
    }
}

impl Default for WeightedMetricParams {
    fn default() -> Self {
        WeightedMetricParams {
            lambda: 1.0,
            n_max: 8,
        }
    }
}

/// A realized space-time field `u(t_n, x_i)`, shape `(nt + 1, nx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPath {
    pub values: Array2<f64>,
    pub grid: GridSpec,
}

impl FieldPath {
    pub fn zeros(grid: GridSpec) -> Self {
        FieldPath {
            values: Array2::zeros((grid.nt + 1, grid.nx)),
            grid,
        }
    }

    pub fn new(values: Array2<f64>, grid: GridSpec) -> Result<Self> {
        if values.dim() != (grid.nt + 1, grid.nx) {
            return Err(invalid(format!(
                "field shape {:?} does not match grid ({}, {})",
                values.dim(),
                grid.nt + 1,
                grid.nx
            )));
        }
        let p = FieldPath { values, grid };
        p.check_finite()?;
        Ok(p)
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn((grid.nt + 1, grid.nx), |(n, i)| f(grid.t(n), grid.x(i)));
        FieldPath { values, grid }
    }

    /// Same spatial profile at every time level.
    pub fn constant_in_time(grid: GridSpec, profile: ArrayView1<f64>) -> Result<Self> {
        if profile.len() != grid.nx {
            return Err(invalid("profile length does not match grid"));
        }
        let mut values = Array2::zeros((grid.nt + 1, grid.nx));
        for mut row in values.rows_mut() {
            row.assign(&profile);
        }
        FieldPath::new(values, grid)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => Err(invalid(format!(
                "non-finite field entry at (step {}, cell {})",
                k / self.grid.nx,
                k % self.grid.nx
            ))),
        }
    }

    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.values.row(n)
    }

    pub fn last(&self) -> ArrayView1<'_, f64> {
        self.values.row(self.grid.nt)
    }

    pub fn difference(&self, other: &FieldPath) -> Result<FieldPath> {
        same_grid(&self.grid, &other.grid)?;
        Ok(FieldPath {
            values: &self.values - &other.values,
            grid: self.grid,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldPath {
        FieldPath {
            values: self.values.mapv(f),
            grid: self.grid,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("grid mismatch: {a:?} vs {b:?}")))
    }
}

pub(crate) fn check_row(f: ArrayView1<f64>, grid: &GridSpec) -> Result<()> {
    if f.len() != grid.nx {
        return Err(invalid(format!(
            "field has {} cells, grid has {}",
            f.len(),
            grid.nx
        )));
    }
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite field entry at cell {i}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_symmetric_about_zero() {
        let g = GridSpec::new(10.0, 401, 1.0, 400).unwrap();
        assert_eq!(g.x(g.center()), 0.0);
        for i in 0..g.nx {
            assert!((g.x(i) + g.x(g.nx - 1 - i)).abs() < 1e-12);
        }
        assert!((g.x(0) - (-10.0 + g.dx() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn even_nx_rejected() {
        let err = GridSpec::new(10.0, 400, 1.0, 400).unwrap_err();
        assert!(err.to_string().contains("odd"));
    }

    #[test]
    fn default_grid_resolves_one_step_kernel() {
        GridSpec::default().check_resolution().unwrap();
        let coarse_dt = GridSpec::new(10.0, 401, 1.0, 1600).unwrap();
        assert!(coarse_dt.check_resolution().is_err());
    }

    #[test]
    fn refinement_nests() {
        let g = GridSpec::new(4.0, 41, 0.5, 20).unwrap();
        let f = g.refine(3, 9).unwrap();
        assert_eq!(g.nesting(&f), Some((3, 9)));
        assert!(g.refine(2, 4).is_err());
        // nested fine cells share the coarse cell center
        assert!((f.x(3 * 7 + 1) - g.x(7)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_field_is_invalid() {
        let g = GridSpec::new(1.0, 3, 1.0, 1).unwrap();
        let mut v = Array2::zeros((2, 3));
        v[[1, 2]] = f64::NAN;
        assert!(FieldPath::new(v, g).is_err());
    }
}
