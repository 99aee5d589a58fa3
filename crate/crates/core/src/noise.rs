//! Space-time white noise on grid cells, Girsanov shifts, and the relative
//! entropy they induce.
//!
//! Increments are generated by a ChaCha8 stream per `(seed, replica)`, with
//! each cell `(n, i)` at a fixed word offset. Any cell can therefore be
//! regenerated in isolation and the result never depends on thread count.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{same_grid, FieldPath, GridSpec};

/// White-noise cell integrals `W(cell)`, shape `(nt, nx)`, each `N(0, dt dx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub increments: Array2<f64>,
    pub seed: u64,
    pub replica: u64,
    pub grid: GridSpec,
}

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

fn row_words(nx: usize) -> u128 {
    // one Box-Muller pair = two u64 draws = four 32-bit words
    nx.div_ceil(2) as u128 * 4
}

fn fill_row(rng: &mut ChaCha8Rng, n: usize, row: &mut [f64], scale: f64) {
    rng.set_word_pos(n as u128 * row_words(row.len()));
    for pair in row.chunks_mut(2) {
        let a = rng.next_u64();
        let b = rng.next_u64();
        let u1 = ((a >> 11) + 1) as f64 * TWO_POW_M53;
        let u2 = (b >> 11) as f64 * TWO_POW_M53;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        pair[0] = r * c * scale;
        if pair.len() > 1 {
            pair[1] = r * s * scale;
        }
    }
}

fn stream(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// I.i.d. `N(0, dt dx)` increments keyed by `(seed, replica, n, i)`.
pub fn sample_noise_path(grid: &GridSpec, seed: u64, replica: u64) -> NoisePath {
    let scale = (grid.dt() * grid.dx()).sqrt();
    let mut rng = stream(seed, replica);
    let mut increments = Array2::zeros((grid.nt, grid.nx));
    for (n, mut row) in increments.rows_mut().into_iter().enumerate() {
        fill_row(&mut rng, n, row.as_slice_mut().expect("row-major"), scale);
    }
    NoisePath {
        increments,
        seed,
        replica,
        grid: *grid,
    }
}

impl NoisePath {
    /// Increments of one time step regenerated on their own.
    pub fn sample_row(grid: &GridSpec, seed: u64, replica: u64, n: usize) -> Vec<f64> {
        let mut row = vec![0.0; grid.nx];
        fill_row(&mut stream(seed, replica), n, &mut row, (grid.dt() * grid.dx()).sqrt());
        row
    }

    /// Sum fine-cell increments over each cell of a nesting coarse grid, so
    /// both resolutions see the same Brownian sheet.
    pub fn coarse_grain(&self, coarse: &GridSpec) -> Result<NoisePath> {
        let (s, r) = coarse.nesting(&self.grid).ok_or_else(|| {
            invalid(format!(
                "grid {:?} does not nest inside {:?}",
                self.grid, coarse
            ))
        })?;
        let mut increments = Array2::zeros((coarse.nt, coarse.nx));
        for ((n, i), v) in self.increments.indexed_iter() {
            increments[[n / r, i / s]] += v;
        }
        Ok(NoisePath {
            increments,
            seed: self.seed,
            replica: self.replica,
            grid: *coarse,
        })
    }

    /// Noise of the shifted driver `W~ = W - h dx dt` along a realized path.
    pub fn shifted(&self, shift: &ShiftSpec, u: Option<&FieldPath>) -> Result<NoisePath> {
        let g = self.grid;
        let (dt, dx) = (g.dt(), g.dx());
        let mut out = self.clone();
        for n in 0..g.nt {
            for i in 0..g.nx {
                out.increments[[n, i]] -= shift.value(n, i, u)? * dt * dx;
            }
        }
        Ok(out)
    }
}

type FeedbackFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Girsanov shift `h(t, x)`: either a fixed field on the grid or a bounded
/// state-feedback rule `g(t, x, u)` evaluated on the explicit scheme's
/// previous step.
#[derive(Clone)]
pub enum ShiftKind {
    /// `h(t_n, x_i)`, shape `(nt, nx)`.
    Field(Array2<f64>),
    Feedback(FeedbackFn),
}

#[derive(Clone)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    /// Declared `sup |h|`.
    pub bound: f64,
    pub label: String,
    grid: GridSpec,
}

impl fmt::Debug for ShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ShiftKind::Field(_) => "field",
            ShiftKind::Feedback(_) => "feedback",
        };
        f.debug_struct("ShiftSpec")
            .field("kind", &kind)
            .field("bound", &self.bound)
            .field("label", &self.label)
            .finish()
    }
}

fn time_window(t: f64, start: f64, end: f64) -> f64 {
    if t >= start && t < end {
        1.0
    } else {
        0.0
    }
}

impl ShiftSpec {
    pub fn from_field(grid: &GridSpec, values: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        if values.dim() != (grid.nt, grid.nx) {
            return Err(invalid(format!(
                "shift field shape {:?} does not match ({}, {})",
                values.dim(),
                grid.nt,
                grid.nx
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("shift field has non-finite entries"));
        }
        let bound = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(ShiftSpec {
            kind: ShiftKind::Field(values),
            bound,
            label: label.into(),
            grid: *grid,
        })
    }

    pub fn deterministic(grid: &GridSpec, h: impl Fn(f64, f64) -> f64, label: impl Into<String>) -> Result<Self> {
        let values = Array2::from_shape_fn((grid.nt, grid.nx), |(n, i)| h(grid.t(n), grid.x(i)));
        ShiftSpec::from_field(grid, values, label)
    }

    pub fn zero(grid: &GridSpec) -> Self {
        ShiftSpec::from_field(grid, Array2::zeros((grid.nt, grid.nx)), "zero").expect("zero field")
    }

    /// `a exp(-x^2 / (2 w^2)) 1_{[t0, t1)}(t)`.
    pub fn gaussian_bump(grid: &GridSpec, amplitude: f64, width: f64, t0: f64, t1: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(invalid(format!("bump width must be > 0, got {width}")));
        }
        ShiftSpec::deterministic(
            grid,
            |t, x| amplitude * (-x * x / (2.0 * width * width)).exp() * time_window(t, t0, t1),
            "gaussian_bump",
        )
    }

    /// `a 1_{|x| <= r} 1_{[t0, t1)}(t)`.
    pub fn plateau(grid: &GridSpec, amplitude: f64, radius: f64, t0: f64, t1: f64) -> Result<Self> {
        ShiftSpec::deterministic(
            grid,
            |t, x| if x.abs() <= radius { amplitude * time_window(t, t0, t1) } else { 0.0 },
            "plateau",
        )
    }

    pub fn feedback(
        grid: &GridSpec,
        bound: f64,
        g: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        label: impl Into<String>,
    ) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(invalid(format!("feedback shift needs a finite sup bound, got {bound}")));
        }
        Ok(ShiftSpec {
            kind: ShiftKind::Feedback(Arc::new(g)),
            bound,
            label: label.into(),
            grid: *grid,
        })
    }

    /// `bound * tanh(u)`, localized in space by `exp(-x^2 / 2)`.
    pub fn tanh_feedback(grid: &GridSpec, bound: f64) -> Result<Self> {
        ShiftSpec::feedback(grid, bound, move |_, x, u| bound * u.tanh() * (-x * x / 2.0).exp(), "tanh_feedback")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn is_feedback(&self) -> bool {
        matches!(self.kind, ShiftKind::Feedback(_))
    }

    /// True for a field shift that vanishes identically.
    pub fn is_zero(&self) -> bool {
        match &self.kind {
            ShiftKind::Field(h) => h.iter().all(|&v| v == 0.0),
            ShiftKind::Feedback(_) => self.bound == 0.0,
        }
    }

    /// `c h`; for fields the declared bound scales with `|c|`.
    pub fn scaled(&self, c: f64) -> ShiftSpec {
        let kind = match &self.kind {
            ShiftKind::Field(h) => ShiftKind::Field(h.mapv(|v| c * v)),
            ShiftKind::Feedback(g) => {
                let g = g.clone();
                ShiftKind::Feedback(Arc::new(move |t, x, u| c * g(t, x, u)))
            }
        };
        ShiftSpec {
            kind,
            bound: self.bound * c.abs(),
            label: self.label.clone(),
            grid: self.grid,
        }
    }

    /// `h(t_n, x_i)`, reading the state `u(t_n, x_i)` for feedback shifts.
    pub fn value(&self, n: usize, i: usize, u: Option<&FieldPath>) -> Result<f64> {
        match &self.kind {
            ShiftKind::Field(h) => Ok(h[[n, i]]),
            ShiftKind::Feedback(g) => {
                let u = u.ok_or(Error::MissingPaths)?;
                self.eval_feedback(g, n, i, u.values[[n, i]])
            }
        }
    }

    /// `h(t_n, x_i)` given the state value there.
    pub fn value_with_state(&self, n: usize, i: usize, u: f64) -> Result<f64> {
        match &self.kind {
            ShiftKind::Field(h) => Ok(h[[n, i]]),
            ShiftKind::Feedback(g) => self.eval_feedback(g, n, i, u),
        }
    }

    fn eval_feedback(&self, g: &FeedbackFn, n: usize, i: usize, u: f64) -> Result<f64> {
        let v = g(self.grid.t(n), self.grid.x(i), u);
        if !v.is_finite() || v.abs() > self.bound * (1.0 + 1e-12) {
            return Err(invalid(format!(
                "feedback shift value {v} at (step {n}, cell {i}) exceeds declared bound {}",
                self.bound
            )));
        }
        Ok(v)
    }

    /// `sum_n sum_i h^2 dt dx` along one path (exact for field shifts).
    pub fn energy(&self, u: Option<&FieldPath>) -> Result<f64> {
        let g = self.grid;
        let cell = g.dt() * g.dx();
        match &self.kind {
            ShiftKind::Field(h) => Ok(h.iter().map(|v| v * v).sum::<f64>() * cell),
            ShiftKind::Feedback(_) => {
                let u = u.ok_or(Error::MissingPaths)?;
                same_grid(&u.grid, &g)?;
                let mut acc = 0.0;
                for n in 0..g.nt {
                    for i in 0..g.nx {
                        let v = self.value(n, i, Some(u))?;
                        acc += v * v;
                    }
                }
                Ok(acc * cell)
            }
        }
    }
}

/// `H = 1/2 E^Q int int h^2 dx dt`. Field shifts are exact on the grid;
/// feedback shifts average over the supplied paths realized under `Q`.
pub fn entropy_of_shift(shift: &ShiftSpec, u_paths: Option<&[FieldPath]>) -> Result<f64> {
    match &shift.kind {
        ShiftKind::Field(_) => Ok(0.5 * shift.energy(None)?),
        ShiftKind::Feedback(_) => {
            let paths = u_paths.filter(|p| !p.is_empty()).ok_or(Error::MissingPaths)?;
            let total: f64 = paths
                .iter()
                .map(|u| shift.energy(Some(u)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum();
            Ok(0.5 * total / paths.len() as f64)
        }
    }
}

/// `log M_T = sum h dW - 1/2 sum h^2 dt dx` for the driving noise `W`.
pub fn girsanov_log_density(shift: &ShiftSpec, noise: &NoisePath, u_path: Option<&FieldPath>) -> Result<f64> {
    same_grid(&shift.grid, &noise.grid)?;
    let g = noise.grid;
    let mut stoch = 0.0;
    for n in 0..g.nt {
        for i in 0..g.nx {
            stoch += shift.value(n, i, u_path)? * noise.increments[[n, i]];
        }
    }
    Ok(stoch - 0.5 * shift.energy(u_path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn same_key_same_noise() {
        let g = GridSpec::new(2.0, 21, 1.0, 10).unwrap();
        let a = sample_noise_path(&g, 7, 3);
        let b = sample_noise_path(&g, 7, 3);
        assert_eq!(a.increments, b.increments);
        assert_ne!(a.increments, sample_noise_path(&g, 7, 4).increments);
        assert_ne!(a.increments, sample_noise_path(&g, 8, 3).increments);
        assert_eq!(NoisePath::sample_row(&g, 7, 3, 6).as_slice(), a.increments.row(6).as_slice().unwrap());
    }

    #[test]
    fn moments_of_increments() {
        // 100_000 cells
        let g = GridSpec::new(5.0, 1001, 1.0, 100).unwrap();
        let w = sample_noise_path(&g, 42, 0);
        let cells = w.increments.len() as f64;
        let var0 = g.dt() * g.dx();
        let mean = w.increments.sum() / cells;
        assert!(mean.abs() <= 4.0 * (var0 / cells).sqrt(), "mean {mean}");
        let var = w.increments.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (cells - 1.0);
        let ratio = var / var0;
        assert!((0.98..=1.02).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn coarse_graining_preserves_sheet() {
        let coarse = GridSpec::new(2.0, 11, 1.0, 5).unwrap();
        let fine = coarse.refine(3, 4).unwrap();
        let w = sample_noise_path(&fine, 1, 0);
        let c = w.coarse_grain(&coarse).unwrap();
        assert_relative_eq!(c.increments.sum(), w.increments.sum(), epsilon = 1e-12);
        let block: f64 = (0..4).flat_map(|n| (6..9).map(move |i| (n, i))).map(|(n, i)| w.increments[[n, i]]).sum();
        assert_relative_eq!(c.increments[[0, 2]], block, epsilon = 1e-15);
        assert!(w.coarse_grain(&GridSpec::new(2.0, 13, 1.0, 5).unwrap()).is_err());
    }

    #[test]
    fn entropy_examples() {
        let g = GridSpec::new(1.0, 21, 1.0, 50).unwrap();
        assert_eq!(entropy_of_shift(&ShiftSpec::zero(&g), None).unwrap(), 0.0);
        let plateau = ShiftSpec::plateau(&g, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(entropy_of_shift(&plateau, None).unwrap(), 1.0, max_relative = 1e-12);

        let wide = GridSpec::new(12.0, 2401, 2.0, 40).unwrap();
        let decay = ShiftSpec::deterministic(&wide, |_, x| (-x.abs()).exp(), "decay").unwrap();
        // closed form T/2 with T = 2, midpoint error O(dx^2)
        assert_relative_eq!(entropy_of_shift(&decay, None).unwrap(), 1.0, max_relative = 1e-4);
    }

    #[test]
    fn entropy_scales_quadratically() {
        let g = GridSpec::new(4.0, 41, 1.0, 20).unwrap();
        let h = ShiftSpec::gaussian_bump(&g, 0.7, 1.0, 0.0, 0.5).unwrap();
        let base = entropy_of_shift(&h, None).unwrap();
        for c in [0.5, 2.0, 4.0] {
            assert_eq!(entropy_of_shift(&h.scaled(c), None).unwrap(), c * c * base);
        }
        assert_relative_eq!(entropy_of_shift(&h.scaled(3.0), None).unwrap(), 9.0 * base, max_relative = 1e-14);
    }

    #[test]
    fn feedback_entropy_needs_paths() {
        let g = GridSpec::new(2.0, 11, 1.0, 4).unwrap();
        let h = ShiftSpec::tanh_feedback(&g, 0.5).unwrap();
        assert_eq!(entropy_of_shift(&h, None), Err(Error::MissingPaths));
        let u = FieldPath::from_fn(g, |_, _| 100.0);
        let e = entropy_of_shift(&h, Some(&[u])).unwrap();
        let oracle: f64 = (0..g.nx).map(|i| (0.5 * (-g.x(i).powi(2) / 2.0).exp()).powi(2)).sum::<f64>() * g.dx() * g.horizon;
        assert_relative_eq!(e, 0.5 * oracle, max_relative = 1e-12);
    }

    #[test]
    fn feedback_bound_enforced() {
        let g = GridSpec::new(2.0, 11, 1.0, 4).unwrap();
        let h = ShiftSpec::feedback(&g, 0.1, |_, _, u| u, "identity").unwrap();
        let u = FieldPath::from_fn(g, |_, _| 1.0);
        assert!(h.value(0, 0, Some(&u)).is_err());
    }

    #[test]
    fn log_density_zero_shift() {
        let g = GridSpec::new(2.0, 11, 1.0, 4).unwrap();
        let w = sample_noise_path(&g, 3, 0);
        assert_eq!(girsanov_log_density(&ShiftSpec::zero(&g), &w, None).unwrap(), 0.0);
    }

    #[test]
    fn exponential_martingale_has_unit_mean() {
        let g = GridSpec::new(3.0, 31, 1.0, 20).unwrap();
        let h = ShiftSpec::gaussian_bump(&g, 0.8, 0.7, 0.0, 1.0).unwrap();
        let energy = h.energy(None).unwrap();
        let r = 4000;
        let logs: Vec<f64> = (0..r).map(|k| girsanov_log_density(&h, &sample_noise_path(&g, 11, k), None).unwrap()).collect();
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt();
            (m, s)
        };
        let (m_log, se_log) = stats(&logs);
        assert!((m_log + 0.5 * energy).abs() <= 3.0 * se_log, "{m_log} vs {}", -0.5 * energy);
        let dens: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
        let (m, se) = stats(&dens);
        assert!((m - 1.0).abs() <= 3.0 * se, "E[M_T] = {m} +- {se}");
    }

    #[test]
    fn shifted_noise_removes_drift() {
        let g = GridSpec::new(2.0, 11, 1.0, 4).unwrap();
        let w = sample_noise_path(&g, 3, 0);
        let h = ShiftSpec::plateau(&g, 2.0, 10.0, 0.0, 1.0).unwrap();
        let wt = w.shifted(&h, None).unwrap();
        let d = &w.increments - &wt.increments;
        assert!(d.iter().all(|v| (v - 2.0 * g.dt() * g.dx()).abs() < 1e-15));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn coarse_graining_keeps_cell_sums(seed in 0u64..10_000, replica in 0u64..64) {
                let coarse = GridSpec::new(2.0, 7, 1.0, 4).unwrap();
                let fine = coarse.refine(3, 9).unwrap();
                let w = sample_noise_path(&fine, seed, replica);
                let c = w.coarse_grain(&coarse).unwrap();
                prop_assert!((c.increments.sum() - w.increments.sum()).abs() < 1e-12);
                let block: f64 = (0..9).flat_map(|n| (0..3).map(move |i| (n, i))).map(|(n, i)| w.increments[[n, i]]).sum();
                prop_assert!((c.increments[[0, 0]] - block).abs() < 1e-12);
            }

            #[test]
            fn entropy_scales_quadratically(c in -3.0f64..3.0, a in 0.01f64..2.0, w in 0.2f64..2.0) {
                let g = GridSpec::new(4.0, 41, 1.0, 16).unwrap();
                let h = ShiftSpec::gaussian_bump(&g, a, w, 0.0, 0.5).unwrap();
                let base = entropy_of_shift(&h, None).unwrap();
                let scaled = entropy_of_shift(&h.scaled(c), None).unwrap();
                prop_assert!((scaled - c * c * base).abs() <= 1e-12 * c * c * base);
            }
        }
    }
}
