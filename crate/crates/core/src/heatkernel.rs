//! Gaussian heat kernel `p_t(x, y) = (2 pi t)^{-1/2} exp(-(x - y)^2 / (2t))`,
//! its action on grid fields, and numeric checks of the weighted kernel
//! estimates.
//!
//! Fields are extended by zero outside `[-L, L]`. The kernel is applied by
//! direct summation over the cells it does not underflow on; an FFT path is
//! kept for long kernels and cross-checked against the direct sum.

use std::f64::consts::{PI, SQRT_2};

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::fft::ToeplitzFft;
use crate::grid::{check_row, GridSpec};
use crate::metrics::WeightTable;

/// Largest `|eta| L` accepted before `e^{eta |y|}` is treated as overflow.
pub const MAX_WEIGHT_EXPONENT: f64 = 700.0;

const TRIM: f64 = 1e-18;

pub fn kernel_value(t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok(density(t, x - y))
}

#[inline]
pub(crate) fn density(t: f64, d: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Standard normal mass of `[a, b]`, accurate in both tails.
pub(crate) fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        1.0 - 0.5 * (erfc(-a / SQRT_2) + erfc(b / SQRT_2))
    }
}

/// Convolution weights indexed by cell offset, trimmed to the offsets where
/// they are nonzero in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedKernel {
    half: usize,
    weights: Vec<f64>,
}

impl BandedKernel {
    /// Build from a symmetric weight function of the cell offset, dropping
    /// offsets whose weight is below `1e-18` of the central one.
    pub fn from_offsets(max_offset: usize, w: impl Fn(usize) -> f64) -> Self {
        let floor = TRIM * w(0).abs();
        let mut half = 0;
        for d in 1..=max_offset {
            if w(d).abs() <= floor {
                break;
            }
            half = d;
        }
        let weights = (0..=2 * half)
            .map(|k| w((k as isize - half as isize).unsigned_abs()))
            .collect();
        BandedKernel { half, weights }
    }

    /// Point kernel `p_t(d dx) dx`, the midpoint-rule quadrature weight.
    pub fn point(t: f64, grid: &GridSpec) -> Self {
        let dx = grid.dx();
        BandedKernel::from_offsets(grid.nx - 1, |d| density(t, d as f64 * dx) * dx)
    }

    /// Cell-averaged kernel `int_{cell_j} p_t(x_i, y) dy`; carries unit mass
    /// for any `t`, including `sqrt(t) << dx`.
    pub fn cell_averaged(t: f64, grid: &GridSpec) -> Self {
        let dx = grid.dx();
        let s = t.sqrt();
        BandedKernel::from_offsets(grid.nx - 1, |d| {
            let d = d as f64;
            normal_mass((d - 0.5) * dx / s, (d + 0.5) * dx / s)
        })
    }

    pub fn identity() -> Self {
        BandedKernel {
            half: 0,
            weights: vec![1.0],
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.weights.iter_mut().for_each(|w| *w *= c);
        self
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    pub fn weight(&self, offset: isize) -> f64 {
        if offset.unsigned_abs() > self.half {
            0.0
        } else {
            self.weights[(offset + self.half as isize) as usize]
        }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Dense offsets `-(n-1)..=(n-1)` for the FFT paths.
    pub fn dense(&self, n: usize) -> Vec<f64> {
        (0..2 * n - 1)
            .map(|k| self.weight(k as isize - (n as isize - 1)))
            .collect()
    }

    /// `out_i += sum_j w[i - j] f_j`, zero extension outside the grid.
    pub fn accumulate(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let h = self.half as isize;
        for (i, o) in out.iter_mut().enumerate() {
            let lo = (i as isize - h).max(0) as usize;
            let hi = ((i as isize + h) as usize).min(n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.weights[(j as isize - i as isize + h) as usize] * f[j];
            }
            *o += acc;
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; f.len()];
        self.accumulate(f, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    #[default]
    Direct,
    Fft,
}

/// `P_t f` by midpoint-rule convolution; `t = 0` is the identity.
pub fn apply_semigroup(f: ArrayView1<f64>, t: f64, grid: &GridSpec) -> Result<Array1<f64>> {
    apply_semigroup_with(f, t, grid, KernelMethod::Direct)
}

pub fn apply_semigroup_with(
    f: ArrayView1<f64>,
    t: f64,
    grid: &GridSpec,
    method: KernelMethod,
) -> Result<Array1<f64>> {
    check_row(f, grid)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("semigroup time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(f.to_owned());
    }
    let k = BandedKernel::point(t, grid);
    let f = f.to_vec();
    Ok(Array1::from(match method {
        KernelMethod::Direct => k.apply(&f),
        KernelMethod::Fft => ToeplitzFft::new(&k.dense(grid.nx), grid.nx).apply(&f),
    }))
}

/// Mass that `P_t` would have drawn from beyond `[-L, L]` if `f` were
/// extended by its sup: `sup|f| * 2 Phi(-(L - |x|) / sqrt t)` at each cell.
pub fn boundary_tail(f: ArrayView1<f64>, t: f64, grid: &GridSpec) -> Array1<f64> {
    let sup = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if t == 0.0 {
        return Array1::zeros(grid.nx);
    }
    grid.field(|x| sup * erfc((grid.half_width - x.abs()) / (2.0 * t).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub check: String,
    pub t: f64,
    /// `eta` for the weight bounds, `lambda` for the contraction check.
    pub rate: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub max_ratio: f64,
    pub slack: f64,
    pub pass: bool,
}

impl KernelBoundReport {
    fn new(check: &str, t: f64, rate: f64, lhs: Vec<f64>, rhs: Vec<f64>, slack: f64) -> Self {
        let max_ratio = lhs
            .iter()
            .zip(&rhs)
            .map(|(&l, &r)| if l == 0.0 { 0.0 } else { l / r })
            .fold(0.0, f64::max);
        KernelBoundReport {
            check: check.to_string(),
            t,
            rate,
            lhs,
            rhs,
            max_ratio,
            slack,
            pass: max_ratio <= 1.0 + slack,
        }
    }
}

/// Default relative slack for bound checks on the simulation grid.
pub const BOUND_SLACK: f64 = 1e-3;

fn weight_field(eta: f64, grid: &GridSpec) -> Result<Array1<f64>> {
    if !eta.is_finite() {
        return Err(invalid(format!("eta must be finite, got {eta}")));
    }
    if eta.abs() * grid.half_width > MAX_WEIGHT_EXPONENT {
        return Err(Error::Range {
            eta,
            y: grid.half_width,
        });
    }
    Ok(grid.field(|y| (eta * y.abs()).exp()))
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("bound check needs t > 0, got {t}")))
    }
}

/// `int p_t(x, y) e^{eta |y|} dy <= 2 e^{eta^2 t / 2} e^{eta |x|}` at every grid `x`.
pub fn check_kernel_weight_bound_1(t: f64, eta: f64, grid: &GridSpec, slack: f64) -> Result<KernelBoundReport> {
    check_time(t)?;
    let w = weight_field(eta, grid)?;
    let lhs = apply_semigroup(w.view(), t, grid)?;
    let c = 2.0 * (eta * eta * t / 2.0).exp();
    let rhs = w.mapv(|v| c * v);
    Ok(KernelBoundReport::new("kernel_weight_bound_1", t, eta, lhs.to_vec(), rhs.to_vec(), slack))
}

/// `int p_t(x, y)^2 e^{eta |y|} dy <= (pi t)^{-1/2} e^{eta^2 t / 4} e^{eta |x|}`.
pub fn check_kernel_weight_bound_2(t: f64, eta: f64, grid: &GridSpec, slack: f64) -> Result<KernelBoundReport> {
    check_time(t)?;
    let w = weight_field(eta, grid)?;
    let dx = grid.dx();
    let sq = BandedKernel::from_offsets(grid.nx - 1, |d| density(t, d as f64 * dx).powi(2) * dx);
    let lhs = sq.apply(w.as_slice().expect("contiguous"));
    let c = (eta * eta * t / 4.0).exp() / (PI * t).sqrt();
    let rhs = w.mapv(|v| c * v);
    Ok(KernelBoundReport::new("kernel_weight_bound_2", t, eta, lhs, rhs.to_vec(), slack))
}

/// `||P_t f||_{L^2_lambda} <= sqrt(2) e^{lambda^2 t} ||f||_{L^2_lambda}`.
pub fn check_semigroup_contraction(
    f: ArrayView1<f64>,
    lambda: f64,
    t: f64,
    grid: &GridSpec,
    slack: f64,
) -> Result<KernelBoundReport> {
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let pf = apply_semigroup(f, t, grid)?;
    let w = WeightTable::new(grid, lambda);
    let lhs = w.l2_sq(pf.view()).sqrt();
    let rhs = SQRT_2 * (lambda * lambda * t).exp() * w.l2_sq(f).sqrt();
    Ok(KernelBoundReport::new("semigroup_contraction", t, lambda, vec![lhs], vec![rhs], slack))
}
