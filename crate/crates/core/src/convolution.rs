//! Space-time convolutions against the heat kernel.
//!
//! Every convolution here has the causal Toeplitz form
//! `g(t_n) = sum_{m < n} K_{n-m} * S_m`, with one spatial kernel per time lag.
//! [`LayerKernels`] holds those kernels and evaluates the sum either by banded
//! direct summation or by a zero-padded 2-D FFT; spectra are built lazily and
//! shared across replicas.

use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::{SpaceTimeFft, ToeplitzBank};
use crate::grid::{same_grid, FieldPath, GridSpec};
use crate::heatkernel::BandedKernel;
use crate::noise::NoisePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvolutionMethod {
    /// Direct summation for small grids, FFT otherwise.
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Causal lag kernels `K_1..=K_nt` on a grid.
pub struct LayerKernels {
    grid: GridSpec,
    kernels: Vec<BandedKernel>,
    space_time: OnceLock<SpaceTimeFft>,
    bank: OnceLock<ToeplitzBank>,
}

impl LayerKernels {
    /// `kernel(l)` for lags `l = 1..=nt`.
    pub fn from_fn(grid: &GridSpec, kernel: impl Fn(usize) -> BandedKernel) -> Self {
        LayerKernels {
            grid: *grid,
            kernels: (1..=grid.nt).map(kernel).collect(),
            space_time: OnceLock::new(),
            bank: OnceLock::new(),
        }
    }

    /// `dt * p_{l dt}` at the cell centers.
    pub fn drift(grid: &GridSpec) -> Self {
        let dt = grid.dt();
        LayerKernels::from_fn(grid, |l| BandedKernel::point(l as f64 * dt, grid).scaled(dt))
    }

    /// `p_{l dt}` integrated against cell noise; the newest layer uses the
    /// cell-averaged kernel.
    pub fn stochastic(grid: &GridSpec) -> Self {
        LayerKernels::weighted_stochastic(grid, |_| 1.0)
    }

    /// Stochastic kernels times a function of the lag time `l dt`. The noise
    /// increments already integrate over a cell, so these are densities.
    pub fn weighted_stochastic(grid: &GridSpec, weight: impl Fn(f64) -> f64) -> Self {
        let dt = grid.dt();
        let dx = grid.dx();
        LayerKernels::from_fn(grid, |l| {
            let t = l as f64 * dt;
            let k = if l == 1 {
                BandedKernel::cell_averaged(t, grid)
            } else {
                BandedKernel::point(t, grid)
            };
            k.scaled(weight(t) / dx)
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kernel(&self, lag: usize) -> &BandedKernel {
        &self.kernels[lag - 1]
    }

    fn direct_cost(&self) -> f64 {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        self.kernels
            .iter()
            .enumerate()
            .map(|(l, k)| (nt - l) as f64 * (nx * (2 * k.half_width() + 1).min(nx)) as f64)
            .sum()
    }

    fn fft_cost(&self) -> f64 {
        let size = ((2 * (self.grid.nt + 1)).next_power_of_two() * (2 * self.grid.nx - 1).next_power_of_two()) as f64;
        // forward, inverse, and the complex product
        8.0 * size * size.log2()
    }

    fn resolve(&self, method: ConvolutionMethod) -> ConvolutionMethod {
        match method {
            ConvolutionMethod::Auto if self.direct_cost() <= self.fft_cost() => ConvolutionMethod::Direct,
            ConvolutionMethod::Auto => ConvolutionMethod::Fft,
            m => m,
        }
    }

    fn space_time(&self) -> &SpaceTimeFft {
        self.space_time.get_or_init(|| {
            let nx = self.grid.nx;
            let mut dense = Vec::with_capacity(self.grid.nt + 1);
            dense.push(vec![0.0; 2 * nx - 1]);
            dense.extend(self.kernels.iter().map(|k| k.dense(nx)));
            SpaceTimeFft::new(&dense, self.grid.nt + 1, nx)
        })
    }

    fn bank(&self) -> &ToeplitzBank {
        self.bank.get_or_init(|| {
            let nx = self.grid.nx;
            let dense: Vec<Vec<f64>> = self.kernels.iter().map(|k| k.dense(nx)).collect();
            ToeplitzBank::new(&dense, nx)
        })
    }

    /// Full path `g(t_0..=t_nt)` from source rows `S_0..S_{nt-1}`; `g(t_0) = 0`.
    pub fn convolve(&self, source: &Array2<f64>, method: ConvolutionMethod) -> Array2<f64> {
        let (nt, nx) = (self.grid.nt, self.grid.nx);
        assert_eq!(source.dim(), (nt, nx));
        let mut out = Array2::zeros((nt + 1, nx));
        match self.resolve(method) {
            ConvolutionMethod::Fft => {
                let mut flat = source.iter().copied().collect::<Vec<_>>();
                flat.resize((nt + 1) * nx, 0.0);
                let res = self.space_time().apply(&flat);
                out.as_slice_mut().unwrap().copy_from_slice(&res);
            }
            _ => {
                for n in 1..=nt {
                    let row = out.row_mut(n).into_slice().unwrap();
                    for m in 0..n {
                        self.kernels[n - m - 1].accumulate(source.row(m).as_slice().unwrap(), row);
                    }
                }
            }
        }
        out
    }

    /// `g(t_n)` alone.
    pub fn convolve_at(&self, source: &Array2<f64>, n: usize, method: ConvolutionMethod) -> Array1<f64> {
        let nx = self.grid.nx;
        assert!(n <= self.grid.nt && source.ncols() == nx && source.nrows() >= n);
        let direct = match method {
            ConvolutionMethod::Direct => true,
            ConvolutionMethod::Fft => false,
            ConvolutionMethod::Auto => {
                let taps: usize = self.kernels[..n].iter().map(|k| (2 * k.half_width() + 1).min(nx)).sum();
                let size = (2 * nx - 1).next_power_of_two() as f64;
                (taps * nx) as f64 <= n as f64 * 4.0 * size * size.log2()
            }
        };
        if direct {
            let mut out = vec![0.0; nx];
            for m in 0..n {
                self.kernels[n - m - 1].accumulate(source.row(m).as_slice().unwrap(), &mut out);
            }
            Array1::from(out)
        } else if n == 0 {
            Array1::zeros(nx)
        } else {
            let bank = self.bank();
            Array1::from(bank.apply_sum((0..n).map(|m| (n - m - 1, source.row(m).to_slice().unwrap()))))
        }
    }
}

fn noise_source(sigma: &FieldPath, noise: &NoisePath) -> Result<Array2<f64>> {
    same_grid(&sigma.grid, &noise.grid)?;
    let nt = noise.grid.nt;
    Ok(&sigma.values.slice(ndarray::s![..nt, ..]) * &noise.increments)
}

/// `g(t_n) = sum_{m < n} dt P_{t_n - t_m} f(t_m)`.
pub fn drift_convolution(f: &FieldPath, grid: &GridSpec) -> Result<FieldPath> {
    drift_convolution_with(f, &LayerKernels::drift(grid), ConvolutionMethod::Auto)
}

pub fn drift_convolution_with(f: &FieldPath, kernels: &LayerKernels, method: ConvolutionMethod) -> Result<FieldPath> {
    same_grid(&f.grid, kernels.grid())?;
    let nt = f.grid.nt;
    let source = f.values.slice(ndarray::s![..nt, ..]).to_owned();
    FieldPath::new(kernels.convolve(&source, method), f.grid)
}

/// `g(t_n, x_i) = sum_{m < n} sum_j p_{t_n - t_m}(x_i, x_j) sigma(t_m, x_j) W(m, j)`,
/// with the cell-averaged kernel on the newest layer.
pub fn stochastic_convolution_direct(sigma: &FieldPath, noise: &NoisePath, grid: &GridSpec) -> Result<FieldPath> {
    StochasticConvolver::new(grid, ConvolutionMethod::Auto).convolve(sigma, noise)
}

/// Direct stochastic convolution with kernels kept for reuse across replicas.
pub struct StochasticConvolver {
    kernels: LayerKernels,
    method: ConvolutionMethod,
}

impl StochasticConvolver {
    pub fn new(grid: &GridSpec, method: ConvolutionMethod) -> Self {
        StochasticConvolver {
            kernels: LayerKernels::stochastic(grid),
            method,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.kernels.grid()
    }

    pub fn kernel(&self, lag: usize) -> &BandedKernel {
        self.kernels.kernel(lag)
    }

    pub fn convolve(&self, sigma: &FieldPath, noise: &NoisePath) -> Result<FieldPath> {
        same_grid(&noise.grid, self.grid())?;
        let source = noise_source(sigma, noise)?;
        FieldPath::new(self.kernels.convolve(&source, self.method), *self.grid())
    }

    /// The convolution at step `n` only.
    pub fn convolve_at(&self, sigma: &FieldPath, noise: &NoisePath, n: usize) -> Result<Array1<f64>> {
        same_grid(&noise.grid, self.grid())?;
        if n > self.grid().nt {
            return Err(invalid(format!("step {n} beyond nt = {}", self.grid().nt)));
        }
        let source = noise_source(sigma, noise)?;
        Ok(self.kernels.convolve_at(&source, n, self.method))
    }
}

/// What to keep from the intermediate field `J_alpha sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntermediateStorage {
    #[default]
    Discard,
    Keep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationParams {
    pub alpha: f64,
    #[serde(default)]
    pub storage: IntermediateStorage,
}

/// Admissible factorization exponents, open interval.
pub const ALPHA_RANGE: (f64, f64) = (0.0, 0.125);

impl FactorizationParams {
    pub fn new(alpha: f64) -> Result<Self> {
        let p = FactorizationParams {
            alpha,
            storage: IntermediateStorage::Discard,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = ALPHA_RANGE;
        if !(self.alpha > lo && self.alpha < hi) {
            return Err(invalid(format!(
                "factorization alpha must lie in ({lo}, 1/8), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Exponent window `(1/p, 1/4 - 1/p)` for `p`-th moment estimates;
    /// empty for `p <= 8`.
    pub fn moment_window(p: f64) -> Option<(f64, f64)> {
        let (lo, hi) = (1.0 / p, 0.25 - 1.0 / p);
        (p > 0.0 && lo < hi).then_some((lo, hi))
    }
}

impl Default for FactorizationParams {
    fn default() -> Self {
        FactorizationParams {
            alpha: 0.1,
            storage: IntermediateStorage::Discard,
        }
    }
}

pub struct FactorizedConvolution {
    pub field: FieldPath,
    /// `J_alpha sigma` at `t_0..=t_nt` when kept.
    pub intermediate: Option<FieldPath>,
}

/// Two-stage evaluation `J^{alpha-1}(J_alpha sigma)`.
///
/// The inner stage is the stochastic convolution with kernel weight
/// `(s - t_m)^{-alpha}`. The outer fractional integral takes `J_alpha sigma`
/// at the right end of each time cell and integrates `(t - s)^{alpha-1}`
/// exactly over the cell.
pub struct FactorizedConvolver {
    params: FactorizationParams,
    inner: LayerKernels,
    outer: LayerKernels,
    method: ConvolutionMethod,
}

impl FactorizedConvolver {
    pub fn new(grid: &GridSpec, params: FactorizationParams, method: ConvolutionMethod) -> Result<Self> {
        params.validate()?;
        let a = params.alpha;
        let dt = grid.dt();
        let inner = LayerKernels::weighted_stochastic(grid, |t| t.powf(-a));
        let norm = (PI * a).sin() / PI;
        let outer = LayerKernels::from_fn(grid, |l| {
            let cell = ((l as f64 * dt).powf(a) - ((l - 1) as f64 * dt).powf(a)) / a;
            let k = if l == 1 {
                BandedKernel::identity()
            } else {
                BandedKernel::point((l - 1) as f64 * dt, grid)
            };
            k.scaled(norm * cell)
        });
        Ok(FactorizedConvolver {
            params,
            inner,
            outer,
            method,
        })
    }

    /// Effective weight the scheme puts on a noise layer `j` steps in the
    /// past, relative to the direct convolution (tends to 1 as `j` grows).
    pub fn layer_coefficient(&self, j: usize) -> f64 {
        let a = self.params.alpha;
        let dt = self.inner.grid().dt();
        let norm = (PI * a).sin() / PI;
        (1..=j)
            .map(|i| {
                let cell = ((i as f64 * dt).powf(a) - ((i - 1) as f64 * dt).powf(a)) / a;
                norm * cell * (((j - i + 1) as f64) * dt).powf(-a)
            })
            .sum()
    }

    pub fn convolve(&self, sigma: &FieldPath, noise: &NoisePath) -> Result<FactorizedConvolution> {
        let grid = *self.inner.grid();
        same_grid(&noise.grid, &grid)?;
        let source = noise_source(sigma, noise)?;
        let j = self.inner.convolve(&source, self.method);
        let shifted = j.slice(ndarray::s![1.., ..]).to_owned();
        let field = FieldPath::new(self.outer.convolve(&shifted, self.method), grid)?;
        let intermediate = match self.params.storage {
            IntermediateStorage::Keep => Some(FieldPath::new(j, grid)?),
            IntermediateStorage::Discard => None,
        };
        Ok(FactorizedConvolution { field, intermediate })
    }
}

pub fn stochastic_convolution_factorized(
    sigma: &FieldPath,
    noise: &NoisePath,
    params: FactorizationParams,
    grid: &GridSpec,
) -> Result<FieldPath> {
    Ok(FactorizedConvolver::new(grid, params, ConvolutionMethod::Auto)?
        .convolve(sigma, noise)?
        .field)
}
