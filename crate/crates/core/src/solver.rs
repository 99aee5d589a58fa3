//! Exponential-Euler time stepping of the mild form
//!
//! `u(t) = P_t u0 + int_0^t P_{t-s} b(u(s)) ds + int_0^t P_{t-s} sigma(u(s)) W(ds)`
//!
//! optionally with the Girsanov drift `sigma(u) h`, plus a Picard iteration of
//! the same integral equation used as a cross-check.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::convolution::{drift_convolution_with, ConvolutionMethod, LayerKernels, StochasticConvolver};
use crate::error::{invalid, Error, Result};
use crate::grid::{check_row, same_grid, FieldPath, GridSpec};
use crate::heatkernel::{apply_semigroup, BandedKernel};
use crate::noise::{NoisePath, ShiftSpec};

type ScalarClosure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar coefficient. The named forms can be written in configs.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFn {
    Zero,
    Constant { value: f64 },
    Linear { slope: f64 },
    Sin { amplitude: f64, frequency: f64 },
    Cos { amplitude: f64, frequency: f64 },
    Tanh { amplitude: f64, scale: f64 },
    /// `gain x / (1 + x^2)`, Lipschitz with constant `gain`.
    Saturating { gain: f64 },
    #[serde(skip)]
    Custom(ScalarClosure),
}

impl ScalarFn {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant { value } => *value,
            ScalarFn::Linear { slope } => slope * x,
            ScalarFn::Sin { amplitude, frequency } => amplitude * (frequency * x).sin(),
            ScalarFn::Cos { amplitude, frequency } => amplitude * (frequency * x).cos(),
            ScalarFn::Tanh { amplitude, scale } => amplitude * (scale * x).tanh(),
            ScalarFn::Saturating { gain } => gain * x / (1.0 + x * x),
            ScalarFn::Custom(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFn::Zero) || matches!(self, ScalarFn::Constant { value } if *value == 0.0)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Zero => write!(f, "0"),
            ScalarFn::Constant { value } => write!(f, "{value}"),
            ScalarFn::Linear { slope } => write!(f, "{slope} x"),
            ScalarFn::Sin { amplitude, frequency } => write!(f, "{amplitude} sin({frequency} x)"),
            ScalarFn::Cos { amplitude, frequency } => write!(f, "{amplitude} cos({frequency} x)"),
            ScalarFn::Tanh { amplitude, scale } => write!(f, "{amplitude} tanh({scale} x)"),
            ScalarFn::Saturating { gain } => write!(f, "{gain} x / (1 + x^2)"),
            ScalarFn::Custom(_) => write!(f, "<custom>"),
        }
    }
}

/// Drift `b`, diffusion `sigma`, and their declared constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub b: ScalarFn,
    pub sigma: ScalarFn,
    pub l_b: f64,
    pub l_sigma: f64,
    pub k_sigma: f64,
}

pub const COEFFICIENT_PRESETS: [&str; 5] = ["default", "additive", "heat", "sine", "drift_only"];

impl CoefficientSpec {
    /// `b(x) = L_b x / (1 + x^2)`, `sigma(x) = K cos(x L_sigma / K)`.
    pub fn default_suite(l_b: f64, l_sigma: f64, k_sigma: f64) -> Result<Self> {
        if !(k_sigma > 0.0) {
            return Err(invalid(format!("k_sigma must be > 0, got {k_sigma}")));
        }
        Ok(CoefficientSpec {
            b: ScalarFn::Saturating { gain: l_b },
            sigma: ScalarFn::Cos {
                amplitude: k_sigma,
                frequency: l_sigma / k_sigma,
            },
            l_b,
            l_sigma,
            k_sigma,
        })
    }

    /// `b = 0`, `sigma = K`.
    pub fn additive(k: f64) -> Self {
        CoefficientSpec {
            b: ScalarFn::Zero,
            sigma: ScalarFn::Constant { value: k },
            l_b: 0.0,
            l_sigma: 0.0,
            k_sigma: k.abs(),
        }
    }

    pub fn heat() -> Self {
        CoefficientSpec::additive(0.0)
    }

    /// Registered presets; constants are taken from the arguments where the
    /// preset has free parameters.
    pub fn preset(name: &str, l_b: f64, l_sigma: f64, k_sigma: f64) -> Result<Self> {
        match name {
            "default" => CoefficientSpec::default_suite(l_b, l_sigma, k_sigma),
            "additive" => Ok(CoefficientSpec::additive(k_sigma)),
            "heat" => Ok(CoefficientSpec::heat()),
            "sine" => Ok(CoefficientSpec {
                b: ScalarFn::Zero,
                sigma: ScalarFn::Sin {
                    amplitude: k_sigma,
                    frequency: l_sigma / k_sigma,
                },
                l_b: 0.0,
                l_sigma,
                k_sigma,
            }),
            "drift_only" => Ok(CoefficientSpec {
                b: ScalarFn::Saturating { gain: l_b },
                sigma: ScalarFn::Zero,
                l_b,
                l_sigma: 0.0,
                k_sigma: 0.0,
            }),
            other => Err(invalid(format!(
                "unknown coefficient preset {other:?}; expected one of {COEFFICIENT_PRESETS:?}"
            ))),
        }
    }
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec::default_suite(1.0, 0.5, 1.0).expect("valid defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientReport {
    pub probe_count: usize,
    pub radius: f64,
    pub max_quotient_b: f64,
    pub max_quotient_sigma: f64,
    pub sup_sigma: f64,
}

const CONTRACT_SLACK: f64 = 1e-9;

/// Probe the Lipschitz and boundedness hypotheses on `[-R, R]`.
///
/// Quotients are taken over neighbouring probes and over mirrored pairs
/// `(x_k, x_{n-1-k})`, which also covers long separations.
pub fn validate_coefficients(spec: &CoefficientSpec, probe_count: usize, radius: f64) -> Result<CoefficientReport> {
    if probe_count < 2 {
        return Err(invalid(format!("probe_count must be >= 2, got {probe_count}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("probe radius must be > 0, got {radius}")));
    }
    let xs: Vec<f64> = (0..probe_count)
        .map(|k| -radius + 2.0 * radius * k as f64 / (probe_count - 1) as f64)
        .collect();
    let bs: Vec<f64> = xs.iter().map(|&x| spec.b.eval(x)).collect();
    let ss: Vec<f64> = xs.iter().map(|&x| spec.sigma.eval(x)).collect();
    if let Some(k) = bs.iter().chain(&ss).position(|v| !v.is_finite()) {
        return Err(invalid(format!("coefficient is not finite at x = {}", xs[k % probe_count])));
    }

    let pairs = (0..probe_count - 1)
        .map(|k| (k, k + 1))
        .chain((0..probe_count / 2).map(|k| (k, probe_count - 1 - k)));
    let mut qb = (0.0f64, 0.0, 0.0);
    let mut qs = (0.0f64, 0.0, 0.0);
    for (i, j) in pairs {
        let d = (xs[i] - xs[j]).abs();
        let b = (bs[i] - bs[j]).abs() / d;
        let s = (ss[i] - ss[j]).abs() / d;
        if b > qb.0 {
            qb = (b, xs[i], xs[j]);
        }
        if s > qs.0 {
            qs = (s, xs[i], xs[j]);
        }
    }
    let (mut sup, mut arg) = (0.0f64, 0.0);
    for (&x, &s) in xs.iter().zip(&ss) {
        if s.abs() > sup {
            sup = s.abs();
            arg = x;
        }
    }

    let exceeds = |observed: f64, declared: f64| observed > declared + CONTRACT_SLACK * declared.max(1.0);
    if exceeds(qb.0, spec.l_b) {
        return Err(Error::CoefficientContract {
            constant: "L_b",
            declared: spec.l_b,
            observed: qb.0,
            x: qb.1,
            y: qb.2,
        });
    }
    if exceeds(qs.0, spec.l_sigma) {
        return Err(Error::CoefficientContract {
            constant: "L_sigma",
            declared: spec.l_sigma,
            observed: qs.0,
            x: qs.1,
            y: qs.2,
        });
    }
    if exceeds(sup, spec.k_sigma) {
        return Err(Error::CoefficientContract {
            constant: "K_sigma",
            declared: spec.k_sigma,
            observed: sup,
            x: arg,
            y: arg,
        });
    }
    Ok(CoefficientReport {
        probe_count,
        radius,
        max_quotient_b: qb.0,
        max_quotient_sigma: qs.0,
        sup_sigma: sup,
    })
}

/// Probe set used when a solver validates its own coefficients.
pub const DEFAULT_PROBES: usize = 4001;
pub const DEFAULT_PROBE_RADIUS: f64 = 20.0;

/// One-step operators for a fixed grid and coefficient pair:
///
/// `u^{n+1} = P_dt[u^n + dt b(u^n) + dt sigma(u^n) h^n] + A_dt[sigma(u^n) W^n]`
///
/// with `P_dt` the point kernel and `A_dt` the cell-averaged one.
pub struct SpdeSolver {
    grid: GridSpec,
    spec: CoefficientSpec,
    step: BandedKernel,
    noise_step: BandedKernel,
}

impl SpdeSolver {
    pub fn new(grid: &GridSpec, spec: &CoefficientSpec) -> Result<Self> {
        grid.validate()?;
        grid.check_resolution()?;
        validate_coefficients(spec, DEFAULT_PROBES, DEFAULT_PROBE_RADIUS)?;
        Ok(SpdeSolver {
            grid: *grid,
            spec: spec.clone(),
            step: BandedKernel::point(grid.dt(), grid),
            noise_step: BandedKernel::cell_averaged(grid.dt(), grid).scaled(1.0 / grid.dx()),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn solve(&self, u0: ArrayView1<f64>, shift: Option<&ShiftSpec>, noise: &NoisePath) -> Result<FieldPath> {
        let g = self.grid;
        check_row(u0, &g)?;
        same_grid(&noise.grid, &g)?;
        if let Some(h) = shift {
            same_grid(h.grid(), &g)?;
        }
        let shift = shift.filter(|h| !h.is_zero());
        let dt = g.dt();
        let (has_b, has_sigma) = (!self.spec.b.is_zero(), !self.spec.sigma.is_zero());

        let mut values = Array2::zeros((g.nt + 1, g.nx));
        values.row_mut(0).assign(&u0);
        let mut arg = vec![0.0; g.nx];
        let mut src = vec![0.0; g.nx];
        for n in 0..g.nt {
            let (done, mut rest) = values.view_mut().split_at(ndarray::Axis(0), n + 1);
            let u = done.row(n);
            let w = noise.increments.row(n);
            for i in 0..g.nx {
                let ui = u[i];
                let si = if has_sigma { self.spec.sigma.eval(ui) } else { 0.0 };
                let mut a = ui;
                if has_b {
                    a += dt * self.spec.b.eval(ui);
                }
                if let Some(h) = shift {
                    let hi = h.value_with_state(n, i, ui)?;
                    if hi != 0.0 {
                        a += dt * si * hi;
                    }
                }
                arg[i] = a;
                src[i] = si * w[i];
            }
            let next = rest.row_mut(0).into_slice().expect("row-major");
            self.step.accumulate(&arg, next);
            if has_sigma {
                self.noise_step.accumulate(&src, next);
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: n + 1 });
            }
        }
        Ok(FieldPath { values, grid: g })
    }

    /// Shifted and unshifted solutions on the same noise.
    pub fn solve_coupled(&self, u0: ArrayView1<f64>, shift: &ShiftSpec, noise: &NoisePath) -> Result<CoupledRun> {
        let v = self.solve(u0, None, noise)?;
        let u = if shift.is_zero() {
            v.clone()
        } else {
            self.solve(u0, Some(shift), noise)?
        };
        Ok(CoupledRun {
            u,
            v,
            shift: shift.clone(),
            noise: noise.clone(),
            initial: u0.to_owned(),
        })
    }
}

pub fn solve_spde(
    u0: ArrayView1<f64>,
    spec: &CoefficientSpec,
    shift: Option<&ShiftSpec>,
    noise: &NoisePath,
    grid: &GridSpec,
) -> Result<FieldPath> {
    SpdeSolver::new(grid, spec)?.solve(u0, shift, noise)
}

/// The Girsanov pair: `u` carries the shift, `v` does not, both see `noise`.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub u: FieldPath,
    pub v: FieldPath,
    pub shift: ShiftSpec,
    pub noise: NoisePath,
    pub initial: Array1<f64>,
}

pub fn solve_coupled(
    u0: ArrayView1<f64>,
    spec: &CoefficientSpec,
    shift: &ShiftSpec,
    noise: &NoisePath,
    grid: &GridSpec,
) -> Result<CoupledRun> {
    SpdeSolver::new(grid, spec)?.solve_coupled(u0, shift, noise)
}

/// Largest `nx * nt` the Picard oracle accepts.
pub const ORACLE_MAX_CELLS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub path: FieldPath,
    /// `max |u^(k) - u^(k-1)|` per iteration.
    pub deltas: Vec<f64>,
    pub last_delta: f64,
    pub warning: Option<String>,
}

/// Picard iteration of the mild equation from `u^(0)(t) = P_t u0`.
pub fn mild_fixed_point_oracle(
    u0: ArrayView1<f64>,
    spec: &CoefficientSpec,
    noise: &NoisePath,
    grid: &GridSpec,
    iterations: usize,
) -> Result<FixedPointResult> {
    if grid.nx * grid.nt > ORACLE_MAX_CELLS {
        return Err(invalid(format!(
            "fixed-point oracle is limited to nx * nt <= {ORACLE_MAX_CELLS}, got {}",
            grid.nx * grid.nt
        )));
    }
    if iterations == 0 {
        return Err(invalid("iterations must be >= 1"));
    }
    check_row(u0, grid)?;
    same_grid(&noise.grid, grid)?;

    let mut free = Array2::zeros((grid.nt + 1, grid.nx));
    for n in 0..=grid.nt {
        free.row_mut(n).assign(&apply_semigroup(u0, grid.t(n), grid)?);
    }
    let drift = LayerKernels::drift(grid);
    let stoch = StochasticConvolver::new(grid, ConvolutionMethod::Auto);

    let mut u = FieldPath::new(free.clone(), *grid)?;
    let mut deltas = Vec::with_capacity(iterations);
    let mut rising = 0;
    let mut warning = None;
    for k in 0..iterations {
        let mut next = free.clone();
        if !spec.b.is_zero() {
            next += &drift_convolution_with(&u.map(|x| spec.b.eval(x)), &drift, ConvolutionMethod::Auto)?.values;
        }
        if !spec.sigma.is_zero() {
            next += &stoch.convolve(&u.map(|x| spec.sigma.eval(x)), noise)?.values;
        }
        let delta = (&next - &u.values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !delta.is_finite() {
            return Err(Error::Divergence { step: k + 1 });
        }
        if deltas.last().is_some_and(|&prev| delta > prev) {
            rising += 1;
        } else {
            rising = 0;
        }
        if rising >= 3 && warning.is_none() {
            warning = Some(format!("Picard deltas increased for 3 consecutive iterations (at iteration {})", k + 1));
        }
        deltas.push(delta);
        u = FieldPath::new(next, *grid)?;
    }
    Ok(FixedPointResult {
        last_delta: *deltas.last().unwrap(),
        path: u,
        deltas,
        warning,
    })
}

/// Rows `0..=n` of a path restricted to a coarser nesting grid, sampling the
/// fine cells that share the coarse centers.
pub fn restrict(path: &FieldPath, coarse: &GridSpec) -> Result<FieldPath> {
    let (sx, st) = coarse
        .nesting(&path.grid)
        .ok_or_else(|| invalid("path grid does not nest inside the coarse grid"))?;
    let values = path.values.slice(s![..;st, sx / 2..;sx]).to_owned();
    FieldPath::new(values, *coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_noise_path;
    use approx::assert_relative_eq;

    fn grid() -> GridSpec {
        GridSpec::new(6.0, 61, 1.0, 25).unwrap()
    }

    fn bump(g: &GridSpec) -> Array1<f64> {
        g.field(|x| (-x * x).exp())
    }

    #[test]
    fn contract_examples() {
        let lin = CoefficientSpec {
            b: ScalarFn::Linear { slope: 1.0 },
            sigma: ScalarFn::Zero,
            l_b: 1.0,
            l_sigma: 0.0,
            k_sigma: 0.0,
        };
        let r = validate_coefficients(&lin, 101, 5.0).unwrap();
        assert_relative_eq!(r.max_quotient_b, 1.0, max_relative = 1e-12);

        let sine = CoefficientSpec {
            b: ScalarFn::Zero,
            sigma: ScalarFn::Sin { amplitude: 1.0, frequency: 1.0 },
            l_b: 0.0,
            l_sigma: 1.0,
            k_sigma: 1.0,
        };
        validate_coefficients(&sine, 1001, 10.0).unwrap();

        let unbounded = CoefficientSpec {
            sigma: ScalarFn::Linear { slope: 1.0 },
            l_sigma: 1.0,
            k_sigma: 1.0,
            ..CoefficientSpec::heat()
        };
        match validate_coefficients(&unbounded, 101, 5.0) {
            Err(Error::CoefficientContract { constant, x, .. }) => {
                assert_eq!(constant, "K_sigma");
                assert!(x.abs() > 1.0);
            }
            other => panic!("expected contract error, got {other:?}"),
        }
        assert!(validate_coefficients(&sine, 1, 1.0).is_err());
    }

    #[test]
    fn presets_satisfy_their_constants() {
        for name in COEFFICIENT_PRESETS {
            let spec = CoefficientSpec::preset(name, 1.0, 0.5, 1.0).unwrap();
            validate_coefficients(&spec, DEFAULT_PROBES, DEFAULT_PROBE_RADIUS).unwrap();
        }
        assert!(CoefficientSpec::preset("nope", 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn heat_flow_telescopes() {
        let g = grid();
        let u0 = bump(&g);
        let u = solve_spde(u0.view(), &CoefficientSpec::heat(), None, &sample_noise_path(&g, 0, 0), &g).unwrap();
        let step = BandedKernel::point(g.dt(), &g);
        let mut v = u0.to_vec();
        for n in 1..=g.nt {
            v = step.apply(&v);
            assert_eq!(u.row(n).as_slice().unwrap(), v.as_slice());
        }
    }

    #[test]
    fn heat_flow_matches_semigroup() {
        // composing sampled kernels aliases at the grid Nyquist frequency by
        // about exp(-pi^2 dt / dx^2), damped by the smoothness of u0
        for (g, tol) in [(grid(), 1e-7), (GridSpec::new(6.0, 121, 1.0, 25).unwrap(), 1e-13)] {
            let w = sample_noise_path(&g, 0, 0);
            let u0 = bump(&g);
            let u = solve_spde(u0.view(), &CoefficientSpec::heat(), None, &w, &g).unwrap();
            for n in [1, 10, g.nt] {
                let p = apply_semigroup(u0.view(), g.t(n), &g).unwrap();
                // away from the edges, where repeated truncation differs
                for i in (0..g.nx).filter(|&i| g.x(i).abs() <= g.half_width - 4.0) {
                    let d = (u.values[[n, i]] - p[i]).abs();
                    assert!(d <= tol, "step {n} cell {i}: {d}");
                }
            }
        }
    }

    #[test]
    fn constant_drift_adds_linear_growth() {
        let g = grid();
        let w = sample_noise_path(&g, 0, 0);
        let spec = CoefficientSpec {
            b: ScalarFn::Constant { value: 0.7 },
            l_b: 0.0,
            ..CoefficientSpec::heat()
        };
        let u0 = bump(&g);
        let u = solve_spde(u0.view(), &spec, None, &w, &g).unwrap();
        let p = apply_semigroup(u0.view(), 1.0, &g).unwrap();
        let c = g.center();
        assert!((u.values[[g.nt, c]] - p[c] - 0.7).abs() < 1e-7);
    }

    #[test]
    fn zero_shift_is_bitwise_identical() {
        let g = grid();
        let spec = CoefficientSpec::default();
        let solver = SpdeSolver::new(&g, &spec).unwrap();
        for seed in 0..4 {
            let w = sample_noise_path(&g, seed, 0);
            let run = solver.solve_coupled(bump(&g).view(), &ShiftSpec::zero(&g), &w).unwrap();
            assert_eq!(run.u.values, run.v.values);
            // a plateau that is zero on the grid
            let h = ShiftSpec::plateau(&g, 1.0, 1.0, 5.0, 6.0).unwrap();
            let u = solver.solve(bump(&g).view(), Some(&h), &w).unwrap();
            assert_eq!(u.values, run.v.values);
        }
    }

    #[test]
    fn shift_without_noise_coefficient_is_inert() {
        let g = grid();
        let spec = CoefficientSpec::preset("drift_only", 1.0, 0.0, 0.0).unwrap();
        let h = ShiftSpec::gaussian_bump(&g, 1.0, 1.0, 0.0, 1.0).unwrap();
        let run = solve_coupled(bump(&g).view(), &spec, &h, &sample_noise_path(&g, 1, 0), &g).unwrap();
        assert_eq!(run.u.values, run.v.values);
    }

    #[test]
    fn additive_shift_difference_is_deterministic() {
        let g = grid();
        let k = 0.8;
        let spec = CoefficientSpec::additive(k);
        let h = ShiftSpec::gaussian_bump(&g, 0.5, 1.0, 0.0, 0.5).unwrap();
        let solver = SpdeSolver::new(&g, &spec).unwrap();
        let d0 = {
            let r = solver.solve_coupled(bump(&g).view(), &h, &sample_noise_path(&g, 1, 0)).unwrap();
            r.u.difference(&r.v).unwrap()
        };
        let r = solver.solve_coupled(bump(&g).view(), &h, &sample_noise_path(&g, 2, 0)).unwrap();
        let d1 = r.u.difference(&r.v).unwrap();
        for (a, b) in d0.values.iter().zip(d1.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(d0.max_abs() > 0.01);
    }

    #[test]
    fn divergence_is_reported() {
        let g = GridSpec::new(2.0, 11, 1.0, 4).unwrap();
        let spec = CoefficientSpec {
            b: ScalarFn::custom(|x| 1e300 * x),
            l_b: 1e300,
            ..CoefficientSpec::heat()
        };
        let w = sample_noise_path(&g, 0, 0);
        let u0 = g.field(|_| 1e10);
        match solve_spde(u0.view(), &spec, None, &w, &g) {
            Err(Error::Divergence { step }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolution_guard() {
        let g = GridSpec::new(6.0, 61, 1.0, 200).unwrap();
        assert!(SpdeSolver::new(&g, &CoefficientSpec::default()).is_err());
    }

    #[test]
    fn oracle_heat_converges_in_one_iteration() {
        let g = GridSpec::new(4.0, 41, 1.0, 20).unwrap();
        let u0 = bump(&g);
        let r = mild_fixed_point_oracle(u0.view(), &CoefficientSpec::heat(), &sample_noise_path(&g, 0, 0), &g, 3).unwrap();
        assert_eq!(r.deltas, vec![0.0; 3]);
        let p = apply_semigroup(u0.view(), 1.0, &g).unwrap();
        assert_eq!(r.path.last(), p.view());
        assert!(r.warning.is_none());
        let big = GridSpec::new(4.0, 401, 1.0, 400).unwrap();
        assert!(mild_fixed_point_oracle(big.field(|_| 0.0).view(), &CoefficientSpec::heat(), &sample_noise_path(&big, 0, 0), &big, 1).is_err());
    }

    #[test]
    fn oracle_contracts_on_short_horizon() {
        let g = GridSpec::new(1.5, 31, 0.1, 10).unwrap();
        let spec = CoefficientSpec::default();
        let r = mild_fixed_point_oracle(bump(&g).view(), &spec, &sample_noise_path(&g, 4, 0), &g, 6).unwrap();
        for w in r.deltas.windows(2).skip(1) {
            assert!(w[1] < 0.5 * w[0], "{:?}", r.deltas);
        }
        let scheme = solve_spde(bump(&g).view(), &spec, None, &sample_noise_path(&g, 4, 0), &g).unwrap();
        let gap = scheme.difference(&r.path).unwrap().max_abs();
        assert!(gap < 0.2 * r.path.max_abs(), "gap {gap}");
    }

    #[test]
    fn restriction_samples_coarse_centers() {
        let c = GridSpec::new(2.0, 5, 1.0, 2).unwrap();
        let f = c.refine(3, 4).unwrap();
        let p = FieldPath::from_fn(f, |t, x| t + 10.0 * x);
        let r = restrict(&p, &c).unwrap();
        for n in 0..=c.nt {
            for i in 0..c.nx {
                assert_relative_eq!(r.values[[n, i]], c.t(n) + 10.0 * c.x(i), epsilon = 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn zero_shift_is_bitwise_inert(seed in 0u64..10_000, preset in 0usize..COEFFICIENT_PRESETS.len()) {
                let g = grid();
                let spec = CoefficientSpec::preset(COEFFICIENT_PRESETS[preset], 1.0, 0.5, 1.0).unwrap();
                let solver = SpdeSolver::new(&g, &spec).unwrap();
                let noise = sample_noise_path(&g, seed, 0);
                let u = solver.solve(bump(&g).view(), Some(&ShiftSpec::zero(&g)), &noise).unwrap();
                let v = solver.solve(bump(&g).view(), None, &noise).unwrap();
                prop_assert!(u.values.iter().zip(v.values.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
            }

            #[test]
            fn additive_difference_ignores_noise(s1 in 0u64..10_000, s2 in 0u64..10_000, k in 0.1f64..3.0) {
                let g = grid();
                let solver = SpdeSolver::new(&g, &CoefficientSpec::additive(k)).unwrap();
                let h = ShiftSpec::gaussian_bump(&g, 0.3, 1.0, 0.0, 0.5).unwrap();
                let d = |seed| {
                    let run = solver.solve_coupled(bump(&g).view(), &h, &sample_noise_path(&g, seed, 0)).unwrap();
                    run.u.difference(&run.v).unwrap()
                };
                let (a, b) = (d(s1), d(s2));
                let gap = a.values.iter().zip(b.values.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(gap < 1e-12 * a.max_abs().max(1.0), "gap {}", gap);
            }
        }
    }
}
