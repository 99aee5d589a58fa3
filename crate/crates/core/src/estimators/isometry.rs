//! Second-moment identity for the stochastic convolution with deterministic
//! `sigma`: `E ||conv(t)||^2_{L^2_lambda} = int_0^t int int p^2 sigma^2 e^{-2 lambda |x|}`.

use serde::{Deserialize, Serialize};

use super::oracle::isometry_integral;
use super::stats::mean_se;
use super::{check_power, per_replica, McParams, SigmaProfile};
use crate::convolution::{ConvolutionMethod, StochasticConvolver};
use crate::error::{invalid, Result};
use crate::grid::GridSpec;
use crate::heatkernel::BandedKernel;
use crate::metrics::WeightTable;
use crate::noise::sample_noise_path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryReport {
    pub sigma: SigmaProfile,
    pub lambda: f64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Quadrature value of the continuum integral on `[-L, L]`.
    pub oracle: f64,
    /// Exact expectation of the grid estimator.
    pub grid_expectation: f64,
    pub mean: f64,
    pub std_err: f64,
    /// `(mean - oracle) / std_err`.
    pub z_score: f64,
    /// Largest recorded truncation tail over replicas.
    pub tail: f64,
    pub pass: bool,
}

pub(crate) fn time_index(grid: &GridSpec, t: f64) -> Result<usize> {
    let n = (t / grid.dt()).round();
    if !(t > 0.0) || n < 1.0 || n > grid.nt as f64 || (n * grid.dt() - t).abs() > 1e-9 * t.max(1.0) {
        return Err(invalid(format!(
            "t = {t} is not a positive time level of the grid (dt = {}, T = {})",
            grid.dt(),
            grid.horizon
        )));
    }
    Ok(n as usize)
}

/// `E ||g(t_n)||^2` for the grid scheme, summed exactly over kernels.
pub fn grid_isometry_value(sigma: &SigmaProfile, lambda: f64, n: usize, convolver: &StochasticConvolver) -> f64 {
    let g = *convolver.grid();
    let s2: Vec<f64> = (0..g.nx).map(|j| sigma.eval(g.x(j)).powi(2) * g.dt() * g.dx()).collect();
    let mut var = vec![0.0; g.nx];
    for lag in 1..=n {
        let k = convolver.kernel(lag);
        let sq = BandedKernel::from_offsets(k.half_width(), |d| k.weight(d as isize).powi(2));
        sq.accumulate(&s2, &mut var);
    }
    WeightTable::new(&g, lambda).weighted_sum(&var)
}

pub fn ito_isometry_check(
    sigma: SigmaProfile,
    lambda: f64,
    t: f64,
    grid: &GridSpec,
    mc: &McParams,
    quad_tol: f64,
) -> Result<IsometryReport> {
    mc.validate()?;
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let n = time_index(grid, t)?;
    let convolver = StochasticConvolver::new(grid, ConvolutionMethod::Auto);
    let weights = WeightTable::new(grid, lambda);
    let path = sigma.path(grid);

    let cellwise = sigma.cellwise(grid);
    let oracle = isometry_integral(|y| cellwise.eval(y), &cellwise.breaks(), lambda, t, grid.half_width, quad_tol);
    let grid_expectation = grid_isometry_value(&sigma, lambda, n, &convolver);

    let samples = per_replica(mc.replicas, |r| {
        let noise = sample_noise_path(grid, mc.seed, r);
        let g = convolver.convolve_at(&path, &noise, n)?;
        Ok((weights.l2_sq(g.view()), grid.tail_bound(g.view(), lambda)))
    })?;
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let tail = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let (mean, std_err) = mean_se(&values);
    check_power(std_err, oracle)?;
    let diff = mean - oracle;
    let pass = if std_err > 0.0 { diff.abs() <= 3.0 * std_err } else { diff == 0.0 };
    Ok(IsometryReport {
        sigma,
        lambda,
        t,
        replicas: mc.replicas,
        seed: mc.seed,
        oracle,
        grid_expectation,
        mean,
        std_err,
        z_score: if std_err > 0.0 { diff / std_err } else { 0.0 },
        tail,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_sigma_is_zero_on_both_sides() {
        let g = GridSpec::new(4.0, 41, 1.0, 20).unwrap();
        let r = ito_isometry_check(SigmaProfile::Constant { value: 0.0 }, 1.0, 1.0, &g, &McParams::new(8, 1), 1e-9).unwrap();
        assert_eq!((r.mean, r.oracle, r.std_err), (0.0, 0.0, 0.0));
        assert!(r.pass);
    }

    #[test]
    fn grid_expectation_approaches_oracle() {
        // the left-endpoint rule misses part of the r^{-1/2} singularity:
        // relative bias ~ zeta(1/2) / (2 sqrt(n)) with zeta(1/2) = -1.4604
        let sigma = SigmaProfile::Constant { value: 1.0 };
        let mut prev = f64::INFINITY;
        for nt in [25, 100, 400] {
            let g = GridSpec::new(10.0, 201, 1.0, nt).unwrap();
            let c = StochasticConvolver::new(&g, ConvolutionMethod::Auto);
            let exact = grid_isometry_value(&sigma, 1.0, nt, &c);
            let oracle = (1.0 / PI).sqrt();
            let rel = exact / oracle - 1.0;
            let predicted = -1.4604 / (2.0 * (nt as f64).sqrt());
            assert!(rel < 0.0 && rel.abs() < prev);
            assert!((rel - predicted).abs() < 0.3 * predicted.abs(), "nt {nt}: {rel} vs {predicted}");
            prev = rel.abs();
        }
    }

    #[test]
    fn monte_carlo_matches_grid_expectation() {
        let g = GridSpec::new(5.0, 51, 0.5, 20).unwrap();
        let r = ito_isometry_check(
            SigmaProfile::Indicator { value: 1.0, radius: 1.0 },
            1.0,
            0.5,
            &g,
            &McParams::new(400, 3),
            1e-9,
        )
        .unwrap();
        assert!((r.mean - r.grid_expectation).abs() <= 3.0 * r.std_err, "{r:?}");
    }

    #[test]
    fn time_must_be_on_grid() {
        let g = GridSpec::new(5.0, 51, 1.0, 20).unwrap();
        assert!(time_index(&g, 0.51).is_err());
        assert_eq!(time_index(&g, 0.5).unwrap(), 10);
        assert!(time_index(&g, 0.0).is_err());
    }
}
