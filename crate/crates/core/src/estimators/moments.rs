//! Both sides of the `p`-th moment bounds for the stochastic convolution,
//! in the weighted `L^2` and weighted sup families.

use serde::{Deserialize, Serialize};

use super::{check_power, per_replica, Estimate, McParams, SigmaProfile};
use crate::convolution::{ConvolutionMethod, StochasticConvolver};
use crate::error::{invalid, Result};
use crate::grid::{FieldPath, GridSpec};
use crate::metrics::WeightTable;
use crate::noise::sample_noise_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFamily {
    WeightedL2,
    WeightedSup,
}

impl NormFamily {
    /// Orders above this get the direct bound; the rest the epsilon split.
    pub fn regime_threshold(self) -> f64 {
        match self {
            NormFamily::WeightedL2 => 8.0,
            NormFamily::WeightedSup => 10.0,
        }
    }
}

pub const EPSILONS: [f64; 3] = [0.5, 0.1, 0.01];

/// `lhs <= eps * sup_term + C_eps * rhs`, with the smallest `C_eps`
/// consistent with the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSplit {
    pub epsilon: f64,
    pub sup_term: f64,
    pub implied_constant: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub family: NormFamily,
    pub p: f64,
    pub lambda: f64,
    pub sigma: SigmaProfile,
    pub replicas: usize,
    pub seed: u64,
    /// `E sup_t ||conv(t)||^p`.
    pub lhs: Estimate,
    /// `int_0^T ||sigma(r)||^p dr` (deterministic sigma).
    pub rhs: f64,
    /// `lhs / rhs`; absent when both sides vanish.
    pub ratio: Option<Estimate>,
    pub null_case: bool,
    /// `sup_t ||sigma(t)||^p` in the same family.
    pub sigma_sup: f64,
    /// Present for orders at or below the regime threshold.
    pub epsilon_split: Vec<EpsilonSplit>,
    pub tail: f64,
}

/// Per-replica path functionals: `sup_t ||g(t)||_{L^2_lambda}`, the weighted
/// sup over `(t, x)`, and the truncation tail.
fn path_functionals(g: &FieldPath, weights: &WeightTable) -> (f64, f64, f64) {
    let grid = g.grid;
    let (mut l2, mut sup, mut tail) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..=grid.nt {
        let row = g.row(n);
        l2 = l2.max(weights.l2_sq(row).sqrt());
        sup = sup.max(weights.sup(row));
        tail = tail.max(grid.tail_bound(row, weights.lambda));
    }
    (l2, sup, tail)
}

fn check_args(p: &[f64], lambda: f64) -> Result<()> {
    if let Some(&p) = p.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
        return Err(invalid(format!("moment order p must be > 0, got {p}")));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

/// Both sides of the bound at order `p` from per-replica suprema.
#[allow(clippy::too_many_arguments)]
fn build_report(
    family: NormFamily,
    sigma: SigmaProfile,
    p: f64,
    lambda: f64,
    grid: &GridSpec,
    mc: &McParams,
    suprema: &[f64],
    tail: f64,
) -> Result<MomentReport> {
    let weights = WeightTable::new(grid, lambda);
    let path = sigma.path(grid);
    let profile = path.row(0);
    let (sigma_norm, rhs) = match family {
        NormFamily::WeightedL2 => {
            let n = weights.l2_sq(profile).powf(p / 2.0);
            (n, grid.horizon * n)
        }
        NormFamily::WeightedSup => {
            let dx = grid.dx();
            let integral: f64 = (0..grid.nx)
                .map(|i| (profile[i].abs() * (-lambda * grid.x(i).abs()).exp()).powf(p) * dx)
                .sum();
            (weights.sup(profile).powf(p), grid.horizon * integral)
        }
    };
    let lhs_values: Vec<f64> = suprema.iter().map(|s| s.powf(p)).collect();
    let lhs = mc.bootstrap.mean(&lhs_values);
    check_power(lhs.std_err, lhs.mean)?;

    let null_case = rhs == 0.0 && lhs.mean == 0.0;
    let scale = |e: &Estimate, c: f64, sub: f64| Estimate {
        mean: (e.mean - sub).max(0.0) / c,
        std_err: e.std_err / c,
        ci_low: (e.ci_low - sub).max(0.0) / c,
        ci_high: (e.ci_high - sub).max(0.0) / c,
    };
    let ratio = (rhs > 0.0).then(|| scale(&lhs, rhs, 0.0));
    let epsilon_split = if p <= family.regime_threshold() && rhs > 0.0 {
        EPSILONS
            .iter()
            .map(|&eps| EpsilonSplit {
                epsilon: eps,
                sup_term: eps * sigma_norm,
                implied_constant: scale(&lhs, rhs, eps * sigma_norm),
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(MomentReport {
        family,
        p,
        lambda,
        sigma,
        replicas: mc.replicas,
        seed: mc.seed,
        lhs,
        rhs,
        ratio,
        null_case,
        sigma_sup: sigma_norm,
        epsilon_split,
        tail,
    })
}

/// One report per order, all from the same replicas.
pub fn estimate_moments(
    family: NormFamily,
    sigma: SigmaProfile,
    orders: &[f64],
    lambda: f64,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<Vec<MomentReport>> {
    mc.validate()?;
    check_args(orders, lambda)?;
    let weights = WeightTable::new(grid, lambda);
    let path = sigma.path(grid);
    let convolver = StochasticConvolver::new(grid, ConvolutionMethod::Auto);
    let samples = per_replica(mc.replicas, |r| {
        let g = convolver.convolve(&path, &sample_noise_path(grid, mc.seed, r))?;
        Ok(path_functionals(&g, &weights))
    })?;
    let suprema: Vec<f64> = samples
        .iter()
        .map(|s| match family {
            NormFamily::WeightedL2 => s.0,
            NormFamily::WeightedSup => s.1,
        })
        .collect();
    let tail = samples.iter().map(|s| s.2).fold(0.0, f64::max);
    orders
        .iter()
        .map(|&p| build_report(family, sigma, p, lambda, grid, mc, &suprema, tail))
        .collect()
}

fn estimate_moment(
    family: NormFamily,
    sigma: SigmaProfile,
    p: f64,
    lambda: f64,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<MomentReport> {
    Ok(estimate_moments(family, sigma, &[p], lambda, grid, mc)?.remove(0))
}

/// Reports on a grid and on a nested refinement, driven by the same
/// Brownian sheet: fine increments summed over coarse cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRefinement {
    pub coarse_grid: GridSpec,
    pub fine_grid: GridSpec,
    pub coarse: Vec<MomentReport>,
    pub fine: Vec<MomentReport>,
    /// `fine ratio / coarse ratio - 1`, per report.
    pub drift: Vec<Option<f64>>,
}

pub fn moment_refinement(
    sigma: SigmaProfile,
    lambda: f64,
    l2_orders: &[f64],
    sup_orders: &[f64],
    coarse: &GridSpec,
    fine: &GridSpec,
    mc: &McParams,
) -> Result<MomentRefinement> {
    mc.validate()?;
    check_args(l2_orders, lambda)?;
    check_args(sup_orders, lambda)?;
    if coarse.nesting(fine).is_none() {
        return Err(invalid(format!("grid {fine:?} does not nest inside {coarse:?}")));
    }
    let (cw, fw) = (WeightTable::new(coarse, lambda), WeightTable::new(fine, lambda));
    let (cp, fp) = (sigma.path(coarse), sigma.path(fine));
    let cc = StochasticConvolver::new(coarse, ConvolutionMethod::Auto);
    let fc = StochasticConvolver::new(fine, ConvolutionMethod::Auto);
    let samples = per_replica(mc.replicas, |r| {
        let noise = sample_noise_path(fine, mc.seed, r);
        let f = path_functionals(&fc.convolve(&fp, &noise)?, &fw);
        let c = path_functionals(&cc.convolve(&cp, &noise.coarse_grain(coarse)?)?, &cw);
        Ok((c, f))
    })?;
    let reports = |grid: &GridSpec, pick: &dyn Fn(&((f64, f64, f64), (f64, f64, f64))) -> (f64, f64, f64)| {
        let vals: Vec<(f64, f64, f64)> = samples.iter().map(pick).collect();
        let tail = vals.iter().map(|v| v.2).fold(0.0, f64::max);
        let l2: Vec<f64> = vals.iter().map(|v| v.0).collect();
        let sup: Vec<f64> = vals.iter().map(|v| v.1).collect();
        let mut out = Vec::new();
        for &p in l2_orders {
            out.push(build_report(NormFamily::WeightedL2, sigma, p, lambda, grid, mc, &l2, tail)?);
        }
        for &p in sup_orders {
            out.push(build_report(NormFamily::WeightedSup, sigma, p, lambda, grid, mc, &sup, tail)?);
        }
        Ok::<_, crate::Error>(out)
    };
    let coarse_reports = reports(coarse, &|s| s.0)?;
    let fine_reports = reports(fine, &|s| s.1)?;
    let drift = coarse_reports
        .iter()
        .zip(&fine_reports)
        .map(|(c, f)| match (c.ratio, f.ratio) {
            (Some(c), Some(f)) if c.mean > 0.0 => Some(f.mean / c.mean - 1.0),
            _ => None,
        })
        .collect();
    Ok(MomentRefinement {
        coarse_grid: *coarse,
        fine_grid: *fine,
        coarse: coarse_reports,
        fine: fine_reports,
        drift,
    })
}

/// `E sup_t ||conv(t)||^p_{L^2_lambda}` against `int_0^T ||sigma||^p_{L^2_lambda}`.
pub fn estimate_moment_l2(
    sigma: SigmaProfile,
    p: f64,
    lambda: f64,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<MomentReport> {
    estimate_moment(NormFamily::WeightedL2, sigma, p, lambda, grid, mc)
}

/// `E sup_{t,x} (|conv| e^{-lambda |x|})^p` against
/// `int_0^T int |sigma|^p e^{-p lambda |x|}`.
pub fn estimate_moment_sup(
    sigma: SigmaProfile,
    p: f64,
    lambda: f64,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<MomentReport> {
    estimate_moment(NormFamily::WeightedSup, sigma, p, lambda, grid, mc)
}
