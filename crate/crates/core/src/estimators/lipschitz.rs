//! Lipschitz dependence on initial data in the tempered metrics: solutions
//! from `f` and `g` on common noise, `E sup_t rho(u^f, u^g) / rho(f, g)`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{per_replica, Estimate, McParams};
use crate::error::{invalid, Result};
use crate::grid::{check_row, GridSpec};
use crate::metrics::TemperedWeights;
use crate::noise::sample_noise_path;
use crate::solver::{CoefficientSpec, SpdeSolver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub index: usize,
    /// `rho(f, g)`.
    pub rho0: f64,
    /// `varrho(f, g)`.
    pub varrho0: f64,
    /// `E sup_t rho(u^f, u^g) / rho(f, g)`.
    pub ratio_l2: Estimate,
    /// `E sup_t (varrho + rho)(u^f, u^g) / (varrho + rho)(f, g)`.
    pub ratio_c: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub n_max: usize,
    pub replicas: usize,
    pub seed: u64,
    pub pairs: Vec<LipschitzPair>,
    /// Pairs left out, with the reason.
    pub skipped: Vec<(usize, String)>,
    pub max_ratio_l2: f64,
    pub max_ratio_c: f64,
}

pub fn run_lipschitz_experiment(
    pairs: &[(Array1<f64>, Array1<f64>)],
    spec: &CoefficientSpec,
    n_max: usize,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<LipschitzReport> {
    mc.validate()?;
    if n_max == 0 {
        return Err(invalid("n_max must be >= 1"));
    }
    let solver = SpdeSolver::new(grid, spec)?;
    let tem = TemperedWeights::new(grid, n_max);
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (index, (f, g)) in pairs.iter().enumerate() {
        check_row(f.view(), grid)?;
        check_row(g.view(), grid)?;
        let rho0 = tem.l2(f.view(), g.view());
        let varrho0 = tem.sup(f.view(), g.view());
        if rho0 == 0.0 {
            skipped.push((index, "rho(f, g) = 0".to_string()));
            continue;
        }
        let samples = per_replica(mc.replicas, |r| {
            let noise = sample_noise_path(grid, mc.seed, r);
            let uf = solver.solve(f.view(), None, &noise)?;
            let ug = solver.solve(g.view(), None, &noise)?;
            let (mut l2, mut c) = (0.0f64, 0.0f64);
            for n in 0..=grid.nt {
                let rho = tem.l2(uf.row(n), ug.row(n));
                l2 = l2.max(rho);
                c = c.max(rho + tem.sup(uf.row(n), ug.row(n)));
            }
            Ok((l2, c))
        })?;
        let scale = |e: Estimate, by: f64| Estimate {
            mean: e.mean / by,
            std_err: e.std_err / by,
            ci_low: e.ci_low / by,
            ci_high: e.ci_high / by,
        };
        let l2: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let c: Vec<f64> = samples.iter().map(|s| s.1).collect();
        out.push(LipschitzPair {
            index,
            rho0,
            varrho0,
            ratio_l2: scale(mc.bootstrap.mean(&l2), rho0),
            ratio_c: scale(mc.bootstrap.mean(&c), rho0 + varrho0),
        });
    }
    if out.is_empty() {
        return Err(invalid("every pair has rho(f, g) = 0"));
    }
    Ok(LipschitzReport {
        n_max,
        replicas: mc.replicas,
        seed: mc.seed,
        max_ratio_l2: out.iter().map(|p| p.ratio_l2.mean).fold(0.0, f64::max),
        max_ratio_c: out.iter().map(|p| p.ratio_c.mean).fold(0.0, f64::max),
        pairs: out,
        skipped,
    })
}
