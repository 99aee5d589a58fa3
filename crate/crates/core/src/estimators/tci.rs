//! Coupling estimates behind the transportation cost inequality.
//!
//! For each replica the shifted and unshifted solutions are driven by the
//! same noise, which is white under the tilted measure. With `d = u - v`:
//!
//! * `F(t) = E int |d(t)|^2 e^{-2 lambda |x|}` and `Y(T) = E sup_t` of the same,
//! * the sup family `E sup_{t,x} |d|^2 e^{-2 lambda |x|}`,
//! * `H = 1/2 E int int h^2` and `C = Y(T) / 2H`,
//! * `W_2^2 <= E sup_t rho(u, v)^2 <= sum_n 2^{-n} min(1, Y(T; 1/n))`.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::{per_replica, Estimate, McParams};
use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::metrics::WeightTable;
use crate::noise::{sample_noise_path, ShiftSpec};
use crate::solver::{CoefficientSpec, SpdeSolver};

/// Function space the initial data and distances are taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceFamily {
    #[default]
    L2Tem,
    CTem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TciParams {
    pub lambdas: Vec<f64>,
    pub n_max: usize,
    pub tail_tol: f64,
    pub family: SpaceFamily,
}

impl Default for TciParams {
    fn default() -> Self {
        TciParams {
            lambdas: vec![1.0, 0.5, 1.0 / 3.0, 0.25, 0.125],
            n_max: 8,
            tail_tol: 1e-6,
            family: SpaceFamily::L2Tem,
        }
    }
}

impl TciParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(invalid(format!("lambda list must be nonempty and positive, got {:?}", self.lambdas)));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max must be >= 1"));
        }
        if !(self.tail_tol > 0.0) {
            return Err(invalid(format!("tail_tol must be > 0, got {}", self.tail_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TciLambdaRow {
    pub lambda: f64,
    /// `E sup_t int |d|^2 e^{-2 lambda |x|}`.
    pub y_l2: Estimate,
    /// `E sup_{t,x} |d|^2 e^{-2 lambda |x|}`.
    pub y_sup: Estimate,
    pub c_l2: Option<Estimate>,
    pub c_sup: Option<Estimate>,
    /// `sup_t F(t)`; never above `y_l2.mean`.
    pub sup_f: f64,
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemChain {
    pub n_max: usize,
    pub series_tail: f64,
    /// `E sup_t rho(u(t), v(t))^2`.
    pub w2_bound_l2: Estimate,
    /// `sum_n 2^{-n} min(1, Y_l2(1/n))`.
    pub series_bound_l2: f64,
    pub w2_bound_sup: Estimate,
    pub series_bound_sup: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TciReport {
    pub family: SpaceFamily,
    pub shift: String,
    pub replicas: usize,
    pub seed: u64,
    pub entropy: Estimate,
    pub rows: Vec<TciLambdaRow>,
    pub times: Vec<f64>,
    /// `F(t)` per row of `rows`.
    pub f_curve: Vec<Vec<f64>>,
    /// `E sup_{s <= t}` of the weighted integral, per row; nondecreasing.
    pub y_curve: Vec<Vec<f64>>,
    pub tem: TemChain,
    pub max_distance: f64,
}

struct ReplicaStats {
    energy: f64,
    /// Per rate: weighted integral at each step.
    l2: Vec<Vec<f64>>,
    /// Per rate: sup over `(t, x)` of the squared weighted difference.
    sup: Vec<f64>,
    tail: Vec<f64>,
    tem_l2: f64,
    tem_sup: f64,
    max_abs: f64,
}

pub fn run_tci_experiment(
    u0: ArrayView1<f64>,
    spec: &CoefficientSpec,
    shift: &ShiftSpec,
    params: &TciParams,
    grid: &GridSpec,
    mc: &McParams,
) -> Result<TciReport> {
    params.validate()?;
    mc.validate()?;
    if spec.k_sigma.is_infinite() {
        return Err(invalid("the coupling needs a bounded diffusion coefficient"));
    }
    let solver = SpdeSolver::new(grid, spec)?;

    // user rates first, then the tempered series 1/n
    let mut rates = params.lambdas.clone();
    let series: Vec<usize> = (1..=params.n_max)
        .map(|n| {
            let l = 1.0 / n as f64;
            match rates.iter().position(|&r| (r - l).abs() < 1e-12) {
                Some(k) => k,
                None => {
                    rates.push(l);
                    rates.len() - 1
                }
            }
        })
        .collect();
    let tables: Vec<WeightTable> = rates.iter().map(|&l| WeightTable::new(grid, l)).collect();

    let stats = per_replica(mc.replicas, |r| {
        let noise = sample_noise_path(grid, mc.seed, r);
        let run = solver.solve_coupled(u0, shift, &noise)?;
        let energy = shift.energy(Some(&run.u))?;
        let d = run.u.difference(&run.v)?;
        let mut l2 = vec![vec![0.0; grid.nt + 1]; rates.len()];
        let mut sup = vec![0.0f64; rates.len()];
        let mut tail = vec![0.0f64; rates.len()];
        let (mut tem_l2, mut tem_sup) = (0.0f64, 0.0f64);
        for n in 0..=grid.nt {
            let row = d.row(n);
            let (mut rho, mut varrho) = (0.0, 0.0);
            for (k, t) in tables.iter().enumerate() {
                l2[k][n] = t.l2_sq(row);
                sup[k] = sup[k].max(t.sup(row).powi(2));
                tail[k] = tail[k].max(grid.tail_bound(row, t.lambda));
            }
            for (j, &k) in series.iter().enumerate() {
                let w = 0.5f64.powi(j as i32 + 1);
                rho += w * l2[k][n].sqrt().min(1.0);
                varrho += w * tables[k].sup(row).min(1.0);
            }
            tem_l2 = tem_l2.max(rho * rho);
            tem_sup = tem_sup.max(varrho * varrho);
        }
        Ok(ReplicaStats {
            energy,
            l2,
            sup,
            tail,
            tem_l2,
            tem_sup,
            max_abs: d.max_abs(),
        })
    })?;

    let reps = stats.len() as f64;
    let energies: Vec<f64> = stats.iter().map(|s| s.energy).collect();
    let halves: Vec<f64> = energies.iter().map(|e| 0.5 * e).collect();
    let entropy = mc.bootstrap.mean(&halves);
    let max_distance = stats.iter().map(|s| s.max_abs).fold(0.0, f64::max);
    if entropy.mean == 0.0 && max_distance > 0.0 {
        return Err(Error::CouplingIntegrity { distance: max_distance });
    }

    let mut rows = Vec::with_capacity(rates.len());
    let mut f_curve = Vec::with_capacity(rates.len());
    let mut y_curve = Vec::with_capacity(rates.len());
    for (k, &lambda) in rates.iter().enumerate() {
        let tail = stats.iter().map(|s| s.tail[k]).fold(0.0, f64::max);
        if tail > params.tail_tol {
            return Err(Error::TailGuard {
                tail,
                tol: params.tail_tol,
                context: format!("coupling difference at lambda = {lambda}"),
            });
        }
        let y_l2_samples: Vec<f64> = stats.iter().map(|s| s.l2[k].iter().copied().fold(0.0, f64::max)).collect();
        let y_sup_samples: Vec<f64> = stats.iter().map(|s| s.sup[k]).collect();
        let f: Vec<f64> = (0..=grid.nt).map(|n| stats.iter().map(|s| s.l2[k][n]).sum::<f64>() / reps).collect();
        let y: Vec<f64> = (0..=grid.nt)
            .map(|n| stats.iter().map(|s| s.l2[k][..=n].iter().copied().fold(0.0, f64::max)).sum::<f64>() / reps)
            .collect();
        let constant = |samples: &[f64]| {
            (entropy.mean > 0.0).then(|| mc.bootstrap.ratio(samples, &energies))
        };
        rows.push(TciLambdaRow {
            lambda,
            y_l2: mc.bootstrap.mean(&y_l2_samples),
            y_sup: mc.bootstrap.mean(&y_sup_samples),
            c_l2: constant(&y_l2_samples),
            c_sup: constant(&y_sup_samples),
            sup_f: f.iter().copied().fold(0.0, f64::max),
            tail,
        });
        f_curve.push(f);
        y_curve.push(y);
    }

    let series_bound = |pick: &dyn Fn(&TciLambdaRow) -> f64| -> f64 {
        series
            .iter()
            .enumerate()
            .map(|(j, &k)| 0.5f64.powi(j as i32 + 1) * pick(&rows[k]).min(1.0))
            .sum()
    };
    let series_bound_l2 = series_bound(&|r| r.y_l2.mean);
    let series_bound_sup = series_bound(&|r| r.y_sup.mean);
    let w2_bound_l2 = mc.bootstrap.mean(&stats.iter().map(|s| s.tem_l2).collect::<Vec<_>>());
    let w2_bound_sup = mc.bootstrap.mean(&stats.iter().map(|s| s.tem_sup).collect::<Vec<_>>());
    let slack = |b: f64| b + 1e-12 * b.abs();
    let holds = w2_bound_l2.mean <= slack(series_bound_l2) && w2_bound_sup.mean <= slack(series_bound_sup);

    rows.truncate(params.lambdas.len());
    f_curve.truncate(params.lambdas.len());
    y_curve.truncate(params.lambdas.len());
    Ok(TciReport {
        family: params.family,
        shift: shift.label.clone(),
        replicas: mc.replicas,
        seed: mc.seed,
        entropy,
        rows,
        times: (0..=grid.nt).map(|n| grid.t(n)).collect(),
        f_curve,
        y_curve,
        tem: TemChain {
            n_max: params.n_max,
            series_tail: 0.5f64.powi(params.n_max as i32),
            w2_bound_l2,
            series_bound_l2,
            w2_bound_sup,
            series_bound_sup,
            holds,
        },
        max_distance,
    })
}
