//! Monte Carlo experiments that turn each inequality into an estimated
//! constant, with replica-parallel evaluation and bootstrap intervals.
//!
//! Replica `r` always uses noise stream `(seed, r)`; per-replica values are
//! collected in replica order before any reduction, so results do not depend
//! on the size of the thread pool.

pub mod isometry;
pub mod lipschitz;
pub mod moments;
pub mod oracle;
pub mod stats;
pub mod tci;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{FieldPath, GridSpec};

pub use isometry::{ito_isometry_check, IsometryReport};
pub use lipschitz::{run_lipschitz_experiment, LipschitzReport};
pub use moments::{estimate_moment_l2, estimate_moment_sup, estimate_moments, moment_refinement, MomentRefinement, MomentReport, NormFamily};
pub use stats::{BootstrapParams, Estimate};
pub use tci::{run_tci_experiment, SpaceFamily, TciReport};

/// Time-independent deterministic diffusion profile `sigma(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaProfile {
    Constant { value: f64 },
    /// `value` on `|y| <= radius`, zero outside.
    Indicator { value: f64, radius: f64 },
    Gaussian { amplitude: f64, width: f64 },
}

impl SigmaProfile {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            SigmaProfile::Constant { value } => value,
            SigmaProfile::Indicator { value, radius } => {
                if y.abs() <= radius {
                    value
                } else {
                    0.0
                }
            }
            SigmaProfile::Gaussian { amplitude, width } => amplitude * (-y * y / (2.0 * width * width)).exp(),
        }
    }

    pub fn breaks(&self) -> Vec<f64> {
        match *self {
            SigmaProfile::Indicator { radius, .. } => vec![-radius, radius],
            _ => Vec::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            SigmaProfile::Constant { value } | SigmaProfile::Indicator { value, .. } => value == 0.0,
            SigmaProfile::Gaussian { amplitude, .. } => amplitude == 0.0,
        }
    }

    /// The profile the grid actually integrates: noise cells are whole
    /// cells, so an indicator covers every cell whose center it contains.
    pub fn cellwise(&self, grid: &GridSpec) -> SigmaProfile {
        match *self {
            SigmaProfile::Indicator { value, radius } => {
                let cells = (0..grid.nx).filter(|&i| grid.x(i).abs() <= radius).count();
                SigmaProfile::Indicator {
                    value,
                    radius: cells as f64 * grid.dx() / 2.0,
                }
            }
            p => p,
        }
    }

    pub fn path(&self, grid: &GridSpec) -> FieldPath {
        FieldPath::from_fn(*grid, |_, x| self.eval(x))
    }
}

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub replicas: usize,
    pub seed: u64,
    pub bootstrap: BootstrapParams,
}

impl McParams {
    pub fn new(replicas: usize, seed: u64) -> Self {
        McParams {
            replicas,
            seed,
            bootstrap: BootstrapParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas < 2 {
            return Err(invalid(format!("need at least 2 replicas, got {}", self.replicas)));
        }
        self.bootstrap.validate()
    }
}

/// `f(r)` for every replica, in replica order.
pub(crate) fn per_replica<T: Send>(replicas: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..replicas as u64).into_par_iter().map(f).collect()
}

/// Standard error above this fraction of the reference value is rejected.
pub const UNDERPOWERED_FRACTION: f64 = 0.2;

pub(crate) fn check_power(std_err: f64, reference: f64) -> Result<()> {
    if reference > 0.0 && std_err > UNDERPOWERED_FRACTION * reference {
        return Err(crate::Error::Underpowered {
            std_err,
            reference,
            limit_pct: 100.0 * UNDERPOWERED_FRACTION,
        });
    }
    Ok(())
}
