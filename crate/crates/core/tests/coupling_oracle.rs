//! Additive noise with a deterministic shift: `u - v` is the heat flow of the
//! shift, whatever the noise.

use tcilab::estimators::oracle::bump_coupling_field;
use tcilab::noise::{sample_noise_path, ShiftSpec};
use tcilab::solver::{CoefficientSpec, SpdeSolver};
use tcilab::GridSpec;

const K: f64 = 1.5;
const A: f64 = 0.4;
const W: f64 = 1.0;
const T1: f64 = 0.5;

/// Relative sup distance between `u - v` and the closed-form field.
fn scheme_error(grid: &GridSpec, seed: u64) -> f64 {
    let solver = SpdeSolver::new(grid, &CoefficientSpec::additive(K)).unwrap();
    let shift = ShiftSpec::gaussian_bump(grid, A, W, 0.0, T1).unwrap();
    let u0 = grid.field(|x| (-x * x).exp());
    let run = solver.solve_coupled(u0.view(), &shift, &sample_noise_path(grid, seed, 0)).unwrap();
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for n in 0..=grid.nt {
        for i in 0..grid.nx {
            let d = bump_coupling_field(K, A, W, 0.0, T1, grid.t(n), grid.x(i), 1e-11);
            err = err.max((run.u.values[[n, i]] - run.v.values[[n, i]] - d).abs());
            scale = scale.max(d.abs());
        }
    }
    err / scale
}

#[test]
fn difference_does_not_depend_on_noise() {
    let grid = GridSpec::new(10.0, 101, 1.0, 25).unwrap();
    assert!((scheme_error(&grid, 1) - scheme_error(&grid, 2)).abs() < 1e-12);
}

#[test]
fn scheme_error_shrinks_under_refinement() {
    let coarse = GridSpec::new(10.0, 201, 1.0, 100).unwrap();
    let fine = coarse.refine(3, 9).unwrap();
    let (ec, ef) = (scheme_error(&coarse, 7), scheme_error(&fine, 7));
    println!("delta coarse {ec:.4e} fine {ef:.4e} ratio {:.3}", ef / ec);
    assert!(ec < 0.05, "coarse error {ec}");
    assert!(ef < 0.5 * ec, "coarse {ec} fine {ef}");
}
