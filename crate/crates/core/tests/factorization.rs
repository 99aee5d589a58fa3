//! Factorized against direct stochastic convolution on shared noise.

use tcilab::convolution::{ConvolutionMethod, FactorizationParams, FactorizedConvolver, StochasticConvolver};
use tcilab::estimators::SigmaProfile;
use tcilab::noise::{sample_noise_path, NoisePath};
use tcilab::GridSpec;

/// Sup gap on `|x| <= L/2`, relative to the direct field there.
fn interior_gap(grid: &GridSpec, noise: &NoisePath) -> f64 {
    let sigma = SigmaProfile::Constant { value: 1.0 }.path(grid);
    let direct = StochasticConvolver::new(grid, ConvolutionMethod::Auto)
        .convolve(&sigma, noise)
        .unwrap();
    let params = FactorizationParams::new(0.1).unwrap();
    let fact = FactorizedConvolver::new(grid, params, ConvolutionMethod::Auto)
        .unwrap()
        .convolve(&sigma, noise)
        .unwrap()
        .field;
    let (mut gap, mut size) = (0.0f64, 0.0f64);
    for ((n, i), &d) in direct.values.indexed_iter() {
        if grid.x(i).abs() <= grid.half_width / 2.0 {
            gap = gap.max((d - fact.values[[n, i]]).abs());
            size = size.max(d.abs());
        }
    }
    gap / size
}

#[test]
fn interior_gap_shrinks_under_refinement() {
    let coarse = GridSpec::new(6.0, 121, 1.0, 100).unwrap();
    let fine = coarse.refine(3, 9).unwrap();
    let (mut gc, mut gf) = (0.0, 0.0);
    for r in 0..2 {
        let noise = sample_noise_path(&fine, 11, r);
        gf += interior_gap(&fine, &noise);
        gc += interior_gap(&coarse, &noise.coarse_grain(&coarse).unwrap());
    }
    println!("gap coarse {:.4e} fine {:.4e} ratio {:.3}", gc / 2.0, gf / 2.0, gf / gc);
    assert!(gf / gc < 0.75);
}
