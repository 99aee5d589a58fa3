//! Deterministic quadrature values the Monte Carlo estimators are compared to.

use std::f64::consts::PI;

use quadrature::integrate;

use crate::heatkernel::normal_mass;

/// `int_a^b f`, split at the given interior points.
pub fn integrate_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], tol: f64) -> f64 {
    let mut pts: Vec<f64> = std::iter::once(a)
        .chain(breaks.iter().copied().filter(|&p| p > a && p < b))
        .chain(std::iter::once(b))
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.windows(2).map(|w| integrate(&f, w[0], w[1], tol).integral).sum()
}

/// `int_{-L}^{L} p_s(x, y) e^{-2 lambda |x|} dx` in closed form.
pub fn weighted_kernel_mass(s: f64, y: f64, lambda: f64, half_width: f64) -> f64 {
    if s <= 0.0 {
        return if y.abs() <= half_width { (-2.0 * lambda * y.abs()).exp() } else { 0.0 };
    }
    let r = s.sqrt();
    let shift = 2.0 * lambda * s;
    let right = {
        let m = y - shift;
        (2.0 * lambda * lambda * s - 2.0 * lambda * y).exp() * normal_mass(-m / r, (half_width - m) / r)
    };
    let left = {
        let m = y + shift;
        (2.0 * lambda * lambda * s + 2.0 * lambda * y).exp() * normal_mass((-half_width - m) / r, -m / r)
    };
    right + left
}

/// `int_0^t int int p_{t-s}(x, y)^2 sigma(y)^2 e^{-2 lambda |x|} dy dx ds` with
/// `x, y` restricted to `[-L, L]`.
///
/// Uses `p_r^2 = (4 pi r)^{-1/2} p_{r/2}` and `r = tau^2` to remove the
/// endpoint singularity. `breaks` lists discontinuities of `sigma`.
pub fn isometry_integral(
    sigma: impl Fn(f64) -> f64,
    breaks: &[f64],
    lambda: f64,
    t: f64,
    half_width: f64,
    tol: f64,
) -> f64 {
    let mut ybreaks = breaks.to_vec();
    ybreaks.push(0.0);
    let inner = |tau: f64| {
        let s = 0.5 * tau * tau;
        integrate_split(
            |y| {
                let v = sigma(y);
                v * v * weighted_kernel_mass(s, y, lambda, half_width)
            },
            -half_width,
            half_width,
            &ybreaks,
            tol,
        )
    };
    integrate(inner, 0.0, t.sqrt(), tol).integral / PI.sqrt()
}

/// `D(t, x) = K int_0^t P_{t-s} h(s, .)(x) ds` for the bump shift
/// `h = a exp(-x^2 / 2w^2) 1_{[t0, t1)}(s)` on the whole line.
pub fn bump_coupling_field(k: f64, amplitude: f64, width: f64, t0: f64, t1: f64, t: f64, x: f64, tol: f64) -> f64 {
    let hi = t.min(t1);
    if hi <= t0 {
        return 0.0;
    }
    let w2 = width * width;
    let f = |s: f64| {
        let v = w2 + t - s;
        width / v.sqrt() * (-x * x / (2.0 * v)).exp()
    };
    k * amplitude * integrate(f, t0, hi, tol).integral
}

/// `(max_t int_{-L}^{L} D^2 e^{-2 lambda |x|} dx, max_t D(t, 0)^2)` over the
/// given times, for the field of [`bump_coupling_field`]. `D` is even and
/// decreasing in `|x|`, so the weighted sup sits at the origin.
#[allow(clippy::too_many_arguments)]
pub fn bump_coupling_functionals(
    k: f64,
    amplitude: f64,
    width: f64,
    t0: f64,
    t1: f64,
    lambda: f64,
    times: &[f64],
    half_width: f64,
    tol: f64,
) -> (f64, f64) {
    let (mut y_l2, mut y_sup) = (0.0f64, 0.0f64);
    for &t in times {
        let d0 = bump_coupling_field(k, amplitude, width, t0, t1, t, 0.0, tol);
        if d0 == 0.0 {
            continue;
        }
        y_sup = y_sup.max(d0 * d0);
        // even integrand
        let integral = 2.0
            * integrate_split(
                |x| {
                    let d = bump_coupling_field(k, amplitude, width, t0, t1, t, x, tol);
                    d * d * (-2.0 * lambda * x).exp()
                },
                0.0,
                half_width,
                &[],
                tol,
            );
        y_l2 = y_l2.max(integral);
    }
    (y_l2, y_sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_mass_limits() {
        // whole line, s = 0: the weight itself
        assert_relative_eq!(weighted_kernel_mass(0.0, 0.7, 1.0, 10.0), (-1.4f64).exp());
        // lambda = 0 gives the Gaussian mass of [-L, L]
        assert_relative_eq!(weighted_kernel_mass(1.0, 0.0, 0.0, 1.0), 0.682689492137, max_relative = 1e-10);
        // direct quadrature
        let (s, y, l, half) = (0.3, 0.4, 0.7, 3.0);
        let direct = integrate_split(
            |x| (-(x - y) * (x - y) / (2.0 * s)).exp() / (2.0 * PI * s).sqrt() * (-2.0 * l * x.abs()).exp(),
            -half,
            half,
            &[0.0],
            1e-13,
        );
        assert_relative_eq!(weighted_kernel_mass(s, y, l, half), direct, max_relative = 1e-10);
    }

    #[test]
    fn constant_sigma_closed_form() {
        // sqrt(t / pi) / lambda on a domain wide enough to drop truncation
        for (lambda, t) in [(1.0, 1.0), (0.5, 0.3), (2.0, 2.0)] {
            let v = isometry_integral(|_| 1.0, &[], lambda, t, 60.0, 1e-11);
            assert_relative_eq!(v, (t / PI).sqrt() / lambda, max_relative = 1e-8);
        }
    }

    #[test]
    fn indicator_against_triple_integral() {
        // brute-force r-integral of the x-y double integral at a few points
        let (lambda, t, a, half) = (1.0, 0.5, 1.0, 6.0);
        let fast = isometry_integral(|y| if y.abs() <= a { 1.0 } else { 0.0 }, &[-a, a], lambda, t, half, 1e-11);
        let slow = integrate(
            |tau: f64| {
                let r = tau * tau;
                integrate_split(
                    |y| {
                        integrate_split(
                            |x| {
                                let p = (-(x - y) * (x - y) / (2.0 * r)).exp() / (2.0 * PI * r).sqrt();
                                p * p * (-2.0 * lambda * x.abs()).exp()
                            },
                            -half,
                            half,
                            &[0.0, y],
                            1e-11,
                        )
                    },
                    -a,
                    a,
                    &[0.0],
                    1e-10,
                ) * 2.0
                    * tau
            },
            0.0,
            t.sqrt(),
            1e-9,
        )
        .integral;
        assert_relative_eq!(fast, slow, max_relative = 1e-7);
    }

    #[test]
    fn bump_field_limits() {
        assert_eq!(bump_coupling_field(1.0, 1.0, 1.0, 0.5, 1.0, 0.4, 0.0, 1e-12), 0.0);
        // short window: approximately K a (t1 - t0) exp(-x^2 / 2w^2)
        let v = bump_coupling_field(2.0, 0.5, 1.0, 0.0, 1e-4, 1e-4, 0.3, 1e-12);
        assert_relative_eq!(v, 2.0 * 0.5 * 1e-4 * (-0.045f64).exp(), max_relative = 1e-4);
        // the heat flow of a Gaussian keeps its mass
        let mass = integrate_split(|x| bump_coupling_field(1.0, 1.0, 0.5, 0.0, 0.5, 1.0, x, 1e-12), -30.0, 30.0, &[0.0], 1e-10);
        assert_relative_eq!(mass, 0.5 * 0.5 * (2.0 * PI).sqrt(), max_relative = 1e-8);
    }

    #[test]
    fn bump_functional_unweighted_closed_form() {
        // lambda = 0, t0 = 0, t <= t1: int D^2 = K^2 a^2 w^2 sqrt(2 pi) int int (v1 + v2)^{-1/2}
        // over v in [w^2, w^2 + t]^2, which is (4/3)[(2B)^{3/2} - 2(A+B)^{3/2} + (2A)^{3/2}]
        let (k, a, w, t): (f64, f64, f64, f64) = (1.5, 0.4, 0.8, 0.6);
        let (lo, hi) = (w * w, w * w + t);
        let double = 4.0 / 3.0 * ((2.0 * hi).powf(1.5) - 2.0 * (lo + hi).powf(1.5) + (2.0 * lo).powf(1.5));
        let exact = k * k * a * a * w * w * (2.0 * PI).sqrt() * double;
        let (y_l2, y_sup) = bump_coupling_functionals(k, a, w, 0.0, 1.0, 0.0, &[0.2, t], 40.0, 1e-12);
        assert_relative_eq!(y_l2, exact, max_relative = 1e-8);
        // D(t, 0) = K a w int_0^t v^{-1/2} ds = 2 K a w (sqrt(w^2 + t) - w)
        assert_relative_eq!(y_sup, (2.0 * k * a * w * (hi.sqrt() - w)).powi(2), max_relative = 1e-10);
    }
}
