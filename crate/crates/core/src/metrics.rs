//! Exponentially weighted norms and the tempered metrics built from them.
//!
//! All spatial integrals use the midpoint rule on cell centers. The tempered
//! metrics sum `2^{-n} min{1, d_{1/n}}` for `n = 1..=N`; the dropped tail is
//! at most `2^{-N}` and is returned next to the value.

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{check_row, same_grid, FieldPath, GridSpec, WeightedMetricParams};

/// Precomputed weights `e^{-2 lambda |x_i|} dx` and `e^{-lambda |x_i|}` for one rate.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub lambda: f64,
    l2: Array1<f64>,
    sup: Array1<f64>,
}

impl WeightTable {
    pub fn new(grid: &GridSpec, lambda: f64) -> Self {
        let dx = grid.dx();
        let sup = grid.field(|x| (-lambda * x.abs()).exp());
        let l2 = sup.mapv(|w| w * w * dx);
        WeightTable { lambda, l2, sup }
    }

    /// `sum_i f_i^2 e^{-2 lambda |x_i|} dx`.
    pub fn l2_sq(&self, f: ArrayView1<f64>) -> f64 {
        Zip::from(&f).and(&self.l2).fold(0.0, |acc, &v, &w| acc + v * v * w)
    }

    /// `sum_i v_i e^{-2 lambda |x_i|} dx`, for densities already squared.
    pub fn weighted_sum(&self, v: &[f64]) -> f64 {
        v.iter().zip(&self.l2).map(|(a, w)| a * w).sum()
    }

    /// `max_i |f_i| e^{-lambda |x_i|}`.
    pub fn sup(&self, f: ArrayView1<f64>) -> f64 {
        Zip::from(&f).and(&self.sup).fold(0.0, |acc: f64, &v, &w| acc.max(v.abs() * w))
    }

    pub fn l2_sq_diff(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        Zip::from(&f)
            .and(&g)
            .and(&self.l2)
            .fold(0.0, |acc, &a, &b, &w| acc + (a - b) * (a - b) * w)
    }

    pub fn sup_diff(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        Zip::from(&f)
            .and(&g)
            .and(&self.sup)
            .fold(0.0, |acc: f64, &a, &b, &w| acc.max((a - b).abs() * w))
    }
}

/// Weight tables for the tempered series, `lambda = 1/n` for `n = 1..=N`.
#[derive(Debug, Clone)]
pub struct TemperedWeights {
    tables: Vec<WeightTable>,
}

impl TemperedWeights {
    pub fn new(grid: &GridSpec, n_max: usize) -> Self {
        TemperedWeights {
            tables: (1..=n_max).map(|n| WeightTable::new(grid, 1.0 / n as f64)).collect(),
        }
    }

    pub fn n_max(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[WeightTable] {
        &self.tables
    }

    pub fn l2(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        self.series(|w| w.l2_sq_diff(f, g).sqrt())
    }

    pub fn sup(&self, f: ArrayView1<f64>, g: ArrayView1<f64>) -> f64 {
        self.series(|w| w.sup_diff(f, g))
    }

    fn series(&self, d: impl Fn(&WeightTable) -> f64) -> f64 {
        let mut scale = 1.0;
        let mut acc = 0.0;
        for w in &self.tables {
            scale *= 0.5;
            acc += scale * d(w).min(1.0);
        }
        acc
    }
}

/// A tempered-metric value and the bound on the series terms it drops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemDistance {
    pub value: f64,
    pub series_tail: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be > 0, got {lambda}")))
    }
}

fn check_pair(f: ArrayView1<f64>, g: ArrayView1<f64>, grid: &GridSpec) -> Result<()> {
    check_row(f, grid)?;
    check_row(g, grid)
}

/// `(sum_i f(x_i)^2 e^{-2 lambda |x_i|} dx)^{1/2}`.
pub fn weighted_l2_norm(f: ArrayView1<f64>, lambda: f64, grid: &GridSpec) -> Result<f64> {
    check_lambda(lambda)?;
    check_row(f, grid)?;
    Ok(WeightTable::new(grid, lambda).l2_sq(f).sqrt())
}

/// `max_i |f(x_i) - g(x_i)| e^{-lambda |x_i|}`.
pub fn weighted_sup_metric(
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    lambda: f64,
    grid: &GridSpec,
) -> Result<f64> {
    check_lambda(lambda)?;
    check_pair(f, g, grid)?;
    Ok(WeightTable::new(grid, lambda).sup_diff(f, g))
}

pub fn tem_l2_metric(
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    params: &WeightedMetricParams,
    grid: &GridSpec,
) -> Result<TemDistance> {
    check_pair(f, g, grid)?;
    Ok(TemDistance {
        value: TemperedWeights::new(grid, params.n_max).l2(f, g),
        series_tail: params.series_tail(),
    })
}

pub fn tem_sup_metric(
    f: ArrayView1<f64>,
    g: ArrayView1<f64>,
    params: &WeightedMetricParams,
    grid: &GridSpec,
) -> Result<TemDistance> {
    check_pair(f, g, grid)?;
    Ok(TemDistance {
        value: TemperedWeights::new(grid, params.n_max).sup(f, g),
        series_tail: params.series_tail(),
    })
}

/// Spatial metric applied at each time level by [`path_sup_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialMetric {
    WeightedL2 { lambda: f64 },
    WeightedSup { lambda: f64 },
    TemL2 { n_max: usize },
    TemSup { n_max: usize },
}

impl SpatialMetric {
    fn evaluator(&self, grid: &GridSpec) -> Result<Box<dyn Fn(ArrayView1<f64>, ArrayView1<f64>) -> f64>> {
        Ok(match *self {
            SpatialMetric::WeightedL2 { lambda } => {
                check_lambda(lambda)?;
                let w = WeightTable::new(grid, lambda);
                Box::new(move |a, b| w.l2_sq_diff(a, b).sqrt())
            }
            SpatialMetric::WeightedSup { lambda } => {
                check_lambda(lambda)?;
                let w = WeightTable::new(grid, lambda);
                Box::new(move |a, b| w.sup_diff(a, b))
            }
            SpatialMetric::TemL2 { n_max } | SpatialMetric::TemSup { n_max } if n_max == 0 => {
                return Err(invalid("n_max must be >= 1"));
            }
            SpatialMetric::TemL2 { n_max } => {
                let w = TemperedWeights::new(grid, n_max);
                Box::new(move |a, b| w.l2(a, b))
            }
            SpatialMetric::TemSup { n_max } => {
                let w = TemperedWeights::new(grid, n_max);
                Box::new(move |a, b| w.sup(a, b))
            }
        })
    }
}

/// `max_n d(a(t_n), b(t_n))` for the chosen spatial metric `d`.
pub fn path_sup_distance(a: &FieldPath, b: &FieldPath, metric: SpatialMetric) -> Result<f64> {
    same_grid(&a.grid, &b.grid)?;
    a.check_finite()?;
    b.check_finite()?;
    let d = metric.evaluator(&a.grid)?;
    Ok(a.values
        .rows()
        .into_iter()
        .zip(b.values.rows())
        .fold(0.0, |m: f64, (ra, rb)| m.max(d(ra, rb))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn grid() -> GridSpec {
        GridSpec::new(10.0, 401, 1.0, 4).unwrap()
    }

    #[test]
    fn unit_field_has_unit_norm_at_rate_one() {
        let g = grid();
        let one = Array1::from_elem(g.nx, 1.0);
        let n = weighted_l2_norm(one.view(), 1.0, &g).unwrap();
        // midpoint rule with the kink on a cell center: O(dx^2) error
        assert_relative_eq!(n, 1.0, max_relative = 1e-3);
        let zero = Array1::zeros(g.nx);
        assert_eq!(weighted_l2_norm(zero.view(), 1.0, &g).unwrap(), 0.0);
    }

    #[test]
    fn weight_cancelling_field_integrates_to_domain_length() {
        let g = grid();
        let f = g.field(|x| x.abs().exp());
        let n = weighted_l2_norm(f.view(), 1.0, &g).unwrap();
        assert_relative_eq!(n, 20f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(n, 4.4721, epsilon = 1e-4);
    }

    #[test]
    fn non_finite_is_rejected() {
        let g = grid();
        let mut f = Array1::zeros(g.nx);
        f[3] = f64::INFINITY;
        assert!(weighted_l2_norm(f.view(), 1.0, &g).is_err());
        assert!(weighted_l2_norm(Array1::zeros(g.nx).view(), 0.0, &g).is_err());
    }

    #[test]
    fn sup_metric_examples() {
        let g = grid();
        let f = g.field(|x| x.sin());
        assert_eq!(weighted_sup_metric(f.view(), f.view(), 1.0, &g).unwrap(), 0.0);
        let shifted = f.mapv(|v| v + 0.3);
        for lambda in [0.1, 1.0, 3.0] {
            let d = weighted_sup_metric(shifted.view(), f.view(), lambda, &g).unwrap();
            assert_relative_eq!(d, 0.3, max_relative = 1e-12);
        }
        let zero = Array1::zeros(g.nx);
        let bump = g.field(|x| (x.abs() / 2.0).exp());
        // pointwise oracle: e^{|x|/2} e^{-|x|} peaks at x = 0
        let oracle = g.xs().iter().map(|x| (-x.abs() / 2.0).exp()).fold(0.0, f64::max);
        let d = weighted_sup_metric(bump.view(), zero.view(), 1.0, &g).unwrap();
        assert_eq!(d, oracle);
        assert_relative_eq!(d, 1.0);
        let short = Array1::zeros(3);
        assert!(weighted_sup_metric(short.view(), zero.view(), 1.0, &g).is_err());
    }

    #[test]
    fn tempered_metrics_saturate_on_large_differences() {
        let g = GridSpec::new(60.0, 1201, 1.0, 1).unwrap();
        let p = WeightedMetricParams::default();
        let one = Array1::from_elem(g.nx, 1.0);
        let zero = Array1::zeros(g.nx);
        let rho = tem_l2_metric(one.view(), zero.view(), &p, &g).unwrap();
        assert_relative_eq!(rho.value, 1.0 - 0.5f64.powi(8), max_relative = 1e-12);
        assert_eq!(rho.series_tail, 0.5f64.powi(8));
        let vrho = tem_sup_metric(one.view(), zero.view(), &p, &g).unwrap();
        assert_relative_eq!(vrho.value, 1.0 - 0.5f64.powi(8), max_relative = 1e-12);
        assert_eq!(tem_l2_metric(one.view(), one.view(), &p, &g).unwrap().value, 0.0);
        assert_eq!(tem_sup_metric(one.view(), one.view(), &p, &g).unwrap().value, 0.0);
    }

    #[test]
    fn tempered_metrics_match_per_term_oracle() {
        let g = grid();
        let p = WeightedMetricParams::new(1.0, 8).unwrap();
        let f = g.field(|x| 0.01 * (-x * x).exp() * (3.0 * x).cos());
        let zero = Array1::zeros(g.nx);
        let mut l2 = 0.0;
        let mut sup = 0.0;
        for n in 1..=8 {
            let lam = 1.0 / n as f64;
            let a = weighted_l2_norm(f.view(), lam, &g).unwrap();
            assert!(a < 1.0, "unclipped regime");
            l2 += 0.5f64.powi(n) * a;
            sup += 0.5f64.powi(n) * weighted_sup_metric(f.view(), zero.view(), lam, &g).unwrap().min(1.0);
        }
        assert_relative_eq!(tem_l2_metric(f.view(), zero.view(), &p, &g).unwrap().value, l2, max_relative = 1e-14);
        assert_relative_eq!(tem_sup_metric(f.view(), zero.view(), &p, &g).unwrap().value, sup, max_relative = 1e-14);
    }

    #[test]
    fn path_distance_examples() {
        let g = GridSpec::new(5.0, 51, 1.0, 10).unwrap();
        let a = FieldPath::from_fn(g, |t, x| t * x.cos());
        let m = SpatialMetric::WeightedL2 { lambda: 0.5 };
        assert_eq!(path_sup_distance(&a, &a, m).unwrap(), 0.0);

        let mut b = a.clone();
        b.values.row_mut(g.nt).mapv_inplace(|v| v + 0.7);
        let expected = weighted_l2_norm(Array1::from_elem(g.nx, 0.7).view(), 0.5, &g).unwrap();
        assert_relative_eq!(path_sup_distance(&a, &b, m).unwrap(), expected, max_relative = 1e-12);

        // growing difference: supremum sits at the final step, exhaustive scan agrees
        let c = FieldPath::from_fn(g, |t, x| t * x.cos() + t * t * (-x * x).exp());
        let scan = (0..=g.nt)
            .map(|n| weighted_sup_metric(a.row(n), c.row(n), 0.5, &g).unwrap())
            .fold(0.0, f64::max);
        let last = weighted_sup_metric(a.last(), c.last(), 0.5, &g).unwrap();
        let d = path_sup_distance(&a, &c, SpatialMetric::WeightedSup { lambda: 0.5 }).unwrap();
        assert_eq!(d, scan);
        assert_eq!(d, last);

        let other = FieldPath::zeros(GridSpec::new(5.0, 53, 1.0, 10).unwrap());
        assert!(path_sup_distance(&a, &other, m).is_err());
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let smooth = |x: f64| (-(x - 0.3) * (x - 0.3)).exp();
        let err = |nx: usize| {
            let g = GridSpec::new(8.0, nx, 1.0, 1).unwrap();
            let f = g.field(smooth);
            // weight kink sits at a cell center, exact reference on a much finer grid
            let fine = GridSpec::new(8.0, nx * 81, 1.0, 1).unwrap();
            let r = weighted_l2_norm(fine.field(smooth).view(), 0.5, &fine).unwrap();
            (weighted_l2_norm(f.view(), 0.5, &g).unwrap() - r).abs()
        };
        let (e1, e2) = (err(101), err(303));
        let order = (e1 / e2).ln() / 3f64.ln();
        assert!(order > 1.8, "observed order {order}");
    }

    fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in field_strategy(21), b in field_strategy(21), c in field_strategy(21), lam in 0.05f64..2.0) {
            let g = GridSpec::new(3.0, 21, 1.0, 1).unwrap();
            let p = WeightedMetricParams::new(lam, 6).unwrap();
            let (a, b, c) = (Array1::from(a), Array1::from(b), Array1::from(c));
            let l2 = |f: &Array1<f64>, h: &Array1<f64>| weighted_l2_norm((f - h).view(), lam, &g).unwrap();
            let sup = |f: &Array1<f64>, h: &Array1<f64>| weighted_sup_metric(f.view(), h.view(), lam, &g).unwrap();
            let rho = |f: &Array1<f64>, h: &Array1<f64>| tem_l2_metric(f.view(), h.view(), &p, &g).unwrap().value;
            let vrho = |f: &Array1<f64>, h: &Array1<f64>| tem_sup_metric(f.view(), h.view(), &p, &g).unwrap().value;
            let metrics: [&dyn Fn(&Array1<f64>, &Array1<f64>) -> f64; 4] = [&l2, &sup, &rho, &vrho];
            for d in metrics {
                prop_assert!(d(&a, &b) >= 0.0);
                prop_assert_eq!(d(&a, &a), 0.0);
                prop_assert!((d(&a, &b) - d(&b, &a)).abs() <= 1e-12 * (1.0 + d(&a, &b)));
                prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
                if a != b {
                    prop_assert!(d(&a, &b) > 0.0);
                }
            }
            prop_assert!(rho(&a, &b) <= 1.0 - p.series_tail() + 1e-15);
            prop_assert!(vrho(&a, &b) <= 1.0 - p.series_tail() + 1e-15);
        }

        #[test]
        fn l2_norm_nonincreasing_in_rate(a in field_strategy(21), l1 in 0.01f64..2.0, dl in 0.0f64..2.0) {
            let g = GridSpec::new(3.0, 21, 1.0, 1).unwrap();
            let a = Array1::from(a);
            prop_assert!(weighted_l2_norm(a.view(), l1 + dl, &g).unwrap() <= weighted_l2_norm(a.view(), l1, &g).unwrap());
        }

        #[test]
        fn tempered_metrics_nondecreasing_in_depth(a in field_strategy(21), n in 1usize..12) {
            let g = GridSpec::new(3.0, 21, 1.0, 1).unwrap();
            let a = Array1::from(a);
            let z = Array1::zeros(21);
            let lo = WeightedMetricParams::new(1.0, n).unwrap();
            let hi = WeightedMetricParams::new(1.0, n + 1).unwrap();
            prop_assert!(tem_l2_metric(a.view(), z.view(), &lo, &g).unwrap().value <= tem_l2_metric(a.view(), z.view(), &hi, &g).unwrap().value);
            prop_assert!(tem_sup_metric(a.view(), z.view(), &lo, &g).unwrap().value <= tem_sup_metric(a.view(), z.view(), &hi, &g).unwrap().value);
        }
    }
}
