//! Conditional distribution of a variable given covariates, read off a quantile
//! process. Fitted values are sorted across knots (monotone rearrangement) before
//! any inversion, so every evaluator sees a valid quantile function.

use crate::model::{QuantileProcess, TauGrid};

/// Largest density reported on a flat stretch of the quantile function.
pub const DENSITY_CAP: f64 = 1e12;

/// Rearranged quantile function `tau -> x'beta(tau)` for one covariate row.
#[derive(Debug, Clone)]
pub struct QuantileCurve<'a> {
    grid: &'a TauGrid,
    values: Vec<f64>,
}

impl<'a> QuantileCurve<'a> {
    pub fn new(qp: &'a QuantileProcess, x: &[f64]) -> Self {
        let mut values = qp.fitted_at_knots(x);
        values.sort_by(f64::total_cmp);
        Self { grid: qp.grid(), values }
    }

    /// Sorted fitted values at the knots.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Support of the interpolated quantile function.
    pub fn support(&self) -> (f64, f64) {
        (self.values[0], self.values[self.values.len() - 1])
    }

    pub fn quantile(&self, tau: f64) -> f64 {
        let (l, w) = self.grid.locate(tau);
        let lo = self.values[l];
        if w == 0.0 {
            return lo;
        }
        let hi = self.values[l + 1];
        if w == 1.0 {
            return hi;
        }
        lo + w * (hi - lo)
    }

    /// Segment `l` with `values[l] <= y < values[l + 1]`, if `y` is strictly
    /// inside the support (or at its lower end).
    fn segment(&self, y: f64) -> Option<usize> {
        let last = self.values.len() - 1;
        if !(y >= self.values[0]) || y >= self.values[last] {
            return None;
        }
        Some(self.values.partition_point(|&q| q <= y) - 1)
    }

    /// Measure of `{tau in (0,1) : Q(tau) <= y}`.
    pub fn cdf(&self, y: f64) -> f64 {
        let last = self.values.len() - 1;
        if y >= self.values[last] {
            return 1.0;
        }
        let Some(l) = self.segment(y) else {
            return 0.0;
        };
        let knots = self.grid.knots();
        let (q0, q1) = (self.values[l], self.values[l + 1]);
        let frac = (y - q0) / (q1 - q0);
        (knots[l] + frac * (knots[l + 1] - knots[l])).clamp(0.0, 1.0)
    }

    /// Reciprocal slope of the quantile function at `cdf(y)`; zero off the support.
    pub fn density(&self, y: f64) -> f64 {
        if y <= self.values[0] {
            return 0.0;
        }
        let Some(l) = self.segment(y) else {
            return 0.0;
        };
        let knots = self.grid.knots();
        let slope = (self.values[l + 1] - self.values[l]) / (knots[l + 1] - knots[l]);
        (1.0 / slope).min(DENSITY_CAP)
    }

    pub fn ln_density(&self, y: f64) -> f64 {
        let d = self.density(y);
        if d > 0.0 {
            d.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

pub fn conditional_cdf(qp: &QuantileProcess, y: f64, x: &[f64]) -> f64 {
    QuantileCurve::new(qp, x).cdf(y)
}

pub fn conditional_density(qp: &QuantileProcess, y: f64, x: &[f64]) -> f64 {
    QuantileCurve::new(qp, x).density(y)
}

pub fn conditional_quantile(qp: &QuantileProcess, tau: f64, x: &[f64]) -> f64 {
    QuantileCurve::new(qp, x).quantile(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_qp(a: f64, b: f64, grid: TauGrid) -> QuantileProcess {
        let rows = grid.knots().iter().map(|&t| vec![a + b * t]).collect();
        QuantileProcess::new(grid, rows).unwrap()
    }

    fn wide_grid() -> TauGrid {
        TauGrid::uniform(101, 0.0001, 0.9999).unwrap()
    }

    #[test]
    fn uniform_law() {
        let qp = linear_qp(0.0, 1.0, TauGrid::default());
        assert!((conditional_cdf(&qp, 0.3, &[1.0]) - 0.3).abs() < 1e-14);
        assert!((conditional_density(&qp, 0.3, &[1.0]) - 1.0).abs() < 1e-9);
        assert_eq!(conditional_cdf(&qp, -0.1, &[1.0]), 0.0);
        assert_eq!(conditional_cdf(&qp, 1.5, &[1.0]), 1.0);
        assert_eq!(conditional_density(&qp, 1.5, &[1.0]), 0.0);
    }

    #[test]
    fn linear_quantile_function() {
        let qp = linear_qp(2.0, 3.0, TauGrid::default());
        assert!((conditional_cdf(&qp, 3.5, &[1.0]) - 0.5).abs() < 1e-14);
        assert!((conditional_density(&qp, 3.2, &[1.0]) - 1.0 / 3.0).abs() < 1e-9);
        assert!((conditional_quantile(&qp, 0.5, &[1.0]) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn rearrangement_sorts_crossing_values() {
        let g = TauGrid::new(vec![0.2, 0.5, 0.8]).unwrap();
        let qp = QuantileProcess::new(g, vec![vec![0.0, 1.0], vec![0.0, 0.5], vec![0.0, 2.0]]).unwrap();
        let c = QuantileCurve::new(&qp, &[1.0, 1.0]);
        assert_eq!(c.values(), &[0.5, 1.0, 2.0]);
        assert!(c.cdf(0.75) > 0.2 && c.cdf(0.75) < 0.5);
    }

    #[test]
    fn cdf_inverts_quantile_at_knots() {
        let qp = linear_qp(1.0, 2.0, TauGrid::default());
        for &t in qp.grid().knots().iter().take(24) {
            let q = conditional_quantile(&qp, t, &[1.0]);
            assert!((conditional_cdf(&qp, q, &[1.0]) - t).abs() < 1e-12);
        }
    }

    fn curved_qp() -> QuantileProcess {
        let g = TauGrid::default();
        let rows = g
            .knots()
            .iter()
            .map(|&t| vec![1.0 + 3.0 * t - t * t, t.exp()])
            .collect();
        QuantileProcess::new(g, rows).unwrap()
    }

    #[test]
    fn quantile_matches_bisection_of_cdf() {
        let qp = curved_qp();
        let x = [1.0, 0.4];
        let c = QuantileCurve::new(&qp, &x);
        for i in 1..100 {
            let tau = 0.02 + 0.96 * i as f64 / 100.0;
            let (mut lo, mut hi) = c.support();
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if c.cdf(mid) >= tau {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            assert!((c.quantile(tau) - hi).abs() < 1e-8, "tau={tau}");
        }
    }

    #[test]
    fn density_matches_finite_difference_of_cdf() {
        let qp = curved_qp();
        let x = [1.0, 0.7];
        let c = QuantileCurve::new(&qp, &x);
        let (a, b) = c.support();
        let h = 1e-7;
        let mut checked = 0;
        for i in 1..=100 {
            let y = a + (b - a) * (i as f64 - 0.5) / 100.0;
            // skip points whose stencil straddles a knot value
            if c.values().iter().any(|&q| (q - y).abs() <= 2.0 * h) {
                continue;
            }
            let fd = (c.cdf(y + h) - c.cdf(y - h)) / (2.0 * h);
            assert!((fd - c.density(y)).abs() < 1e-4, "y={y}");
            checked += 1;
        }
        assert!(checked >= 95);
    }

    #[test]
    fn cdf_monotone_and_right_continuous() {
        let qp = curved_qp();
        let c = QuantileCurve::new(&qp, &[1.0, 0.3]);
        let (a, b) = c.support();
        let mut prev = 0.0;
        for i in 0..=2000 {
            let y = a - 0.5 + (b - a + 1.0) * i as f64 / 2000.0;
            let f = c.cdf(y);
            assert!(f >= prev && (0.0..=1.0).contains(&f));
            prev = f;
        }
        for &q in c.values() {
            assert!((c.cdf(q + 1e-12) - c.cdf(q)).abs() < 1e-9);
        }
    }

    fn trapezoid(c: &QuantileCurve, points: usize) -> f64 {
        let (a, b) = c.support();
        let h = (b - a) / (points - 1) as f64;
        (0..points)
            .map(|i| {
                let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
                w * c.density(a + h * i as f64)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn density_mass_equals_grid_coverage() {
        let qp = curved_qp();
        let c = QuantileCurve::new(&qp, &[1.0, 0.5]);
        let mass = trapezoid(&c, 2000);
        assert!((mass - 0.96).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn density_integrates_to_one_on_full_grid() {
        let g = wide_grid();
        let rows = g.knots().iter().map(|&t| vec![crate::numeric::normal::inv_cdf(t)]).collect();
        let qp = QuantileProcess::new(g, rows).unwrap();
        let c = QuantileCurve::new(&qp, &[1.0]);
        let mass = trapezoid(&c, 2000);
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn flat_segment_is_capped() {
        let g = TauGrid::new(vec![0.2, 0.5, 0.8]).unwrap();
        let qp = QuantileProcess::new(g, vec![vec![0.0], vec![1.0], vec![1.0 + 1e-15]]).unwrap();
        let c = QuantileCurve::new(&qp, &[1.0]);
        assert_eq!(c.density(1.0), DENSITY_CAP);
    }
}
