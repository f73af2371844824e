//! Linear quantile regression by minimizing a smoothed check loss.
//!
//! The check function `rho_tau(w) = (tau - 1{w < 0}) w` is replaced by its
//! Huberized version with bandwidth `h`: quadratic on `|w| <= h`, exact outside.
//! Newton steps on the smoothed objective are taken for a decreasing sequence of
//! bandwidths, then the solution is snapped to the nearest basic solution (the
//! `k` observations with the smallest residuals interpolated exactly), which is
//! kept when it does not increase the exact objective.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Design, TauGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrFitConfig {
    pub grid: TauGrid,
    /// Relative tolerance on the coefficient step.
    pub tolerance: f64,
    /// Cap on the total number of Newton steps per quantile level.
    pub max_iterations: usize,
}

impl Default for QrFitConfig {
    fn default() -> Self {
        Self {
            grid: TauGrid::default(),
            tolerance: 1e-10,
            max_iterations: 1000,
        }
    }
}

impl QrFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("solver tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Exact check-loss objective `sum_i w_i rho_tau(y_i - x_i'b)`.
pub fn check_objective(y: &[f64], x: &Design, tau: f64, weights: Option<&[f64]>, b: &[f64]) -> f64 {
    (0..y.len())
        .map(|i| {
            let r = y[i] - dot(x.row(i), b);
            let w = weights.map_or(1.0, |w| w[i]);
            w * if r < 0.0 { (tau - 1.0) * r } else { tau * r }
        })
        .sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

#[inline]
fn smoothed(r: f64, tau: f64, h: f64) -> f64 {
    if r > h {
        tau * r
    } else if r < -h {
        (tau - 1.0) * r
    } else {
        r * r / (4.0 * h) + (tau - 0.5) * r + h / 4.0
    }
}

#[inline]
fn smoothed_slope(r: f64, tau: f64, h: f64) -> f64 {
    if r > h {
        tau
    } else if r < -h {
        tau - 1.0
    } else {
        r / (2.0 * h) + tau - 0.5
    }
}

fn gram(x: &Design, weights: Option<&[f64]>) -> DMatrix<f64> {
    let k = x.cols();
    let mut g = DMatrix::zeros(k, k);
    for (i, row) in x.iter_rows().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for a in 0..k {
            for b in 0..=a {
                g[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[(b, a)] = g[(a, b)];
        }
    }
    g
}

fn check_rank(g: &DMatrix<f64>, rows: usize) -> Result<()> {
    let k = g.nrows();
    let singular = Error::SingularDesign { rows, cols: k };
    let scale = (0..k).map(|j| g[(j, j)]).fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return Err(singular);
    }
    // scale-free check on the correlation form of the Gram matrix
    let d: Vec<f64> = (0..k).map(|j| g[(j, j)].sqrt()).collect();
    if d.contains(&0.0) {
        return Err(singular);
    }
    let c = DMatrix::from_fn(k, k, |a, b| g[(a, b)] / (d[a] * d[b]));
    let eig = c.symmetric_eigenvalues();
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < 1e-12 {
        return Err(singular);
    }
    Ok(())
}

/// Minimizer of `sum_i w_i rho_tau(y_i - x_i'b)`.
///
/// `warm` seeds the iterations; `weights` default to one.
pub fn qr_fit(
    y: &[f64],
    x: &Design,
    tau: f64,
    weights: Option<&[f64]>,
    config: &QrFitConfig,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = y.len();
    let k = x.cols();
    if x.rows() != n {
        return Err(Error::InvalidDataset("outcome and design lengths differ".into()));
    }
    if let Some(w) = weights {
        if w.len() != n || w.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidDataset("weights must be non-negative, one per row".into()));
        }
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidConfig(format!("tau={tau} outside (0,1)")));
    }
    if n < k {
        return Err(Error::SingularDesign { rows: n, cols: k });
    }
    let g = gram(x, weights);
    check_rank(&g, n)?;

    let mut b: DVector<f64> = match warm {
        Some(w) if w.len() == k => DVector::from_column_slice(w),
        _ => {
            let mut xty = DVector::zeros(k);
            for (i, row) in x.iter_rows().enumerate() {
                let w = weights.map_or(1.0, |w| w[i]);
                for a in 0..k {
                    xty[a] += w * row[a] * y[i];
                }
            }
            g.clone()
                .cholesky()
                .ok_or(Error::SingularDesign { rows: n, cols: k })?
                .solve(&xty)
        }
    };

    let total_w: f64 = weights.map_or(n as f64, |w| w.iter().sum());
    let mut resid = vec![0.0; n];
    let fill_resid = |b: &DVector<f64>, resid: &mut [f64]| {
        for (i, r) in resid.iter_mut().enumerate() {
            *r = y[i] - dot(x.row(i), b.as_slice());
        }
    };
    fill_resid(&b, &mut resid);
    let abs_scale = (0..n)
        .map(|i| weights.map_or(1.0, |w| w[i]) * resid[i].abs())
        .sum::<f64>()
        / total_w;
    let y_scale = y.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    let mut h = abs_scale.max(1e-8 * y_scale);
    let h_min = 1e-7 * (abs_scale + 1e-3 * y_scale);

    let objective_h = |resid: &[f64], h: f64| -> f64 {
        (0..n)
            .map(|i| weights.map_or(1.0, |w| w[i]) * smoothed(resid[i], tau, h))
            .sum()
    };

    let mut iterations = 0usize;
    let mut trial = vec![0.0; n];
    loop {
        for _ in 0..60 {
            iterations += 1;
            if iterations > config.max_iterations {
                return Err(Error::QrNonConvergence {
                    tau,
                    iterations,
                    best: b.as_slice().to_vec(),
                });
            }
            let mut grad = DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            for i in 0..n {
                let w = weights.map_or(1.0, |w| w[i]);
                if w == 0.0 {
                    continue;
                }
                let row = x.row(i);
                let s = w * smoothed_slope(resid[i], tau, h);
                for a in 0..k {
                    grad[a] -= s * row[a];
                }
                if resid[i].abs() <= h {
                    let c = w / (2.0 * h);
                    for a in 0..k {
                        for bb in 0..=a {
                            hess[(a, bb)] += c * row[a] * row[bb];
                        }
                    }
                }
            }
            for a in 0..k {
                for bb in 0..a {
                    hess[(bb, a)] = hess[(a, bb)];
                }
            }
            hess += &g * (1e-6 / (2.0 * h));
            let step = match hess.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => -&grad * (2.0 * h / total_w),
            };

            let f0 = objective_h(&resid, h);
            let slope = grad.dot(&step);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = &b + &step * alpha;
                fill_resid(&cand, &mut trial);
                let f1 = objective_h(&trial, h);
                if f1 <= f0 + 1e-4 * alpha * slope.min(0.0) {
                    b = cand;
                    std::mem::swap(&mut resid, &mut trial);
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            let moved = (&step * alpha).norm();
            if !accepted || moved <= config.tolerance * (1.0 + b.norm()) {
                break;
            }
        }
        if h <= h_min {
            break;
        }
        h = (h * 0.1).max(h_min);
    }

    let best = polish(y, x, tau, weights, b.as_slice(), &resid);
    Ok(best)
}

/// Snap to the basic solution through the `k` best-fitting rows when that does not
/// worsen the exact objective.
fn polish(y: &[f64], x: &Design, tau: f64, weights: Option<&[f64]>, b: &[f64], resid: &[f64]) -> Vec<f64> {
    let k = x.cols();
    let n = y.len();
    let pool = (8 * k).min(n);
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| weights.is_none_or(|w| w[i] > 0.0))
        .collect();
    if order.len() < k {
        return b.to_vec();
    }
    if order.len() > pool {
        order.select_nth_unstable_by(pool - 1, |&p, &q| resid[p].abs().total_cmp(&resid[q].abs()));
        order.truncate(pool);
    }
    order.sort_by(|&p, &q| resid[p].abs().total_cmp(&resid[q].abs()));

    // greedily pick linearly independent rows
    let mut basis: Vec<usize> = Vec::with_capacity(k);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &i in &order {
        let mut v = x.row(i).to_vec();
        for q in &ortho {
            let p = dot(&v, q);
            for (a, c) in v.iter_mut().zip(q) {
                *a -= p * c;
            }
        }
        let norm = dot(&v, &v).sqrt();
        let scale = dot(x.row(i), x.row(i)).sqrt();
        if norm > 1e-9 * scale.max(1e-300) {
            for a in &mut v {
                *a /= norm;
            }
            ortho.push(v);
            basis.push(i);
            if basis.len() == k {
                break;
            }
        }
    }
    if basis.len() < k {
        return b.to_vec();
    }
    let a = DMatrix::from_fn(k, k, |r, c| x.row(basis[r])[c]);
    let rhs = DVector::from_fn(k, |r, _| y[basis[r]]);
    let Some(candidate) = a.lu().solve(&rhs) else {
        return b.to_vec();
    };
    let current = check_objective(y, x, tau, weights, b);
    let snapped = check_objective(y, x, tau, weights, candidate.as_slice());
    if snapped <= current {
        candidate.as_slice().to_vec()
    } else {
        b.to_vec()
    }
}
