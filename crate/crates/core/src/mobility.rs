//! Functionals of a fitted joint model: conditional and counterfactual outcome
//! distributions, poverty rates, and rank-based mobility measures computed from
//! a simulated panel of latent outcome/treatment pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaSpec;
use crate::error::{Error, Result};
use crate::model::{Dataset, FittedModel};
use crate::numeric::{quadrature, stats};
use crate::qr::QuantileCurve;
use crate::rng::stream;

/// Latent draws from the fitted model, `draws_per_row` per dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub y_star: Vec<f64>,
    pub t_star: Vec<f64>,
    /// Dataset row each draw belongs to.
    pub row: Vec<usize>,
    pub draws_per_row: usize,
}

impl SimulatedPanel {
    pub fn len(&self) -> usize {
        self.y_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_star.is_empty()
    }

    /// Panel built from given pairs, one draw per row.
    pub fn from_pairs(y_star: Vec<f64>, t_star: Vec<f64>) -> Result<Self> {
        if y_star.len() != t_star.len() {
            return Err(Error::InvalidDataset("panel columns differ in length".into()));
        }
        let row = (0..y_star.len()).collect();
        Ok(Self {
            y_star,
            t_star,
            row,
            draws_per_row: 1,
        })
    }

    /// Average ranks scaled to `(0, 1]`, outcome then treatment.
    pub fn ranks(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.len() as f64;
        let scale = |v: Vec<f64>| v.into_iter().map(|r| r / n).collect();
        (
            scale(stats::average_ranks(&self.y_star)),
            scale(stats::average_ranks(&self.t_star)),
        )
    }
}

/// Draw ranks from the fitted copula and map them through each row's
/// conditional quantile functions.
pub fn simulate_panel(model: &FittedModel, data: &Dataset, draws: usize, seed: u64) -> SimulatedPanel {
    let per_row: Vec<Vec<(f64, f64)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, "panel", &[i as u64]);
            let x = data.x.row(i);
            let cy = QuantileCurve::new(&model.qp_y, x);
            let ct = QuantileCurve::new(&model.qp_t, x);
            (0..draws)
                .map(|_| {
                    let (vy, vt) = model.copula.sample_pair(&mut rng);
                    (cy.quantile(vy), ct.quantile(vt))
                })
                .collect()
        })
        .collect();
    let total = data.len() * draws;
    let mut panel = SimulatedPanel {
        y_star: Vec::with_capacity(total),
        t_star: Vec::with_capacity(total),
        row: Vec::with_capacity(total),
        draws_per_row: draws,
    };
    for (i, pairs) in per_row.into_iter().enumerate() {
        for (y, t) in pairs {
            panel.y_star.push(y);
            panel.t_star.push(t);
            panel.row.push(i);
        }
    }
    panel
}

/// Treatment rank at `t`, kept inside the estimated grid so the conditional
/// copula stays informative at the edges of the support.
fn treatment_rank(model: &FittedModel, t: f64, x: &[f64]) -> f64 {
    let ct = QuantileCurve::new(&model.qp_t, x);
    let v = ct.cdf(t);
    let grid = model.qp_t.grid();
    let clamped = grid.clamp(v);
    if clamped != v {
        log::warn!("treatment value {t} lies outside its conditional support; rank clamped to {clamped}");
    }
    clamped
}

/// `P(Y* <= y | T* = t, X = x) = C_2(F_Y(y|x), F_T(t|x))`.
pub fn conditional_outcome_cdf(model: &FittedModel, y: f64, t: f64, x: &[f64]) -> f64 {
    let u = QuantileCurve::new(&model.qp_y, x).cdf(y);
    model.copula.conditional(u, treatment_rank(model, t, x))
}

/// `Q_Y(C_2^{-1}(tau; F_T(t|x)) | x)`.
pub fn conditional_outcome_quantile(model: &FittedModel, tau: f64, t: f64, x: &[f64]) -> f64 {
    let v = treatment_rank(model, t, x);
    let u = model.copula.conditional_inverse(tau, v);
    QuantileCurve::new(&model.qp_y, x).quantile(u)
}

/// Conditional outcome CDF averaged over the dataset's covariate rows.
pub fn counterfactual_cdf(model: &FittedModel, y: f64, t: f64, data: &Dataset) -> f64 {
    let vals: Vec<f64> = (0..data.len())
        .into_par_iter()
        .map(|i| conditional_outcome_cdf(model, y, t, data.x.row(i)))
        .collect();
    vals.iter().sum::<f64>() / data.len() as f64
}

/// Where the poverty rate conditions on covariates.
#[derive(Debug, Clone, Copy)]
pub enum CovariateScope<'a> {
    Row(&'a [f64]),
    Averaged(&'a Dataset),
}

/// Share of outcomes below `line` given treatment `t`.
pub fn poverty_rate(model: &FittedModel, line: f64, t: f64, scope: CovariateScope) -> f64 {
    match scope {
        CovariateScope::Row(x) => conditional_outcome_cdf(model, line, t, x),
        CovariateScope::Averaged(d) => counterfactual_cdf(model, line, t, d),
    }
}

/// Child-bin by parent-bin probabilities; `cells[r][c]` is the probability of
/// outcome bin `r` given treatment bin `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub cutoffs: Vec<f64>,
    pub cells: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn bins(&self) -> usize {
        self.cells.len()
    }

    /// Cells stacked column by column.
    pub fn to_vec(&self) -> Vec<f64> {
        let b = self.bins();
        (0..b).flat_map(|c| (0..b).map(move |r| (r, c))).map(|(r, c)| self.cells[r][c]).collect()
    }
}

fn bin_edges(cutoffs: &[f64]) -> Result<Vec<f64>> {
    if cutoffs.iter().any(|&c| !(c > 0.0 && c < 1.0)) || cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "transition cutoffs must be strictly increasing inside (0, 1)".into(),
        ));
    }
    let mut edges = vec![0.0];
    edges.extend_from_slice(cutoffs);
    edges.push(1.0);
    Ok(edges)
}

fn bin_of(rank: f64, edges: &[f64]) -> usize {
    // bins are (e_k, e_{k+1}], with the first one closed at zero
    let k = edges.partition_point(|&e| e < rank);
    k.saturating_sub(1).min(edges.len() - 2)
}

/// Transition matrix from the empirical copula of the panel's ranks. Each
/// column is normalized by the share of draws in its parent bin, so columns
/// sum to one exactly.
pub fn transition_matrix(panel: &SimulatedPanel, cutoffs: &[f64]) -> Result<TransitionMatrix> {
    if panel.is_empty() {
        return Err(Error::InvalidDataset("empty panel".into()));
    }
    let edges = bin_edges(cutoffs)?;
    let b = edges.len() - 1;
    let (ry, rt) = panel.ranks();
    let mut counts = vec![vec![0usize; b]; b];
    let mut parent = vec![0usize; b];
    for (&u, &v) in ry.iter().zip(&rt) {
        let (r, c) = (bin_of(u, &edges), bin_of(v, &edges));
        counts[r][c] += 1;
        parent[c] += 1;
    }
    if let Some(c) = parent.iter().position(|&p| p == 0) {
        return Err(Error::EmptyBin {
            lower: edges[c],
            upper: edges[c + 1],
        });
    }
    let cells = (0..b)
        .map(|r| (0..b).map(|c| counts[r][c] as f64 / parent[c] as f64).collect())
        .collect();
    Ok(TransitionMatrix {
        cutoffs: cutoffs.to_vec(),
        cells,
    })
}

/// Transition matrix implied directly by a copula of the two ranks.
pub fn transition_matrix_from_copula(spec: &CopulaSpec, cutoffs: &[f64]) -> Result<TransitionMatrix> {
    let edges = bin_edges(cutoffs)?;
    let b = edges.len() - 1;
    let cells = (0..b)
        .map(|r| {
            let (r1, r2) = (edges[r], edges[r + 1]);
            (0..b)
                .map(|c| {
                    let (s1, s2) = (edges[c], edges[c + 1]);
                    (spec.cdf(r2, s2) - spec.cdf(r1, s2) - spec.cdf(r2, s1) + spec.cdf(r1, s1)) / (s2 - s1)
                })
                .collect()
        })
        .collect();
    Ok(TransitionMatrix {
        cutoffs: cutoffs.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpwardMobility {
    /// Count over all draws divided by the nominal band width.
    pub band_normalized: f64,
    /// Share among draws whose treatment rank falls in the band.
    pub conditional: f64,
}

/// Probability that the outcome rank exceeds the treatment rank by more than
/// `gap`, for treatment ranks in `[s1, s2]`.
pub fn upward_mobility(panel: &SimulatedPanel, gap: f64, s1: f64, s2: f64) -> Result<UpwardMobility> {
    if !(0.0 <= s1 && s1 < s2 && s2 <= 1.0) {
        return Err(Error::InvalidConfig(format!("rank band [{s1}, {s2}] is not valid")));
    }
    if panel.is_empty() {
        return Err(Error::InvalidDataset("empty panel".into()));
    }
    let (ry, rt) = panel.ranks();
    let mut hits = 0usize;
    let mut in_band = 0usize;
    for (&u, &v) in ry.iter().zip(&rt) {
        if v >= s1 && v <= s2 {
            in_band += 1;
            if u > v + gap {
                hits += 1;
            }
        }
    }
    let n = panel.len() as f64;
    Ok(UpwardMobility {
        band_normalized: hits as f64 / n / (s2 - s1),
        conditional: if in_band == 0 { f64::NAN } else { hits as f64 / in_band as f64 },
    })
}

/// Rank correlation of the panel's outcome and treatment draws.
pub fn spearman_rho_panel(panel: &SimulatedPanel) -> Result<f64> {
    stats::spearman(&panel.y_star, &panel.t_star)
        .ok_or_else(|| Error::UndefinedCorrelation("a panel column is constant".into()))
}

/// `12 * int int C(u, v) du dv - 3` by tensor Gauss–Legendre quadrature.
pub fn spearman_rho_copula(spec: &CopulaSpec) -> f64 {
    let (x, w) = quadrature::gauss_legendre_unit(256);
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| (0..x.len()).map(|j| w[j] * spec.cdf(x[i], x[j])).sum::<f64>() * w[i])
        .collect();
    12.0 * rows.iter().sum::<f64>() - 3.0
}
