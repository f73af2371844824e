//! Replicated estimation on simulated samples and RMSE aggregation.
//!
//! Each replication yields squared errors; a cell's RMSE is the square root of
//! their mean across replications. Coefficient and transition-matrix errors are
//! first averaged over their components within a replication.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, outcome_quantile, treatment_quantile, McDesign};
use super::{outcome_intercept, outcome_slope, treatment_intercept, treatment_slope};
use crate::error::{Error, Result};
use crate::mobility::{counterfactual_cdf, simulate_panel, transition_matrix, SimulatedPanel, TransitionMatrix};
use crate::model::{Dataset, Design, FittedModel, TauGrid};
use crate::numeric::quadrature;
use crate::pipeline::{fit_model, PipelineConfig};
use crate::qr::{fit_process, QuantileCurve};
use crate::rng::{child_seed, stream};

/// Median of the uniform covariate, where the poverty line and conditioning
/// point are evaluated.
const COVARIATE_MEDIAN: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub pipeline: PipelineConfig,
    /// Knots at which outcome coefficients are scored.
    pub scored_knots: usize,
    pub cutoffs: Vec<f64>,
    /// Latent draws used to compute the true transition matrix.
    pub truth_draws: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            scored_knots: 10,
            cutoffs: vec![0.25, 0.5, 0.75],
            truth_draws: 2_000_000,
        }
    }
}

/// Population values of the scored functionals for one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignTruth {
    pub poverty_line: f64,
    pub conditioning_point: f64,
    pub poverty_rate: f64,
    pub transition: TransitionMatrix,
}

pub fn poverty_line() -> f64 {
    outcome_intercept(0.1) + outcome_slope(0.1) * COVARIATE_MEDIAN
}

pub fn conditioning_point() -> f64 {
    treatment_intercept(0.5) + treatment_slope(0.5) * COVARIATE_MEDIAN
}

/// Rank at which an increasing quantile function on `[0, 1]` reaches `value`.
fn invert_quantile(q: impl Fn(f64) -> f64, value: f64) -> f64 {
    if value <= q(0.0) {
        return 0.0;
    }
    if value >= q(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if q(mid) < value {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn design_truth(design: &McDesign, config: &StudyConfig, seed: u64) -> Result<DesignTruth> {
    let line = poverty_line();
    let t0 = conditioning_point();
    let poverty_rate = quadrature::integrate(
        |x| {
            let u = invert_quantile(|tau| outcome_quantile(tau, x), line);
            let v = invert_quantile(|tau| treatment_quantile(tau, x), t0);
            design.copula.conditional(u, v)
        },
        0.0,
        1.0,
        1e-10,
    );

    const CHUNKS: usize = 64;
    let per_chunk = config.truth_draws.div_ceil(CHUNKS);
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..CHUNKS as u64)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "mc-truth", &[c]);
            (0..per_chunk)
                .map(|_| {
                    let x: f64 = rng.random();
                    let (vy, vt) = design.copula.sample_pair(&mut rng);
                    (outcome_quantile(vy, x), treatment_quantile(vt, x))
                })
                .unzip()
        })
        .collect();
    let (mut ys, mut ts) = (Vec::new(), Vec::new());
    for (y, t) in chunks {
        ys.extend(y);
        ts.extend(t);
    }
    let transition = transition_matrix(&SimulatedPanel::from_pairs(ys, ts)?, &config.cutoffs)?;
    Ok(DesignTruth {
        poverty_line: line,
        conditioning_point: t0,
        poverty_rate,
        transition,
    })
}

/// Squared errors from one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationScores {
    pub qr_me: f64,
    pub qr_naive: f64,
    pub copula_me: f64,
    pub copula_naive: f64,
    pub tm_me: f64,
    pub tm_naive: f64,
    pub tm_observed: f64,
    pub poverty_me: f64,
    pub poverty_naive: f64,
    pub poverty_qr: f64,
}

/// Root mean squared errors for one design cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub qr_me: f64,
    pub qr_naive: f64,
    pub copula_me: f64,
    pub copula_naive: f64,
    pub tm_me: f64,
    pub tm_naive: f64,
    pub tm_observed: f64,
    pub poverty_me: f64,
    pub poverty_naive: f64,
    pub poverty_qr: f64,
}

impl RmseRow {
    pub const COLUMNS: [&'static str; 10] = [
        "qr_me",
        "qr_naive",
        "copula_me",
        "copula_naive",
        "tm_me",
        "tm_naive",
        "tm_observed",
        "poverty_me",
        "poverty_naive",
        "poverty_qr",
    ];

    pub fn values(&self) -> [f64; 10] {
        [
            self.qr_me,
            self.qr_naive,
            self.copula_me,
            self.copula_naive,
            self.tm_me,
            self.tm_naive,
            self.tm_observed,
            self.poverty_me,
            self.poverty_naive,
            self.poverty_qr,
        ]
    }
}

impl ReplicationScores {
    fn values(&self) -> [f64; 10] {
        [
            self.qr_me,
            self.qr_naive,
            self.copula_me,
            self.copula_naive,
            self.tm_me,
            self.tm_naive,
            self.tm_observed,
            self.poverty_me,
            self.poverty_naive,
            self.poverty_qr,
        ]
    }
}

/// Square root of the mean of each squared-error column.
pub fn aggregate(scores: &[ReplicationScores]) -> RmseRow {
    let r = scores.len() as f64;
    let mut sums = [0.0; 10];
    for s in scores {
        for (acc, v) in sums.iter_mut().zip(s.values()) {
            *acc += v;
        }
    }
    let m = sums.map(|v| (v / r).sqrt());
    RmseRow {
        qr_me: m[0],
        qr_naive: m[1],
        copula_me: m[2],
        copula_naive: m[3],
        tm_me: m[4],
        tm_naive: m[5],
        tm_observed: m[6],
        poverty_me: m[7],
        poverty_naive: m[8],
        poverty_qr: m[9],
    }
}

/// Mean squared error of the outcome coefficients over `knots` equally spaced
/// ranks spanning the grid.
pub fn coefficient_mse(model: &FittedModel, knots: usize) -> Result<f64> {
    let g = model.qp_y.grid();
    let scored = TauGrid::uniform(knots, g.first(), g.last())?;
    let mut sum = 0.0;
    for &tau in scored.knots() {
        let b = model.qp_y.interpolate_beta(tau);
        sum += (b[0] - outcome_intercept(tau)).powi(2) + (b[1] - outcome_slope(tau)).powi(2);
    }
    Ok(sum / (2 * knots) as f64)
}

fn matrix_mse(a: &TransitionMatrix, b: &TransitionMatrix) -> f64 {
    let (x, y) = (a.to_vec(), b.to_vec());
    x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64
}

/// Poverty rate from a quantile regression of the outcome on treatment and
/// covariates, inverted at the conditioning point and averaged over rows.
pub fn quantile_regression_poverty(data: &Dataset, config: &PipelineConfig, line: f64, t0: f64) -> Result<f64> {
    let xs: Vec<f64> = (0..data.len()).map(|i| data.x.row(i)[1]).collect();
    let design = Design::with_intercept(&[&data.t, &xs])?;
    let qp = fit_process(&data.y, &design, &config.em.qr)?;
    let total: f64 = xs.iter().map(|&x| QuantileCurve::new(&qp, &[1.0, t0, x]).cdf(line)).sum();
    Ok(total / data.len() as f64)
}

struct ModelScores {
    qr: f64,
    copula: f64,
    tm: f64,
    poverty: f64,
}

fn score_model(
    model: &FittedModel,
    data: &Dataset,
    design: &McDesign,
    truth: &DesignTruth,
    config: &StudyConfig,
    seed: u64,
) -> Result<ModelScores> {
    let panel = simulate_panel(model, data, config.pipeline.panel_draws, seed);
    Ok(ModelScores {
        qr: coefficient_mse(model, config.scored_knots)?,
        copula: (model.copula.parameter() - design.copula.parameter()).powi(2),
        tm: matrix_mse(&transition_matrix(&panel, &config.cutoffs)?, &truth.transition),
        poverty: (counterfactual_cdf(model, truth.poverty_line, truth.conditioning_point, data) - truth.poverty_rate)
            .powi(2),
    })
}

/// Fit both estimators on replication `replication` of `design` and score them.
pub fn score_replication(
    design: &McDesign,
    truth: &DesignTruth,
    config: &StudyConfig,
    seed: u64,
    replication: u64,
) -> Result<ReplicationScores> {
    let (data, _) = generate(design, seed, replication)?;
    let fit_seed = child_seed(seed, "mc-fit", replication);
    let pipeline = PipelineConfig {
        family: design.copula.family(),
        correct_measurement_error: true,
        ..config.pipeline.clone()
    };
    let me = fit_model(&data, &pipeline, fit_seed)?;
    let naive = fit_model(&data, &pipeline.naive(), fit_seed)?;
    let a = score_model(&me.model, &data, design, truth, config, fit_seed)?;
    let b = score_model(&naive.model, &data, design, truth, config, fit_seed)?;
    let observed = transition_matrix(&SimulatedPanel::from_pairs(data.y.clone(), data.t.clone())?, &config.cutoffs)?;
    let pov_qr = quantile_regression_poverty(&data, &pipeline, truth.poverty_line, truth.conditioning_point)?;
    Ok(ReplicationScores {
        qr_me: a.qr,
        qr_naive: b.qr,
        copula_me: a.copula,
        copula_naive: b.copula,
        tm_me: a.tm,
        tm_naive: b.tm,
        tm_observed: matrix_mse(&observed, &truth.transition),
        poverty_me: a.poverty,
        poverty_naive: b.poverty,
        poverty_qr: (pov_qr - truth.poverty_rate).powi(2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub design: McDesign,
    pub rmse: RmseRow,
    pub completed: usize,
    pub failed: usize,
    pub scores: Vec<ReplicationScores>,
}

/// Run every design cell. Cell `c` draws from seed `child_seed(seed, "mc-cell", c)`.
pub fn run_study(designs: &[McDesign], config: &StudyConfig, seed: u64) -> Result<Vec<CellResult>> {
    config.pipeline.validate()?;
    designs
        .iter()
        .enumerate()
        .map(|(c, design)| {
            design.validate()?;
            let cell_seed = child_seed(seed, "mc-cell", c as u64);
            let truth = design_truth(design, config, cell_seed)?;
            let outcomes: Vec<Result<ReplicationScores>> = (0..design.replications as u64)
                .into_par_iter()
                .map(|r| score_replication(design, &truth, config, cell_seed, r))
                .collect();
            let mut scores = Vec::new();
            let mut failed = 0;
            for (r, o) in outcomes.into_iter().enumerate() {
                match o {
                    Ok(s) => scores.push(s),
                    Err(e) => {
                        log::warn!("replication {r} of cell {c} failed: {e}");
                        failed += 1;
                    }
                }
            }
            if scores.is_empty() {
                return Err(Error::NonConvergence(format!("every replication of cell {c} failed")));
            }
            Ok(CellResult {
                design: design.clone(),
                rmse: aggregate(&scores),
                completed: scores.len(),
                failed,
                scores,
            })
        })
        .collect()
}

/// Fixed-width text table, one line per cell.
pub fn format_table(cells: &[CellResult]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10} {:>6} {:>6} {:>5}", "copula", "n", "sd", "reps");
    for c in RmseRow::COLUMNS {
        let _ = write!(out, " {c:>13}");
    }
    out.push('\n');
    for cell in cells {
        let d = &cell.design;
        let _ = write!(
            out,
            "{:<10} {:>6} {:>6} {:>5}",
            d.copula.family().name(),
            d.n,
            d.sigma,
            cell.completed
        );
        for v in cell.rmse.values() {
            let _ = write!(out, " {v:>13.3}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::CopulaSpec;

    fn scores(v: [f64; 10]) -> ReplicationScores {
        ReplicationScores {
            qr_me: v[0],
            qr_naive: v[1],
            copula_me: v[2],
            copula_naive: v[3],
            tm_me: v[4],
            tm_naive: v[5],
            tm_observed: v[6],
            poverty_me: v[7],
            poverty_naive: v[8],
            poverty_qr: v[9],
        }
    }

    #[test]
    fn aggregation_by_hand() {
        // replication 1: coefficient squared errors 0.01 and 0.03 over two
        // parameters average to 0.02; replication 2 averages to 0.06
        let a = scores([0.02, 0.5, 0.25, 1.0, 0.0, 4.0, 0.09, 0.01, 0.0, 2.0]);
        let b = scores([0.06, 0.3, 0.75, 0.0, 0.0, 0.0, 0.07, 0.03, 0.08, 0.0]);
        let row = aggregate(&[a, b]);
        assert_eq!(row.qr_me, 0.04f64.sqrt());
        assert_eq!(row.qr_naive, 0.4f64.sqrt());
        assert_eq!(row.copula_me, 0.5f64.sqrt());
        assert_eq!(row.copula_naive, 0.5f64.sqrt());
        assert_eq!(row.tm_me, 0.0);
        assert_eq!(row.tm_naive, 2.0f64.sqrt());
        assert_eq!(row.tm_observed, 0.08f64.sqrt());
        assert_eq!(row.poverty_me, 0.02f64.sqrt());
        assert_eq!(row.poverty_naive, 0.04f64.sqrt());
        assert_eq!(row.poverty_qr, 1.0);
    }

    #[test]
    fn exact_model_scores_zero_coefficient_error() {
        let g = TauGrid::default();
        let rows = g.knots().iter().map(|&t| vec![outcome_intercept(t), outcome_slope(t)]).collect();
        let qp = crate::model::QuantileProcess::new(g, rows).unwrap();
        let model = FittedModel {
            qp_y: qp.clone(),
            qp_t: qp,
            err_y: crate::model::GaussianMixture::point_mass(),
            err_t: crate::model::GaussianMixture::point_mass(),
            copula: CopulaSpec::independence(),
            diagnostics: crate::model::FitDiagnostics {
                seed: 0,
                outcome: None,
                treatment: None,
                smle_log_likelihood: 0.0,
                smle_flagged: vec![],
            },
        };
        // knots of the scored grid fall between fitted knots; only the
        // curvature of the intercept leaves a small interpolation error
        assert!(coefficient_mse(&model, 10).unwrap() < 1e-5);
        assert!(coefficient_mse(&model, 25).unwrap() < 1e-28);
    }

    #[test]
    fn independence_truth() {
        let design = McDesign {
            n: 100,
            copula: CopulaSpec::independence(),
            sigma: 0.5,
            replications: 1,
        };
        let config = StudyConfig {
            truth_draws: 400_000,
            ..StudyConfig::default()
        };
        let t = design_truth(&design, &config, 1).unwrap();
        // under independence the poverty rate is the outcome's marginal share
        // below the line, which is 0.1 at the covariate median and varies in x
        let direct = quadrature::integrate(|x| invert_quantile(|tau| outcome_quantile(tau, x), t.poverty_line), 0.0, 1.0, 1e-12);
        assert!((t.poverty_rate - direct).abs() < 1e-9);
        assert!((invert_quantile(|tau| outcome_quantile(tau, 0.5), t.poverty_line) - 0.1).abs() < 1e-12);
        // shared covariate makes latent outcome and treatment dependent, so
        // only check the matrix is a proper conditional distribution
        for c in 0..4 {
            let s: f64 = (0..4).map(|r| t.transition.cells[r][c]).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn inversion_of_quantile_functions() {
        assert_eq!(invert_quantile(|t| t, -1.0), 0.0);
        assert_eq!(invert_quantile(|t| t, 2.0), 1.0);
        assert!((invert_quantile(|t| t * t, 0.25) - 0.5).abs() < 1e-15);
    }
}
