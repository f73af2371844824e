//! Empirical bootstrap: resample rows with replacement, re-run the estimator,
//! report replicate standard deviations and percentile intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::{
    conditional_outcome_quantile, counterfactual_cdf, simulate_panel, spearman_rho_panel, transition_matrix,
    upward_mobility,
};
use crate::model::Dataset;
use crate::numeric::stats;
use crate::pipeline::{fit_model, PipelineConfig, PipelineFit};
use crate::rng::{child_seed, stream};

/// Largest share of replicates that may fail before the bootstrap gives up.
pub const MAX_DROPPED_SHARE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    /// Two-sided level of the percentile interval.
    pub alpha: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 100,
            alpha: 0.05,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig("bootstrap needs at least two replicates".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("interval level {} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub name: String,
    pub estimate: f64,
    pub replicates: Vec<f64>,
    pub standard_error: f64,
    /// Percentile interval at the configured level.
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub results: Vec<BootstrapResult>,
    pub requested: usize,
    pub dropped: usize,
    pub alpha: f64,
}

impl BootstrapReport {
    pub fn effective(&self) -> usize {
        self.requested - self.dropped
    }

    pub fn get(&self, name: &str) -> Option<&BootstrapResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

/// Named scalar values produced by one run of an estimator.
pub type Estimates = Vec<(String, f64)>;

/// Row indices for replicate `r`.
pub fn resample_indices(n: usize, seed: u64, r: u64) -> Vec<usize> {
    let mut rng = stream(seed, "boot", &[r]);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap any estimator. `statistic` receives the (resampled) data and a
/// seed for its own randomness; the point estimate uses the original data and
/// `seed`. Replicates that fail or produce non-finite values are dropped.
pub fn bootstrap<F>(data: &Dataset, config: &BootstrapConfig, seed: u64, statistic: F) -> Result<BootstrapReport>
where
    F: Fn(&Dataset, u64) -> Result<Estimates> + Sync,
{
    config.validate()?;
    let point = statistic(data, seed)?;
    resample_around(data, config, seed, point, statistic)
}

fn resample_around<F>(
    data: &Dataset,
    config: &BootstrapConfig,
    seed: u64,
    point: Estimates,
    statistic: F,
) -> Result<BootstrapReport>
where
    F: Fn(&Dataset, u64) -> Result<Estimates> + Sync,
{
    config.validate()?;
    let b = config.replicates;
    let outcomes: Vec<Option<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let sample = data.resample(&resample_indices(data.len(), seed, r));
            match statistic(&sample, child_seed(seed, "boot", r)) {
                Ok(est) if est.len() == point.len() && est.iter().all(|(_, v)| v.is_finite()) => {
                    Some(est.into_iter().map(|(_, v)| v).collect())
                }
                Ok(_) => {
                    log::warn!("bootstrap replicate {r} produced non-finite or mismatched values; dropped");
                    None
                }
                Err(e) => {
                    log::warn!("bootstrap replicate {r} dropped: {e}");
                    None
                }
            }
        })
        .collect();
    let kept: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let dropped = b - kept.len();
    if dropped as f64 > MAX_DROPPED_SHARE * b as f64 || kept.len() < 2 {
        return Err(Error::TooManyDropped { dropped, total: b });
    }
    let results = point
        .into_iter()
        .enumerate()
        .map(|(j, (name, estimate))| {
            let replicates: Vec<f64> = kept.iter().map(|v| v[j]).collect();
            let mut sorted = replicates.clone();
            sorted.sort_by(f64::total_cmp);
            BootstrapResult {
                name,
                estimate,
                standard_error: stats::sample_sd(&replicates),
                interval: (
                    stats::quantile_sorted(&sorted, config.alpha / 2.0),
                    stats::quantile_sorted(&sorted, 1.0 - config.alpha / 2.0),
                ),
                replicates,
            }
        })
        .collect();
    Ok(BootstrapReport {
        results,
        requested: b,
        dropped,
        alpha: config.alpha,
    })
}

/// Quantities computed from a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    CopulaParameter,
    /// Rank-rank correlation of the simulated panel.
    SpearmanRho,
    TransitionMatrix { cutoffs: Vec<f64> },
    UpwardMobility { gap: f64, lower: f64, upper: f64 },
    /// Outcome CDF at `line` given treatment `treatment`, averaged over the covariates.
    PovertyRate { line: f64, treatment: f64 },
    /// Conditional outcome quantile at the covariate means.
    ConditionalQuantile { tau: f64, treatment: f64 },
}

impl Statistic {
    fn needs_panel(&self) -> bool {
        matches!(
            self,
            Statistic::SpearmanRho | Statistic::TransitionMatrix { .. } | Statistic::UpwardMobility { .. }
        )
    }
}

/// Evaluate `statistics` on a fitted pipeline. Panel-based statistics share one
/// simulated panel drawn with `seed`.
pub fn evaluate(fit: &PipelineFit, statistics: &[Statistic], panel_draws: usize, seed: u64) -> Result<Estimates> {
    let model = &fit.model;
    let panel = if statistics.iter().any(Statistic::needs_panel) {
        Some(simulate_panel(model, &fit.data, panel_draws, seed))
    } else {
        None
    };
    let panel = || panel.as_ref().expect("panel simulated for panel statistics");
    let mut out = Vec::new();
    for s in statistics {
        match s {
            Statistic::CopulaParameter => {
                out.push((format!("{}_parameter", model.copula.family()), model.copula.parameter()))
            }
            Statistic::SpearmanRho => out.push(("spearman_rho".into(), spearman_rho_panel(panel())?)),
            Statistic::TransitionMatrix { cutoffs } => {
                let tm = transition_matrix(panel(), cutoffs)?;
                for c in 0..tm.bins() {
                    for r in 0..tm.bins() {
                        out.push((format!("tm_{}_{}", r + 1, c + 1), tm.cells[r][c]));
                    }
                }
            }
            Statistic::UpwardMobility { gap, lower, upper } => {
                let um = upward_mobility(panel(), *gap, *lower, *upper)?;
                let tag = format!("{gap}_{lower}_{upper}");
                out.push((format!("upward_{tag}"), um.band_normalized));
                out.push((format!("upward_conditional_{tag}"), um.conditional));
            }
            Statistic::PovertyRate { line, treatment } => out.push((
                format!("poverty_{line}_{treatment}"),
                counterfactual_cdf(model, *line, *treatment, &fit.data),
            )),
            Statistic::ConditionalQuantile { tau, treatment } => {
                let x = fit.data.x.column_means();
                out.push((
                    format!("quantile_{tau}_{treatment}"),
                    conditional_outcome_quantile(model, *tau, *treatment, &x),
                ))
            }
        }
    }
    Ok(out)
}

/// Bootstrap the full pipeline: every replicate re-runs life-cycle rescaling,
/// both deconvolutions and the copula fit. Replicates whose deconvolution does
/// not converge are dropped.
pub fn bootstrap_pipeline(
    data: &Dataset,
    config: &PipelineConfig,
    statistics: &[Statistic],
    boot: &BootstrapConfig,
    seed: u64,
) -> Result<BootstrapReport> {
    let fit = fit_model(data, config, seed)?;
    if !fit.model.diagnostics.converged() {
        log::warn!("deconvolution on the full sample did not converge");
    }
    let point = evaluate(&fit, statistics, config.panel_draws, seed)?;
    resample_around(data, boot, seed, point, |sample, s| {
        let fit = fit_model(sample, config, s)?;
        if !fit.model.diagnostics.converged() {
            return Err(Error::NonConvergence(format!(
                "deconvolution stopped after {} iterations with change {:.4}",
                fit.model.diagnostics.iterations(),
                fit.model.diagnostics.final_change()
            )));
        }
        evaluate(&fit, statistics, config.panel_draws, s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Design;
    use crate::rng::seeded_rng;
    use rand_distr::{Distribution, Normal};

    fn normal_data(n: usize) -> Dataset {
        let mut rng = seeded_rng(11, "boot-test");
        let d = Normal::new(2.0, 3.0).unwrap();
        let y: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        Dataset::new(y.clone(), y, Design::intercept(n)).unwrap()
    }

    fn mean_of_y(d: &Dataset, _: u64) -> Result<Estimates> {
        Ok(vec![("mean".into(), stats::mean(&d.y))])
    }

    #[test]
    fn mean_standard_error_matches_closed_form() {
        let data = normal_data(400);
        let cfg = BootstrapConfig {
            replicates: 2000,
            alpha: 0.05,
        };
        let rep = bootstrap(&data, &cfg, 5, mean_of_y).unwrap();
        let r = rep.get("mean").unwrap();
        let analytic = stats::sample_sd(&data.y) / (data.len() as f64).sqrt();
        assert!((r.standard_error / analytic - 1.0).abs() < 0.1);
        assert!(r.interval.0 < r.estimate && r.estimate < r.interval.1);
        assert_eq!(rep.effective(), 2000);
    }

    #[test]
    fn identical_rows_give_zero_standard_error() {
        let data = Dataset::new(vec![3.0; 20], vec![1.0; 20], Design::intercept(20)).unwrap();
        let rep = bootstrap(&data, &BootstrapConfig::default(), 1, mean_of_y).unwrap();
        assert_eq!(rep.results[0].standard_error, 0.0);
        assert_eq!(rep.results[0].interval, (3.0, 3.0));
    }

    #[test]
    fn replicates_do_not_depend_on_thread_count() {
        let data = normal_data(50);
        let cfg = BootstrapConfig {
            replicates: 64,
            alpha: 0.1,
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bootstrap(&data, &cfg, 9, mean_of_y).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a, b);
        assert_ne!(a, bootstrap(&data, &cfg, 10, mean_of_y).unwrap());
    }

    #[test]
    fn failed_replicates_are_counted() {
        let data = normal_data(30);
        let cfg = BootstrapConfig {
            replicates: 100,
            alpha: 0.05,
        };
        // a statistic that fails on a fixed share of replicate seeds
        let flaky = |share: u64| {
            move |d: &Dataset, s: u64| -> Result<Estimates> {
                if s != 3 && s % 100 < share {
                    Err(Error::NonConvergence("test".into()))
                } else {
                    mean_of_y(d, s)
                }
            }
        };
        let rep = bootstrap(&data, &cfg, 3, flaky(10)).unwrap();
        assert!(rep.dropped > 0);
        assert_eq!(rep.effective() + rep.dropped, 100);
        assert_eq!(rep.results[0].replicates.len(), rep.effective());
        assert!(matches!(
            bootstrap(&data, &cfg, 3, flaky(60)),
            Err(Error::TooManyDropped { total: 100, .. })
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let data = normal_data(10);
        let one = BootstrapConfig {
            replicates: 1,
            alpha: 0.05,
        };
        assert!(bootstrap(&data, &one, 1, mean_of_y).is_err());
    }

    #[test]
    fn statistic_serde_round_trip() {
        let s = vec![
            Statistic::TransitionMatrix {
                cutoffs: vec![0.25, 0.5, 0.75],
            },
            Statistic::PovertyRate {
                line: 9.9,
                treatment: 10.5,
            },
        ];
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"kind\":\"transition_matrix\""));
        let back: Vec<Statistic> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
