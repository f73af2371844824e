//! Stochastic EM for a quantile process observed with additive error.
//!
//! Each outer iteration draws every observation's error from its posterior under
//! the current estimates, refits the quantile process on the completed
//! pseudo-observations `y_i - u_is` (weight `1/S` each) and refits the error
//! mixture on the draws.

mod mh;
mod mixture_em;

pub use mh::{error_posterior_logpdf, mh_chain, mh_sample_errors, MhChain, MhSettings};
pub use mixture_em::{mixture_em_update, MixtureEmTrace};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Design, GaussianMixture, QuantileProcess};
use crate::qr::{fit_process, fit_process_weighted, QrFitConfig, QuantileCurve};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// Error draws kept per observation.
    pub draws: usize,
    pub burn_in: usize,
    pub components: usize,
    /// Stopping threshold on the parameter change; `None` uses `(L(K-1) + 3m) / 40`.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    /// Initial random-walk scale; `None` starts at the current mixture's s.d.
    pub proposal_scale: Option<f64>,
    /// Number of trailing iterates averaged into the estimate.
    pub window: usize,
    pub qr: QrFitConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            draws: 100,
            burn_in: 200,
            components: 2,
            tolerance: None,
            max_iterations: 50,
            proposal_scale: None,
            window: 5,
            qr: QrFitConfig::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::InvalidConfig("need at least one error draw per observation".into()));
        }
        if self.components == 0 {
            return Err(Error::InvalidConfig("need at least one mixture component".into()));
        }
        if let Some(eps) = self.tolerance {
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig("EM tolerance must be positive".into()));
            }
        }
        if self.max_iterations == 0 || self.window == 0 {
            return Err(Error::InvalidConfig("iteration cap and window must be positive".into()));
        }
        self.qr.validate()
    }

    /// Threshold used for `k` covariates (intercept included).
    pub fn tolerance_for(&self, k: usize) -> f64 {
        self.tolerance.unwrap_or_else(|| {
            let l = self.qr.grid.len() as f64;
            (l * (k as f64 - 1.0) + 3.0 * self.components as f64) / 40.0
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Parameter-change norm at the last iteration.
    pub final_change: f64,
    pub tolerance: f64,
    /// Rows in each pooled quantile-regression step.
    pub pseudo_observations: usize,
    /// Mean acceptance rate over chains in the last iteration.
    pub acceptance_rate: f64,
    /// Chains in the last iteration that never moved.
    pub stuck_chains: usize,
    pub mixture_resets: usize,
    pub crossing_observed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmFit {
    pub process: QuantileProcess,
    pub mixture: GaussianMixture,
    pub diagnostics: EmDiagnostics,
}

fn change_norm(a: &QuantileProcess, b: &QuantileProcess, ma: &GaussianMixture, mb: &GaussianMixture) -> f64 {
    let beta: f64 = a
        .to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    let mix: f64 = ma
        .to_vec()
        .iter()
        .zip(mb.to_vec())
        .map(|(p, q)| (p - q) * (p - q))
        .sum();
    (beta + mix).sqrt()
}

fn average_processes(list: &[QuantileProcess]) -> Result<QuantileProcess> {
    let first = &list[0];
    let k = list.len() as f64;
    let rows = (0..first.grid().len())
        .map(|l| {
            (0..first.k())
                .map(|j| list.iter().map(|q| q.coefficients()[l][j]).sum::<f64>() / k)
                .collect()
        })
        .collect();
    QuantileProcess::new(first.grid().clone(), rows)
}

/// Initial error law: components at `-m..m`, each with the residual s.d. of the
/// naive median regression.
fn initial_mixture(values: &[f64], x: &Design, naive: &QuantileProcess, m: usize) -> Result<GaussianMixture> {
    let beta = naive.interpolate_beta(0.5);
    let resid: Vec<f64> = values
        .iter()
        .zip(x.iter_rows())
        .map(|(y, r)| y - r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let sd = crate::numeric::stats::sample_sd(&resid);
    GaussianMixture::initial(m, if sd > 0.0 { sd } else { 1.0 })
}

/// Estimate the quantile process and error law of one mismeasured variable.
///
/// Random draws come from streams keyed by `(seed, label)`, one per
/// observation and iteration, so results do not depend on thread scheduling.
pub fn stochastic_em_fit(values: &[f64], x: &Design, config: &EmConfig, seed: u64, label: &str) -> Result<EmFit> {
    config.validate()?;
    let n = values.len();
    if x.rows() != n {
        return Err(Error::InvalidDataset("values and design lengths differ".into()));
    }
    let s = config.draws;
    let m = config.components;
    let eps = config.tolerance_for(x.cols());

    let mut qp = fit_process(values, x, &config.qr)?;
    let mut mix = initial_mixture(values, x, &qp, m)?;

    let pooled_x = {
        let idx: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, s)).collect();
        x.select(&idx)
    };
    let weights = vec![1.0 / s as f64; n * s];
    let mh_label = format!("{label}/mh");

    let mut history: Vec<(QuantileProcess, GaussianMixture)> = Vec::new();
    let mut diag = EmDiagnostics {
        iterations: 0,
        converged: false,
        final_change: f64::INFINITY,
        tolerance: eps,
        pseudo_observations: 0,
        acceptance_rate: 0.0,
        stuck_chains: 0,
        mixture_resets: 0,
        crossing_observed: false,
    };

    for iter in 0..config.max_iterations {
        let scale = config.proposal_scale.unwrap_or_else(|| mix.sd());
        let settings = MhSettings {
            burn_in: config.burn_in,
            draws: s,
            initial_scale: scale,
        };
        let chains: Vec<MhChain> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, &mh_label, &[iter as u64, i as u64]);
                let curve = QuantileCurve::new(&qp, x.row(i));
                let y = values[i];
                mh_chain(
                    |u| mh::posterior_logpdf(u, y, &curve, &mix),
                    mh::chain_start(y, &curve),
                    settings,
                    &mut rng,
                )
            })
            .collect();
        diag.stuck_chains = chains.iter().filter(|c| c.acceptance_rate == 0.0).count();
        if diag.stuck_chains > 0 {
            log::warn!("{} chains rejected every proposal in iteration {}", diag.stuck_chains, iter + 1);
        }
        diag.acceptance_rate = chains.iter().map(|c| c.acceptance_rate).sum::<f64>() / n as f64;

        let draws: Vec<f64> = chains.iter().flat_map(|c| c.draws.iter().copied()).collect();
        let pseudo: Vec<f64> = draws
            .iter()
            .enumerate()
            .map(|(j, u)| values[j / s] - u)
            .collect();
        diag.pseudo_observations = pseudo.len();

        let next_qp = fit_process_weighted(&pseudo, &pooled_x, Some(&weights), &config.qr, Some(&qp))?;
        let (next_mix, trace) = mixture_em_update(&draws, m, &mix)?;
        diag.mixture_resets += trace.resets;

        let change = change_norm(&next_qp, &qp, &next_mix, &mix);
        log::debug!("{label}: iteration {} change {:.4}", iter + 1, change);
        qp = next_qp;
        mix = next_mix;
        history.push((qp.clone(), mix.clone()));
        diag.iterations = iter + 1;
        diag.final_change = change;
        if change < eps {
            diag.converged = true;
            break;
        }
    }
    if !diag.converged {
        log::warn!("{label}: stochastic EM stopped at the iteration cap without converging");
    }

    let tail = &history[history.len().saturating_sub(config.window)..];
    let processes: Vec<QuantileProcess> = tail.iter().map(|(q, _)| q.clone()).collect();
    let mixtures: Vec<GaussianMixture> = tail.iter().map(|(_, g)| g.clone()).collect();
    let mut process = average_processes(&processes)?;
    diag.crossing_observed = processes.iter().any(|q| q.crossing_observed);
    process.mark_crossing(diag.crossing_observed);
    Ok(EmFit {
        process,
        mixture: GaussianMixture::average(&mixtures)?,
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TauGrid;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn small_problem(seed: u64, n: usize, noise: f64) -> (Vec<f64>, Design) {
        let mut rng = seeded_rng(seed, "sem-test");
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y = xs
            .iter()
            .map(|&x| {
                let v: f64 = rng.random();
                let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                1.0 + v + x * (1.0 + v) + noise * e
            })
            .collect();
        (y, Design::with_intercept(&[&xs]).unwrap())
    }

    fn quick_config() -> EmConfig {
        EmConfig {
            draws: 10,
            burn_in: 50,
            max_iterations: 4,
            qr: QrFitConfig {
                grid: TauGrid::uniform(9, 0.1, 0.9).unwrap(),
                ..QrFitConfig::default()
            },
            ..EmConfig::default()
        }
    }

    #[test]
    fn default_tolerance_formula() {
        let c = EmConfig::default();
        assert!((c.tolerance_for(2) - (25.0 + 6.0) / 40.0).abs() < 1e-15);
    }

    #[test]
    fn infinite_tolerance_stops_after_one_iteration() {
        let (y, x) = small_problem(1, 200, 0.3);
        let cfg = EmConfig {
            tolerance: Some(f64::INFINITY),
            ..quick_config()
        };
        let fit = stochastic_em_fit(&y, &x, &cfg, 5, "y").unwrap();
        assert_eq!(fit.diagnostics.iterations, 1);
        assert!(fit.diagnostics.converged);
    }

    #[test]
    fn pooled_step_uses_n_times_s_rows() {
        let (y, x) = small_problem(2, 150, 0.3);
        let fit = stochastic_em_fit(&y, &x, &quick_config(), 5, "y").unwrap();
        assert_eq!(fit.diagnostics.pseudo_observations, 150 * 10);
    }

    #[test]
    fn mixture_stays_canonical_and_reruns_are_identical() {
        let (y, x) = small_problem(3, 150, 0.5);
        let cfg = EmConfig {
            tolerance: Some(1e-12),
            ..quick_config()
        };
        let a = stochastic_em_fit(&y, &x, &cfg, 9, "y").unwrap();
        let b = stochastic_em_fit(&y, &x, &cfg, 9, "y").unwrap();
        assert_eq!(a, b);
        assert!(!a.diagnostics.converged);
        assert_eq!(a.diagnostics.iterations, 4);
        assert!(a.mixture.mean().abs() < 1e-10);
        assert!((a.mixture.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let c = stochastic_em_fit(&y, &x, &cfg, 10, "y").unwrap();
        assert_ne!(a.process, c.process);
    }
}
