use serde::{Deserialize, Serialize};

use super::{GaussianMixture, QuantileProcess};
use crate::copula::CopulaSpec;
use crate::deconv::EmDiagnostics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub seed: u64,
    /// `None` when the variable was fitted without measurement-error correction.
    pub outcome: Option<EmDiagnostics>,
    pub treatment: Option<EmDiagnostics>,
    pub smle_log_likelihood: f64,
    /// Observations with zero simulated likelihood.
    pub smle_flagged: Vec<usize>,
}

impl FitDiagnostics {
    /// Outer iterations of the slower of the two deconvolution runs.
    pub fn iterations(&self) -> usize {
        [&self.outcome, &self.treatment]
            .into_iter()
            .flatten()
            .map(|d| d.iterations)
            .max()
            .unwrap_or(0)
    }

    pub fn final_change(&self) -> f64 {
        [&self.outcome, &self.treatment]
            .into_iter()
            .flatten()
            .map(|d| d.final_change)
            .fold(0.0, f64::max)
    }

    pub fn converged(&self) -> bool {
        [&self.outcome, &self.treatment]
            .into_iter()
            .flatten()
            .all(|d| d.converged)
    }
}

/// Everything the mobility functionals need: both reduced forms, both error
/// laws and the copula linking the latent ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub qp_y: QuantileProcess,
    pub qp_t: QuantileProcess,
    pub err_y: GaussianMixture,
    pub err_t: GaussianMixture,
    pub copula: CopulaSpec,
    pub diagnostics: FitDiagnostics,
}
