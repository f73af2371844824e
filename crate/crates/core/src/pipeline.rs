//! End-to-end estimation: optional life-cycle rescaling, deconvolution of each
//! variable, then the copula fit.

use serde::{Deserialize, Serialize};

use crate::copula::{smle_fit, CopulaFamily, SmleConfig};
use crate::deconv::{stochastic_em_fit, EmConfig};
use crate::error::{Error, Result};
use crate::lifecycle::{estimate_lambdas, rescale, LifecycleProfile};
use crate::model::{Dataset, FitDiagnostics, FittedModel, GaussianMixture};
use crate::qr::fit_process;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleConfig {
    pub outcome_reference_age: Option<i64>,
    pub treatment_reference_age: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub em: EmConfig,
    pub smle: SmleConfig,
    pub family: CopulaFamily,
    pub lifecycle: Option<LifecycleConfig>,
    /// When false both variables are treated as error-free.
    pub correct_measurement_error: bool,
    /// Simulated draws per observation for panel-based functionals.
    pub panel_draws: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            smle: SmleConfig::default(),
            family: CopulaFamily::Clayton,
            lifecycle: None,
            correct_measurement_error: true,
            panel_draws: 100,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.em.validate()?;
        self.smle.validate()
    }

    /// Same settings with measurement error ignored.
    pub fn naive(&self) -> Self {
        Self {
            correct_measurement_error: false,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineFit {
    pub model: FittedModel,
    /// The data the model was fitted on, after any life-cycle rescaling.
    pub data: Dataset,
    pub outcome_profile: Option<LifecycleProfile>,
    pub treatment_profile: Option<LifecycleProfile>,
}

fn apply_lifecycle(
    values: &[f64],
    ages: Option<&Vec<i64>>,
    reference: Option<i64>,
    what: &str,
) -> Result<(Vec<f64>, Option<LifecycleProfile>)> {
    let Some(reference) = reference else {
        return Ok((values.to_vec(), None));
    };
    let ages = ages.ok_or_else(|| Error::Lifecycle(format!("{what} ages are required for rescaling")))?;
    let profile = estimate_lambdas(values, ages, reference)?;
    Ok((rescale(values, ages, &profile)?, Some(profile)))
}

/// Fit the full model on `data`.
pub fn fit_model(data: &Dataset, config: &PipelineConfig, seed: u64) -> Result<PipelineFit> {
    config.validate()?;
    data.validate()?;
    let mut data = data.clone();
    let (mut outcome_profile, mut treatment_profile) = (None, None);
    if let Some(lc) = &config.lifecycle {
        let (y, py) = apply_lifecycle(&data.y, data.age_y.as_ref(), lc.outcome_reference_age, "outcome")?;
        let (t, pt) = apply_lifecycle(&data.t, data.age_t.as_ref(), lc.treatment_reference_age, "treatment")?;
        data.y = y;
        data.t = t;
        outcome_profile = py;
        treatment_profile = pt;
    }

    let (qp_y, err_y, diag_y, qp_t, err_t, diag_t, draws) = if config.correct_measurement_error {
        let fy = stochastic_em_fit(&data.y, &data.x, &config.em, seed, "outcome")?;
        let ft = stochastic_em_fit(&data.t, &data.x, &config.em, seed, "treatment")?;
        (
            fy.process,
            fy.mixture,
            Some(fy.diagnostics),
            ft.process,
            ft.mixture,
            Some(ft.diagnostics),
            config.smle.draws,
        )
    } else {
        let qy = fit_process(&data.y, &data.x, &config.em.qr)?;
        let qt = fit_process(&data.t, &data.x, &config.em.qr)?;
        let none = GaussianMixture::point_mass();
        (qy, none.clone(), None, qt, none, None, 1)
    };

    let smle_config = SmleConfig {
        draws,
        ..config.smle.clone()
    };
    let cop = smle_fit(&data, &qp_y, &qp_t, &err_y, &err_t, config.family, &smle_config, seed)?;
    let model = FittedModel {
        qp_y,
        qp_t,
        err_y,
        err_t,
        copula: cop.spec,
        diagnostics: FitDiagnostics {
            seed,
            outcome: diag_y,
            treatment: diag_t,
            smle_log_likelihood: cop.log_likelihood,
            smle_flagged: cop.flagged,
        },
    };
    Ok(PipelineFit {
        model,
        data,
        outcome_profile,
        treatment_profile,
    })
}
