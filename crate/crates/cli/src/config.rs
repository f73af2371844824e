//! Resolved run configuration and the flags that build it.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use mecop::bootstrap::BootstrapConfig;
use mecop::copula::CopulaFamily;
use mecop::model::TauGrid;
use mecop::pipeline::{LifecycleConfig, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::ingest::{ColumnMapping, Transform};

/// Everything needed to reproduce a fit. Written into every output document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    pub delimiter: char,
    pub columns: ColumnMapping,
    pub transform: Transform,
    pub pipeline: PipelineConfig,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Reuse the configuration embedded in an earlier output document (or a
    /// bare configuration file); other flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub delimiter: Option<char>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub treatment: Option<String>,
    /// Comma-separated covariate columns; an intercept is always added.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long)]
    pub outcome_age: Option<String>,
    #[arg(long)]
    pub treatment_age: Option<String>,
    /// Age at which the outcome's life-cycle loading is one.
    #[arg(long)]
    pub outcome_reference_age: Option<i64>,
    #[arg(long)]
    pub treatment_reference_age: Option<i64>,
    /// Use outcome and treatment as given instead of taking logs.
    #[arg(long)]
    pub levels: bool,
    /// Number of quantile knots, equally spaced on [0.02, 0.98].
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Error draws per observation in the deconvolution step.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Simulated draws per observation in the copula likelihood.
    #[arg(long)]
    pub copula_draws: Option<usize>,
    #[arg(long)]
    pub family: Option<CopulaFamily>,
    /// Ignore measurement error in both variables.
    #[arg(long)]
    pub naive: bool,
    #[arg(long)]
    pub panel_draws: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Raised for bad flags or configuration, as opposed to bad data.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Load a configuration from a bare `RunConfig` file or from any output
/// document carrying one under `config`.
pub fn load_config(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{} is not JSON", path.display()))?;
    let inner = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(inner).with_context(|| format!("{} holds no usable run configuration", path.display()))
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let base = self.config.as_deref().map(load_config).transpose()?;
        let mut pipeline = base.as_ref().map(|b| b.pipeline.clone()).unwrap_or_default();
        let mut bootstrap = base.as_ref().map(|b| b.bootstrap.clone()).unwrap_or_default();

        let pick = |flag: &Option<String>, from_base: Option<&String>, what: &str| -> anyhow::Result<String> {
            flag.clone()
                .or_else(|| from_base.cloned())
                .ok_or_else(|| usage(format!("--{what} is required")))
        };
        let columns = ColumnMapping {
            outcome: pick(&self.outcome, base.as_ref().map(|b| &b.columns.outcome), "outcome")?,
            treatment: pick(&self.treatment, base.as_ref().map(|b| &b.columns.treatment), "treatment")?,
            covariates: self
                .covariates
                .clone()
                .or_else(|| base.as_ref().map(|b| b.columns.covariates.clone()))
                .unwrap_or_default(),
            outcome_age: self.outcome_age.clone().or_else(|| base.as_ref().and_then(|b| b.columns.outcome_age.clone())),
            treatment_age: self
                .treatment_age
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.columns.treatment_age.clone())),
        };
        let input = self
            .input
            .clone()
            .or_else(|| base.as_ref().map(|b| b.input.clone()))
            .ok_or_else(|| usage("--input is required"))?;
        let seed = self
            .seed
            .or(base.as_ref().map(|b| b.seed))
            .ok_or_else(|| usage("--seed is required"))?;
        let output = self
            .out
            .clone()
            .or_else(|| base.as_ref().map(|b| b.output.clone()))
            .unwrap_or_else(|| PathBuf::from("."));
        let delimiter = self.delimiter.or(base.as_ref().map(|b| b.delimiter)).unwrap_or(',');
        let transform = if self.levels {
            Transform {
                log_outcome: false,
                log_treatment: false,
            }
        } else {
            base.as_ref().map(|b| b.transform).unwrap_or(Transform {
                log_outcome: true,
                log_treatment: true,
            })
        };

        if let Some(k) = self.knots {
            pipeline.em.qr.grid = TauGrid::uniform(k, 0.02, 0.98).map_err(|e| usage(e.to_string()))?;
        }
        if let Some(m) = self.components {
            pipeline.em.components = m;
        }
        if let Some(s) = self.draws {
            pipeline.em.draws = s;
        }
        if let Some(b) = self.burn_in {
            pipeline.em.burn_in = b;
        }
        if let Some(i) = self.max_iterations {
            pipeline.em.max_iterations = i;
        }
        if let Some(s) = self.copula_draws {
            pipeline.smle.draws = s;
        }
        if let Some(f) = self.family {
            pipeline.family = f;
        }
        if self.naive {
            pipeline.correct_measurement_error = false;
        }
        if let Some(p) = self.panel_draws {
            pipeline.panel_draws = p;
        }
        if self.outcome_reference_age.is_some() || self.treatment_reference_age.is_some() {
            let prev = pipeline.lifecycle.clone();
            pipeline.lifecycle = Some(LifecycleConfig {
                outcome_reference_age: self
                    .outcome_reference_age
                    .or(prev.as_ref().and_then(|l| l.outcome_reference_age)),
                treatment_reference_age: self
                    .treatment_reference_age
                    .or(prev.as_ref().and_then(|l| l.treatment_reference_age)),
            });
        }
        if let Some(b) = self.replicates {
            bootstrap.replicates = b;
        }
        if let Some(a) = self.alpha {
            bootstrap.alpha = a;
        }
        if !delimiter.is_ascii() {
            return Err(usage("delimiter must be a single ASCII character"));
        }
        pipeline.validate().map_err(|e| usage(e.to_string()))?;
        bootstrap.validate().map_err(|e| usage(e.to_string()))?;
        if let Some(lc) = &pipeline.lifecycle {
            if lc.outcome_reference_age.is_some() && columns.outcome_age.is_none() {
                return Err(usage("--outcome-reference-age needs --outcome-age"));
            }
            if lc.treatment_reference_age.is_some() && columns.treatment_age.is_none() {
                return Err(usage("--treatment-reference-age needs --treatment-age"));
            }
        }

        Ok(RunConfig {
            input,
            delimiter,
            columns,
            transform,
            pipeline,
            bootstrap,
            seed,
            output,
        })
    }
}
