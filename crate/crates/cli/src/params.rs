//! `params`: functionals of a saved model.

use std::path::{Path, PathBuf};

use clap::Args;
use mecop::mobility::{
    conditional_outcome_quantile, counterfactual_cdf, poverty_rate, simulate_panel, spearman_rho_panel,
    transition_matrix, upward_mobility, CovariateScope, SimulatedPanel, TransitionMatrix, UpwardMobility,
};
use mecop::numeric::stats;
use mecop::pipeline::PipelineFit;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, UsageError};
use crate::document::{num, read_document, write_csv, write_json, Header, ModelDocument};

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Repeat the request embedded in an earlier `params` document.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub transition_matrix: bool,
    /// Rank cutoffs between bins.
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    #[arg(long)]
    pub spearman: bool,
    /// Upward mobility for each parent bin defined by the cutoffs.
    #[arg(long)]
    pub upward: bool,
    /// Rank gap the child must exceed for upward mobility.
    #[arg(long)]
    pub gap: Option<f64>,
    /// Conditional outcome quantiles at these ranks, along the treatment grid.
    #[arg(long, value_delimiter = ',')]
    pub quantiles: Option<Vec<f64>>,
    /// Poverty-rate curve along the treatment grid at this outcome line.
    #[arg(long, allow_hyphen_values = true)]
    pub poverty_line: Option<f64>,
    /// Counterfactual outcome CDF at these outcome values, along the treatment grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub counterfactual: Option<Vec<f64>>,
    /// Treatment values for curves; defaults to the 5th to 95th percentiles of the fitted treatment.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub t_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub panel_draws: Option<usize>,
    /// Seed for the simulated panel; defaults to the model's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved request, stored in the output so it can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsRequest {
    pub model: PathBuf,
    pub cutoffs: Vec<f64>,
    pub transition_matrix: bool,
    pub spearman: bool,
    pub upward: bool,
    pub gap: f64,
    pub quantiles: Vec<f64>,
    pub poverty_line: Option<f64>,
    pub counterfactual: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub panel_draws: usize,
    pub seed: u64,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpwardRow {
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    #[serde(flatten)]
    pub value: UpwardMobility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub tau: f64,
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovertyPoint {
    pub t: f64,
    /// At the covariate means.
    pub at_means: f64,
    /// Averaged over the covariate rows.
    pub averaged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub y: f64,
    pub t: f64,
    pub cdf: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamsResults {
    pub transition_matrix: Option<TransitionMatrix>,
    pub spearman_rho: Option<f64>,
    pub upward_mobility: Option<Vec<UpwardRow>>,
    pub quantile_curves: Option<Vec<QuantilePoint>>,
    pub poverty_curve: Option<Vec<PovertyPoint>>,
    pub counterfactual_cdf: Option<Vec<CdfPoint>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    #[serde(flatten)]
    pub header: Header,
    pub config: RunConfig,
    pub request: ParamsRequest,
    pub results: ParamsResults,
}

fn default_t_grid(fit: &PipelineFit) -> Vec<f64> {
    let mut t = fit.data.t.clone();
    t.sort_by(f64::total_cmp);
    (1..=19).map(|k| stats::quantile_sorted(&t, k as f64 * 0.05)).collect()
}

/// Parent bins implied by the cutoffs.
pub fn bands(cutoffs: &[f64]) -> Vec<(f64, f64)> {
    let mut edges = vec![0.0];
    edges.extend_from_slice(cutoffs);
    edges.push(1.0);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

pub fn upward_by_band(panel: &SimulatedPanel, cutoffs: &[f64], gap: f64) -> mecop::Result<Vec<UpwardRow>> {
    bands(cutoffs)
        .into_iter()
        .map(|(lower, upper)| {
            Ok(UpwardRow {
                lower,
                upper,
                gap,
                value: upward_mobility(panel, gap, lower, upper)?,
            })
        })
        .collect()
}

impl ParamsArgs {
    fn resolve(&self) -> anyhow::Result<(ParamsRequest, ModelDocument)> {
        let base: Option<ParamsRequest> = self
            .config
            .as_deref()
            .map(|p| read_document::<ParamsDocument>(p).map(|d| d.request))
            .transpose()?;
        let model_path = self
            .model
            .clone()
            .or_else(|| base.as_ref().map(|b| b.model.clone()))
            .ok_or_else(|| UsageError("--model is required".into()))?;
        let doc: ModelDocument = read_document(&model_path)?;
        let b = base.as_ref();
        let t_grid = self
            .t_grid
            .clone()
            .or_else(|| b.map(|b| b.t_grid.clone()))
            .unwrap_or_else(|| default_t_grid(&doc.fit));
        let req = ParamsRequest {
            cutoffs: self
                .cutoffs
                .clone()
                .or_else(|| b.map(|b| b.cutoffs.clone()))
                .unwrap_or_else(|| vec![0.25, 0.5, 0.75]),
            transition_matrix: self.transition_matrix || b.is_some_and(|b| b.transition_matrix),
            spearman: self.spearman || b.is_some_and(|b| b.spearman),
            upward: self.upward || b.is_some_and(|b| b.upward),
            gap: self.gap.or(b.map(|b| b.gap)).unwrap_or(0.0),
            quantiles: self.quantiles.clone().or_else(|| b.map(|b| b.quantiles.clone())).unwrap_or_default(),
            poverty_line: self.poverty_line.or(b.and_then(|b| b.poverty_line)),
            counterfactual: self
                .counterfactual
                .clone()
                .or_else(|| b.map(|b| b.counterfactual.clone()))
                .unwrap_or_default(),
            t_grid,
            panel_draws: self
                .panel_draws
                .or(b.map(|b| b.panel_draws))
                .unwrap_or(doc.config.pipeline.panel_draws),
            seed: self.seed.or(b.map(|b| b.seed)).unwrap_or(doc.header.seed),
            output: self
                .out
                .clone()
                .or_else(|| b.map(|b| b.output.clone()))
                .unwrap_or_else(|| doc.config.output.clone()),
            model: model_path,
        };
        let nothing = !(req.transition_matrix || req.spearman || req.upward)
            && req.quantiles.is_empty()
            && req.poverty_line.is_none()
            && req.counterfactual.is_empty();
        if nothing {
            return Err(UsageError("no parameter requested".into()).into());
        }
        if req.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(UsageError("quantile ranks must lie in (0, 1)".into()).into());
        }
        Ok((req, doc))
    }
}

pub fn compute(fit: &PipelineFit, req: &ParamsRequest) -> anyhow::Result<ParamsResults> {
    let model = &fit.model;
    let mut res = ParamsResults::default();
    if req.transition_matrix || req.spearman || req.upward {
        let panel = simulate_panel(model, &fit.data, req.panel_draws, req.seed);
        if req.transition_matrix {
            res.transition_matrix = Some(transition_matrix(&panel, &req.cutoffs)?);
        }
        if req.spearman {
            res.spearman_rho = Some(spearman_rho_panel(&panel)?);
        }
        if req.upward {
            res.upward_mobility = Some(upward_by_band(&panel, &req.cutoffs, req.gap)?);
        }
    }
    let x_bar = fit.data.x.column_means();
    if !req.quantiles.is_empty() {
        let mut pts = Vec::new();
        for &tau in &req.quantiles {
            for &t in &req.t_grid {
                pts.push(QuantilePoint {
                    tau,
                    t,
                    value: conditional_outcome_quantile(model, tau, t, &x_bar),
                });
            }
        }
        res.quantile_curves = Some(pts);
    }
    if let Some(line) = req.poverty_line {
        res.poverty_curve = Some(
            req.t_grid
                .iter()
                .map(|&t| PovertyPoint {
                    t,
                    at_means: poverty_rate(model, line, t, CovariateScope::Row(&x_bar)),
                    averaged: poverty_rate(model, line, t, CovariateScope::Averaged(&fit.data)),
                })
                .collect(),
        );
    }
    if !req.counterfactual.is_empty() {
        let mut pts = Vec::new();
        for &t in &req.t_grid {
            for &y in &req.counterfactual {
                pts.push(CdfPoint {
                    y,
                    t,
                    cdf: counterfactual_cdf(model, y, t, &fit.data),
                });
            }
        }
        res.counterfactual_cdf = Some(pts);
    }
    Ok(res)
}

fn write_tables(dir: &Path, res: &ParamsResults) -> anyhow::Result<()> {
    if let Some(tm) = &res.transition_matrix {
        let mut rows = Vec::new();
        for c in 0..tm.bins() {
            for r in 0..tm.bins() {
                rows.push(vec![(r + 1).to_string(), (c + 1).to_string(), num(tm.cells[r][c])]);
            }
        }
        write_csv(&dir.join("transition_matrix.csv"), &["child_bin", "parent_bin", "probability"], &rows)?;
    }
    if let Some(um) = &res.upward_mobility {
        let rows = um
            .iter()
            .map(|u| {
                vec![
                    num(u.lower),
                    num(u.upper),
                    num(u.gap),
                    num(u.value.band_normalized),
                    num(u.value.conditional),
                ]
            })
            .collect::<Vec<_>>();
        write_csv(
            &dir.join("upward_mobility.csv"),
            &["lower", "upper", "gap", "band_normalized", "conditional"],
            &rows,
        )?;
    }
    if let Some(q) = &res.quantile_curves {
        let rows = q.iter().map(|p| vec![num(p.tau), num(p.t), num(p.value)]).collect::<Vec<_>>();
        write_csv(&dir.join("quantile_curves.csv"), &["tau", "t", "quantile"], &rows)?;
    }
    if let Some(p) = &res.poverty_curve {
        let rows = p.iter().map(|p| vec![num(p.t), num(p.at_means), num(p.averaged)]).collect::<Vec<_>>();
        write_csv(&dir.join("poverty_curve.csv"), &["t", "at_covariate_means", "averaged"], &rows)?;
    }
    if let Some(c) = &res.counterfactual_cdf {
        let rows = c.iter().map(|p| vec![num(p.y), num(p.t), num(p.cdf)]).collect::<Vec<_>>();
        write_csv(&dir.join("counterfactual_cdf.csv"), &["y", "t", "cdf"], &rows)?;
    }
    Ok(())
}

pub fn run(args: &ParamsArgs) -> anyhow::Result<()> {
    let (req, doc) = args.resolve()?;
    let results = compute(&doc.fit, &req)?;
    write_tables(&req.output, &results)?;
    if let Some(rho) = results.spearman_rho {
        println!("spearman_rho {rho:.4}");
    }
    if let Some(tm) = &results.transition_matrix {
        println!("transition matrix (rows: child bin, columns: parent bin)");
        for row in &tm.cells {
            println!("  {}", row.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(" "));
        }
    }
    let path = req.output.join("params.json");
    write_json(
        &path,
        &ParamsDocument {
            header: Header::new(req.seed),
            config: doc.config,
            request: req,
            results,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}
