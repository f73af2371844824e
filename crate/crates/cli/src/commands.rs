//! `fit`, `bootstrap`, `simulate` and `mc-bench`.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use mecop::bootstrap::{bootstrap_pipeline, BootstrapReport, Statistic};
use mecop::copula::{CopulaFamily, CopulaSpec};
use mecop::montecarlo::{format_table, generate, run_study, CellResult, McDesign, RmseRow, StudyConfig};
use mecop::pipeline::fit_model;
use serde::{Deserialize, Serialize};

use crate::config::{RunArgs, RunConfig, UsageError};
use crate::document::{num, write_csv, write_json, Header, ModelDocument};
use crate::ingest::{ingest, IngestSummary};
use crate::params::bands;

/// Fit finished and was written, but some iteration limit was hit.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NotConverged(pub String);

fn load(config: &RunConfig) -> anyhow::Result<(mecop::model::Dataset, IngestSummary)> {
    let (data, summary) = ingest(&config.input, config.delimiter as u8, &config.columns, config.transform)?;
    if summary.dropped > 0 {
        log::info!("dropped {} rows with missing values", summary.dropped);
    }
    Ok((data, summary))
}

pub fn fit(args: &RunArgs) -> anyhow::Result<()> {
    let config = args.resolve()?;
    let (data, ingest) = load(&config)?;
    let fit = fit_model(&data, &config.pipeline, config.seed)?;
    let d = &fit.model.diagnostics;
    println!(
        "fitted {} rows ({} dropped); {} copula parameter {:.4}",
        ingest.rows_kept,
        ingest.dropped,
        fit.model.copula.family(),
        fit.model.copula.parameter()
    );
    let converged = d.converged();
    let path = config.output.join("model.json");
    let doc = ModelDocument {
        header: Header::new(config.seed),
        config,
        ingest,
        fit,
    };
    write_json(&path, &doc)?;
    println!("wrote {}", path.display());
    if !converged {
        return Err(NotConverged(format!(
            "deconvolution stopped at the iteration limit (last change {:.4})",
            doc.fit.model.diagnostics.final_change()
        ))
        .into());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub copula_parameter: bool,
    #[arg(long)]
    pub spearman: bool,
    #[arg(long)]
    pub transition_matrix: bool,
    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<f64>>,
    /// Upward mobility for every parent bin defined by the cutoffs.
    #[arg(long)]
    pub upward: bool,
    #[arg(long, default_value_t = 0.0)]
    pub gap: f64,
    /// Poverty rate as LINE@T; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub poverty: Vec<String>,
    /// Conditional outcome quantile as TAU@T; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub quantile: Vec<String>,
}

fn pair(text: &str, what: &str) -> anyhow::Result<(f64, f64)> {
    let bad = || UsageError(format!("--{what} expects A@B, got '{text}'"));
    let (a, b) = text.split_once('@').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl BootstrapArgs {
    pub fn statistics(&self) -> anyhow::Result<Vec<Statistic>> {
        let cutoffs = self.cutoffs.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]);
        let mut out = Vec::new();
        if self.copula_parameter {
            out.push(Statistic::CopulaParameter);
        }
        if self.spearman {
            out.push(Statistic::SpearmanRho);
        }
        if self.transition_matrix {
            out.push(Statistic::TransitionMatrix {
                cutoffs: cutoffs.clone(),
            });
        }
        if self.upward {
            for (lower, upper) in bands(&cutoffs) {
                out.push(Statistic::UpwardMobility {
                    gap: self.gap,
                    lower,
                    upper,
                });
            }
        }
        for p in &self.poverty {
            let (line, treatment) = pair(p, "poverty")?;
            out.push(Statistic::PovertyRate { line, treatment });
        }
        for q in &self.quantile {
            let (tau, treatment) = pair(q, "quantile")?;
            out.push(Statistic::ConditionalQuantile { tau, treatment });
        }
        if out.is_empty() {
            out = vec![
                Statistic::CopulaParameter,
                Statistic::SpearmanRho,
                Statistic::TransitionMatrix { cutoffs },
            ];
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDocument {
    #[serde(flatten)]
    pub header: Header,
    pub config: RunConfig,
    pub statistics: Vec<Statistic>,
    /// Intervals are percentile intervals of the replicate values.
    pub report: BootstrapReport,
}

pub fn bootstrap(args: &BootstrapArgs) -> anyhow::Result<()> {
    let config = args.run.resolve()?;
    let statistics = args.statistics()?;
    let (data, _) = load(&config)?;
    let report = bootstrap_pipeline(&data, &config.pipeline, &statistics, &config.bootstrap, config.seed)?;
    println!(
        "{} of {} replicates used ({} dropped)",
        report.effective(),
        report.requested,
        report.dropped
    );
    let lo = format!("lower_{}", 1.0 - report.alpha);
    let hi = format!("upper_{}", 1.0 - report.alpha);
    let mut rows = Vec::new();
    for r in &report.results {
        println!(
            "  {:<32} {:>10.4} ({:.4}) [{:.4}, {:.4}]",
            r.name, r.estimate, r.standard_error, r.interval.0, r.interval.1
        );
        rows.push(vec![
            r.name.clone(),
            num(r.estimate),
            num(r.standard_error),
            num(r.interval.0),
            num(r.interval.1),
        ]);
    }
    write_csv(
        &config.output.join("bootstrap.csv"),
        &["statistic", "estimate", "standard_error", &lo, &hi],
        &rows,
    )?;
    let path = config.output.join("bootstrap.json");
    write_json(
        &path,
        &BootstrapDocument {
            header: Header::new(config.seed),
            config,
            statistics,
            report,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Standard deviation of both measurement errors.
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value = "clayton")]
    pub family: CopulaFamily,
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    pub parameter: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub replication: u64,
    /// Observed data as CSV with columns y, t, x.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV of the latent values and ranks, for checking only.
    #[arg(long)]
    pub latent: Option<PathBuf>,
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let design = McDesign {
        n: args.n,
        copula: CopulaSpec::new(args.family, args.parameter)?,
        sigma: args.sigma,
        replications: 1,
    };
    let (data, truth) = generate(&design, args.seed, args.replication)?;
    let rows: Vec<Vec<String>> = (0..data.len())
        .map(|i| vec![num(data.y[i]), num(data.t[i]), num(data.x.row(i)[1])])
        .collect();
    write_csv(&args.out, &["y", "t", "x"], &rows)?;
    if let Some(p) = &args.latent {
        let rows: Vec<Vec<String>> = (0..data.len())
            .map(|i| {
                vec![
                    num(truth.y_star[i]),
                    num(truth.t_star[i]),
                    num(truth.rank_y[i]),
                    num(truth.rank_t[i]),
                ]
            })
            .collect();
        write_csv(p, &["y_star", "t_star", "rank_y", "rank_t"], &rows)?;
    }
    println!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct McBenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.1")]
    pub sigma: Vec<f64>,
    /// Copulas as FAMILY:PARAMETER.
    #[arg(long, value_delimiter = ',', default_value = "clayton:1.5,gaussian:0.5")]
    pub copula: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Twenty replications per cell.
    #[arg(long)]
    pub fast: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub truth_draws: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDocument {
    #[serde(flatten)]
    pub header: Header,
    pub config: StudyConfig,
    pub cells: Vec<CellResult>,
}

pub fn mc_bench(args: &McBenchArgs) -> anyhow::Result<()> {
    let reps = if args.fast { 20 } else { args.reps };
    let mut designs = Vec::new();
    for c in &args.copula {
        let (family, parameter) = c
            .split_once(':')
            .ok_or_else(|| UsageError(format!("--copula expects FAMILY:PARAMETER, got '{c}'")))?;
        let family: CopulaFamily = family.parse()?;
        let parameter: f64 = parameter
            .parse()
            .with_context(|| format!("bad copula parameter in '{c}'"))?;
        let copula = CopulaSpec::new(family, parameter)?;
        for &n in &args.n {
            for &sigma in &args.sigma {
                designs.push(McDesign {
                    n,
                    copula,
                    sigma,
                    replications: reps,
                });
            }
        }
    }
    let mut config = StudyConfig::default();
    if let Some(d) = args.truth_draws {
        config.truth_draws = d;
    }
    let cells = run_study(&designs, &config, args.seed)?;
    let table = format_table(&cells);
    print!("{table}");

    let mut header = vec!["copula", "parameter", "n", "sd", "completed", "failed"];
    header.extend(RmseRow::COLUMNS);
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let mut r = vec![
                c.design.copula.family().to_string(),
                num(c.design.copula.parameter()),
                c.design.n.to_string(),
                num(c.design.sigma),
                c.completed.to_string(),
                c.failed.to_string(),
            ];
            r.extend(c.rmse.values().iter().map(|&v| num(v)));
            r
        })
        .collect();
    write_csv(&args.out.join("mc.csv"), &header, &rows)?;
    std::fs::write(args.out.join("mc.txt"), &table)?;
    write_json(
        &args.out.join("mc.json"),
        &McDocument {
            header: Header::new(args.seed),
            config,
            cells,
        },
    )?;
    println!("wrote {}", args.out.join("mc.csv").display());
    Ok(())
}
