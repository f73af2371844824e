//! `report`: plain-text summary of a saved model, optionally with bootstrap
//! standard errors.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use mecop::bootstrap::BootstrapReport;
use mecop::mobility::{simulate_panel, spearman_rho_panel, transition_matrix, SimulatedPanel, TransitionMatrix};
use mecop::model::GaussianMixture;

use crate::commands::BootstrapDocument;
use crate::document::{read_document, ModelDocument};
use crate::params::{upward_by_band, UpwardRow};

const QUARTILES: [f64; 3] = [0.25, 0.5, 0.75];

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Bootstrap document whose standard errors are shown in parentheses.
    #[arg(long)]
    pub bootstrap: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Measures {
    rho: f64,
    tm: TransitionMatrix,
    upward: Vec<UpwardRow>,
}

fn measures(panel: &SimulatedPanel) -> anyhow::Result<Measures> {
    Ok(Measures {
        rho: spearman_rho_panel(panel)?,
        tm: transition_matrix(panel, &QUARTILES)?,
        upward: upward_by_band(panel, &QUARTILES, 0.0)?,
    })
}

fn mixture_line(m: &GaussianMixture) -> String {
    if m.is_point_mass() {
        return "none".into();
    }
    let parts: Vec<String> = (0..m.components())
        .map(|j| format!("{:.3}*N({:.3}, {:.3}^2)", m.weights()[j], m.means()[j], m.sds()[j]))
        .collect();
    format!("{} (sd {:.3})", parts.join(" + "), m.sd())
}

fn se(boot: Option<&BootstrapReport>, name: &str) -> Option<f64> {
    boot.and_then(|b| b.get(name)).map(|r| r.standard_error)
}

fn matrix_panel(out: &mut String, title: &str, tm: &TransitionMatrix, boot: Option<&BootstrapReport>) {
    let b = tm.bins();
    let _ = writeln!(out, "  {title}");
    let _ = write!(out, "  {:>6}", "child");
    for c in 0..b {
        let _ = write!(out, " {:>8}", c + 1);
    }
    out.push('\n');
    for r in (0..b).rev() {
        let _ = write!(out, "  {:>6}", r + 1);
        for c in 0..b {
            let _ = write!(out, " {:>8.3}", tm.cells[r][c]);
        }
        out.push('\n');
        if boot.is_some() {
            let _ = write!(out, "  {:>6}", "");
            for c in 0..b {
                match se(boot, &format!("tm_{}_{}", r + 1, c + 1)) {
                    Some(s) => {
                        let _ = write!(out, " {:>8}", format!("({s:.3})"));
                    }
                    None => {
                        let _ = write!(out, " {:>8}", "");
                    }
                }
            }
            out.push('\n');
        }
    }
}

pub fn render(doc: &ModelDocument, boot: Option<&BootstrapReport>) -> anyhow::Result<String> {
    let fit = &doc.fit;
    let model = &fit.model;
    let panel = simulate_panel(model, &fit.data, doc.config.pipeline.panel_draws, doc.header.seed);
    let me = measures(&panel)?;
    let observed = measures(&SimulatedPanel::from_pairs(fit.data.y.clone(), fit.data.t.clone())?)?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "model: {} rows, seed {}, tool {}",
        fit.data.len(),
        doc.header.seed,
        doc.header.tool_version
    );
    let _ = writeln!(
        out,
        "copula: {} with parameter {:.4} (Kendall tau {:.3})",
        model.copula.family(),
        model.copula.parameter(),
        model.copula.kendall_tau()
    );
    let _ = writeln!(out, "outcome error: {}", mixture_line(&model.err_y));
    let _ = writeln!(out, "treatment error: {}", mixture_line(&model.err_t));
    for (name, d) in [("outcome", &model.diagnostics.outcome), ("treatment", &model.diagnostics.treatment)] {
        if let Some(d) = d {
            let _ = writeln!(
                out,
                "{name} deconvolution: {} iterations, change {:.4} against {:.4}{}",
                d.iterations,
                d.final_change,
                d.tolerance,
                if d.converged { "" } else { " (not converged)" }
            );
        }
    }
    if let Some(p) = &fit.outcome_profile {
        let _ = writeln!(out, "outcome life-cycle loadings (reference age {}): {:?}", p.reference_age, p.lambdas);
    }
    if let Some(p) = &fit.treatment_profile {
        let _ = writeln!(out, "treatment life-cycle loadings (reference age {}): {:?}", p.reference_age, p.lambdas);
    }

    let _ = writeln!(out, "\nRank-rank correlation");
    let rho_se = se(boot, "spearman_rho").map_or(String::new(), |s| format!(" ({s:.3})"));
    let _ = writeln!(out, "  {:<20} {:.3}{rho_se}", "measurement error", me.rho);
    let _ = writeln!(out, "  {:<20} {:.3}", "observed data", observed.rho);

    let _ = writeln!(out, "\nTransition matrix (columns: parent quartile)");
    matrix_panel(&mut out, "measurement error", &me.tm, boot);
    matrix_panel(&mut out, "observed data", &observed.tm, None);

    let _ = writeln!(out, "\nUpward mobility by parent quartile");
    let _ = write!(out, "  {:<20}", "");
    for q in 1..=me.upward.len() {
        let _ = write!(out, " {q:>8}");
    }
    out.push('\n');
    for (label, rows, b) in [("measurement error", &me.upward, boot), ("observed data", &observed.upward, None)] {
        let _ = write!(out, "  {label:<20}");
        for u in rows {
            let _ = write!(out, " {:>8.3}", u.value.conditional);
        }
        out.push('\n');
        if b.is_some() {
            let _ = write!(out, "  {:<20}", "");
            for u in rows {
                let name = format!("upward_conditional_{}_{}_{}", u.gap, u.lower, u.upper);
                let cell = se(b, &name).map_or(String::new(), |s| format!("({s:.3})"));
                let _ = write!(out, " {cell:>8}");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn run(args: &ReportArgs) -> anyhow::Result<()> {
    let doc: ModelDocument = read_document(&args.model)?;
    let boot = args
        .bootstrap
        .as_deref()
        .map(read_document::<BootstrapDocument>)
        .transpose()?;
    let text = render(&doc, boot.as_ref().map(|b| &b.report))?;
    print!("{text}");
    if let Some(p) = &args.out {
        std::fs::write(p, &text)?;
    }
    Ok(())
}
