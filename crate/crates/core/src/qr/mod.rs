//! Linear quantile regression and the conditional distributions it implies.

mod conditional;
mod solver;

pub use conditional::{
    conditional_cdf, conditional_density, conditional_quantile, QuantileCurve, DENSITY_CAP,
};
pub use solver::{check_objective, qr_fit, QrFitConfig};

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{Design, QuantileProcess};

/// Fit every knot of `config.grid`.
pub fn fit_process(y: &[f64], x: &Design, config: &QrFitConfig) -> Result<QuantileProcess> {
    fit_process_weighted(y, x, None, config, None)
}

/// Weighted fit at every knot, optionally warm-started from an earlier process.
pub fn fit_process_weighted(
    y: &[f64],
    x: &Design,
    weights: Option<&[f64]>,
    config: &QrFitConfig,
    warm: Option<&QuantileProcess>,
) -> Result<QuantileProcess> {
    config.validate()?;
    let warm = warm.filter(|w| w.grid() == &config.grid && w.k() == x.cols());
    let rows = config
        .grid
        .knots()
        .par_iter()
        .enumerate()
        .map(|(l, &tau)| {
            let start = warm.map(|w| w.coefficients()[l].as_slice());
            qr_fit(y, x, tau, weights, config, start)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut qp = QuantileProcess::new(config.grid.clone(), rows)?;
    let crossed = x.iter_rows().any(|r| {
        qp.fitted_at_knots(r)
            .windows(2)
            .any(|w| w[1] < w[0])
    });
    if crossed {
        log::debug!("quantile crossing observed; evaluators rearrange per row");
    }
    qp.mark_crossing(crossed);
    Ok(qp)
}
