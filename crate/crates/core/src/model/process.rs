use serde::{Deserialize, Serialize};

use super::grid::TauGrid;
use crate::error::{Error, Result};

/// Coefficient curves `tau -> beta(tau)` on a grid; row `l` holds `beta(knots[l])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProcess {
    grid: TauGrid,
    coefficients: Vec<Vec<f64>>,
    /// Set when fitted values crossed across knots for some row of the fitting data.
    #[serde(default)]
    pub crossing_observed: bool,
}

impl QuantileProcess {
    pub fn new(grid: TauGrid, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "{} coefficient rows for a grid of {} knots",
                coefficients.len(),
                grid.len()
            )));
        }
        let k = coefficients[0].len();
        if k == 0 || coefficients.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidConfig("ragged coefficient matrix".into()));
        }
        if coefficients.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite coefficient".into()));
        }
        Ok(Self {
            grid,
            coefficients,
            crossing_observed: false,
        })
    }

    pub fn grid(&self) -> &TauGrid {
        &self.grid
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    /// Number of covariates, intercept included.
    pub fn k(&self) -> usize {
        self.coefficients[0].len()
    }

    /// Coefficients at `tau`: linear between neighbouring knots, flat outside the grid.
    pub fn interpolate_beta(&self, tau: f64) -> Vec<f64> {
        let (l, w) = self.grid.locate(tau);
        let lo = &self.coefficients[l];
        if w == 0.0 {
            return lo.clone();
        }
        let hi = &self.coefficients[l + 1];
        if w == 1.0 {
            return hi.clone();
        }
        lo.iter().zip(hi).map(|(a, b)| a + w * (b - a)).collect()
    }

    /// Fitted values `x'beta(tau_l)` at every knot, in knot order (no rearrangement).
    pub fn fitted_at_knots(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|b| b.iter().zip(x).map(|(c, v)| c * v).sum())
            .collect()
    }

    /// Stacked coefficients, knot-major.
    pub fn to_vec(&self) -> Vec<f64> {
        self.coefficients.iter().flatten().copied().collect()
    }

    pub(crate) fn mark_crossing(&mut self, crossed: bool) {
        self.crossing_observed = crossed;
    }
}
