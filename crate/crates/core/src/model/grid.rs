use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered quantile levels at which coefficient curves are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TauGrid {
    knots: Vec<f64>,
}

impl TauGrid {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least two knots, got {}",
                knots.len()
            )));
        }
        if knots.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::InvalidGrid("knots must lie in (0, 1)".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("knots must be strictly increasing".into()));
        }
        Ok(Self { knots })
    }

    /// `len` equally spaced knots from `lo` to `hi` inclusive.
    pub fn uniform(len: usize, lo: f64, hi: f64) -> Result<Self> {
        if len < 2 {
            return Err(Error::InvalidGrid("need at least two knots".into()));
        }
        let step = (hi - lo) / (len - 1) as f64;
        let mut knots: Vec<f64> = (0..len).map(|i| lo + step * i as f64).collect();
        knots[len - 1] = hi;
        Self::new(knots)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.knots[0]
    }

    pub fn last(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Clamp `tau` onto `[first, last]`.
    pub fn clamp(&self, tau: f64) -> f64 {
        tau.clamp(self.first(), self.last())
    }

    /// Index `l` of the segment `[knots[l], knots[l+1]]` containing the clamped
    /// `tau`, together with the interpolation weight on the upper knot. At a knot
    /// the weight is exactly zero.
    pub fn locate(&self, tau: f64) -> (usize, f64) {
        let tau = self.clamp(tau);
        let l = self.knots.partition_point(|&k| k <= tau).saturating_sub(1);
        let l = l.min(self.knots.len() - 2);
        let (lo, hi) = (self.knots[l], self.knots[l + 1]);
        (l, (tau - lo) / (hi - lo))
    }
}

impl Default for TauGrid {
    fn default() -> Self {
        Self::uniform(25, 0.02, 0.98).expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for TauGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TauGrid> for Vec<f64> {
    fn from(g: TauGrid) -> Self {
        g.knots
    }
}
