use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normal;

/// Smallest standard deviation a component may carry.
pub const MIN_SD: f64 = 1e-12;

/// Finite normal mixture for one measurement-error law.
///
/// Kept in canonical form: weights sum to one, the mixture mean is zero and
/// components are ordered by mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl GaussianMixture {
    /// Validates, then puts the mixture in canonical form.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || sds.len() != m {
            return Err(Error::InvalidMixture("component vectors must share a non-zero length".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMixture("weights must be non-negative".into()));
        }
        if sds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidMixture("standard deviations must be positive".into()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMixture("non-finite mean".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMixture("weights sum to zero".into()));
        }
        let mut mix = Self { weights, means, sds };
        mix.canonicalize();
        Ok(mix)
    }

    /// Initial mixture: `m` equally spaced means from `-m` to `m`, centred, equal
    /// weights, every component at standard deviation `sd`.
    pub fn initial(m: usize, sd: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidMixture("need at least one component".into()));
        }
        let means: Vec<f64> = if m == 1 {
            vec![0.0]
        } else {
            let span = m as f64;
            (0..m)
                .map(|j| -span + 2.0 * span * j as f64 / (m - 1) as f64)
                .collect()
        };
        Self::new(vec![1.0 / m as f64; m], means, vec![sd.max(MIN_SD); m])
    }

    /// Degenerate law concentrated at zero (no measurement error).
    pub fn point_mass() -> Self {
        Self {
            weights: vec![1.0],
            means: vec![0.0],
            sds: vec![MIN_SD],
        }
    }

    /// True for the no-error law (every component a spike at zero).
    pub fn is_point_mass(&self) -> bool {
        self.sds.iter().all(|&s| s <= MIN_SD) && self.means.iter().all(|&m| m == 0.0)
    }

    pub fn single(sd: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![0.0], vec![sd])
    }

    fn canonicalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        for w in &mut self.weights {
            *w /= total;
        }
        let mu: f64 = self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum();
        for m in &mut self.means {
            *m -= mu;
        }
        let mut order: Vec<usize> = (0..self.weights.len()).collect();
        order.sort_by(|&a, &b| self.means[a].total_cmp(&self.means[b]));
        self.weights = order.iter().map(|&j| self.weights[j]).collect();
        self.means = order.iter().map(|&j| self.means[j]).collect();
        self.sds = order.iter().map(|&j| self.sds[j]).collect();
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn ln_pdf(&self, u: f64) -> f64 {
        if self.weights.len() == 1 {
            let z = (u - self.means[0]) / self.sds[0];
            return normal::ln_pdf(z) - self.sds[0].ln();
        }
        // streaming log-sum-exp
        let mut top = f64::NEG_INFINITY;
        let mut acc = 0.0;
        for j in 0..self.weights.len() {
            let w = self.weights[j];
            if w <= 0.0 {
                continue;
            }
            let z = (u - self.means[j]) / self.sds[j];
            let t = w.ln() + normal::ln_pdf(z) - self.sds[j].ln();
            if t > top {
                acc = acc * (top - t).exp() + 1.0;
                top = t;
            } else {
                acc += (t - top).exp();
            }
        }
        if top == f64::NEG_INFINITY {
            top
        } else {
            top + acc.ln()
        }
    }

    pub fn pdf(&self, u: f64) -> f64 {
        self.ln_pdf(u).exp()
    }

    pub fn cdf(&self, u: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * normal::cdf((u - m) / s))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut pick = rng.random::<f64>();
        let mut j = self.weights.len() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            if pick < w {
                j = i;
                break;
            }
            pick -= w;
        }
        let z: f64 = StandardNormal.sample(rng);
        self.means[j] + self.sds[j] * z
    }

    /// Stacked `(weights, means, sds)`, the layout used in convergence norms.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.extend_from_slice(&self.means);
        v.extend_from_slice(&self.sds);
        v
    }

    /// Component-wise average of mixtures with the same component count.
    pub fn average(mixtures: &[GaussianMixture]) -> Result<Self> {
        let m = mixtures
            .first()
            .ok_or_else(|| Error::InvalidMixture("nothing to average".into()))?
            .components();
        if mixtures.iter().any(|g| g.components() != m) {
            return Err(Error::InvalidMixture("component counts differ".into()));
        }
        let k = mixtures.len() as f64;
        let avg = |f: fn(&GaussianMixture) -> &[f64]| -> Vec<f64> {
            (0..m)
                .map(|j| mixtures.iter().map(|g| f(g)[j]).sum::<f64>() / k)
                .collect()
        };
        Self::new(avg(Self::weights), avg(Self::means), avg(Self::sds))
    }
}
