//! Simulation design: linear quantile processes in one uniform covariate, ranks
//! linked by a parametric copula, additive normal errors on both variables.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::copula::CopulaSpec;
use crate::error::{Error, Result};
use crate::model::{Dataset, Design};
use crate::rng::stream;

pub fn outcome_intercept(tau: f64) -> f64 {
    1.0 + 3.0 * tau - tau * tau
}

pub fn outcome_slope(tau: f64) -> f64 {
    tau.exp()
}

pub fn treatment_intercept(tau: f64) -> f64 {
    1.0 + tau.sqrt()
}

pub fn treatment_slope(tau: f64) -> f64 {
    0.1 * tau.exp()
}

/// Latent outcome at rank `tau` and covariate `x`.
pub fn outcome_quantile(tau: f64, x: f64) -> f64 {
    outcome_intercept(tau) + outcome_slope(tau) * x
}

pub fn treatment_quantile(tau: f64, x: f64) -> f64 {
    treatment_intercept(tau) + treatment_slope(tau) * x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDesign {
    pub n: usize,
    pub copula: CopulaSpec,
    /// Standard deviation of both measurement errors.
    pub sigma: f64,
    pub replications: usize,
}

impl McDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidConfig("error standard deviation must be positive".into()));
        }
        if self.n < 10 {
            return Err(Error::InvalidConfig("simulation needs at least 10 observations".into()));
        }
        Ok(())
    }
}

/// Latent quantities kept apart from the observed dataset, for scoring only.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    pub y_star: Vec<f64>,
    pub t_star: Vec<f64>,
    pub rank_y: Vec<f64>,
    pub rank_t: Vec<f64>,
}

/// One simulated sample; `replication` selects an independent stream.
pub fn generate(design: &McDesign, seed: u64, replication: u64) -> Result<(Dataset, LatentTruth)> {
    design.validate()?;
    let mut rng = stream(seed, "mc-generate", &[replication]);
    let noise = Normal::new(0.0, design.sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let n = design.n;
    let mut xs = Vec::with_capacity(n);
    let mut truth = LatentTruth {
        y_star: Vec::with_capacity(n),
        t_star: Vec::with_capacity(n),
        rank_y: Vec::with_capacity(n),
        rank_t: Vec::with_capacity(n),
    };
    let mut y = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random();
        let (vy, vt) = design.copula.sample_pair(&mut rng);
        let ys = outcome_quantile(vy, x);
        let ts = treatment_quantile(vt, x);
        y.push(ys + noise.sample(&mut rng));
        t.push(ts + noise.sample(&mut rng));
        xs.push(x);
        truth.y_star.push(ys);
        truth.t_star.push(ts);
        truth.rank_y.push(vy);
        truth.rank_t.push(vt);
    }
    let data = Dataset::new(y, t, Design::with_intercept(&[&xs])?)?;
    Ok((data, truth))
}
