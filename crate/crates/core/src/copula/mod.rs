//! Parametric copulas and their estimation by simulated likelihood.

mod family;
mod smle;

pub use family::{copula_sample, CopulaFamily, CopulaSpec};
pub use smle::{smle_fit, SimulatedMargins, SmleConfig, SmleFit, LIKELIHOOD_FLOOR};

pub fn copula_cdf(spec: &CopulaSpec, u: f64, v: f64) -> f64 {
    spec.cdf(u, v)
}

pub fn copula_pdf(spec: &CopulaSpec, u: f64, v: f64) -> f64 {
    spec.pdf(u, v)
}

pub fn conditional_copula(spec: &CopulaSpec, u: f64, v: f64) -> f64 {
    spec.conditional(u, v)
}

pub fn conditional_copula_inverse(spec: &CopulaSpec, p: f64, v: f64) -> f64 {
    spec.conditional_inverse(p, v)
}
