//! Estimation of the joint distribution of two mismeasured variables given
//! covariates: quantile regression with deconvolved errors, parametric copulas
//! fitted by simulated likelihood, and mobility functionals built on top.

pub mod bootstrap;
pub mod copula;
pub mod deconv;
pub mod error;
pub mod lifecycle;
pub mod mobility;
pub mod model;
pub mod montecarlo;
pub mod numeric;
pub mod pipeline;
pub mod qr;
pub mod rng;

pub use error::{Error, Result};
