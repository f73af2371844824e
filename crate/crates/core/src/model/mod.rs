//! Shared domain types.

mod dataset;
mod fitted;
mod grid;
mod mixture;
mod process;

pub use dataset::{Dataset, Design};
pub use fitted::{FitDiagnostics, FittedModel};
pub use grid::TauGrid;
pub use mixture::{GaussianMixture, MIN_SD};
pub use process::QuantileProcess;
