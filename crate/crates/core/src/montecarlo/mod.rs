//! Simulation study comparing the error-corrected estimator with naive fits.

mod dgp;
mod study;

pub use dgp::{
    generate, outcome_intercept, outcome_quantile, outcome_slope, treatment_intercept, treatment_quantile,
    treatment_slope, LatentTruth, McDesign,
};
pub use study::{
    aggregate, coefficient_mse, conditioning_point, design_truth, format_table, poverty_line,
    quantile_regression_poverty, run_study, score_replication, CellResult, DesignTruth, ReplicationScores, RmseRow,
    StudyConfig,
};
