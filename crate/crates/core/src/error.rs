use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tau grid: {0}")]
    InvalidGrid(String),

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("copula parameter {value} outside the admissible range for {family}")]
    CopulaDomain { family: &'static str, value: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("design matrix is singular or rank deficient ({rows} rows, {cols} columns)")]
    SingularDesign { rows: usize, cols: usize },

    #[error("quantile regression at tau={tau} did not converge after {iterations} iterations")]
    QrNonConvergence {
        tau: f64,
        iterations: usize,
        best: Vec<f64>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty parent bin [{lower}, {upper}] in transition matrix")]
    EmptyBin { lower: f64, upper: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("lifecycle: {0}")]
    Lifecycle(String),

    #[error("estimation did not converge: {0}")]
    NonConvergence(String),

    #[error("bootstrap: {dropped} of {total} replicates failed, more than the allowed 20%")]
    TooManyDropped { dropped: usize, total: usize },
}
