use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CovError {
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },

    #[error("{name} = {value} is out of range: {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("need at least {required} observations, got {actual}")]
    SampleSize { required: usize, actual: usize },

    #[error("need at least {required} variables, got {actual}")]
    TooFewVariables { required: usize, actual: usize },

    #[error("variable {index} has non-positive variance {variance:e}")]
    DegenerateVariable { index: usize, variance: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid model parameter: {0}")]
    ModelParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid class labels: {0}")]
    Labels(String),

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<CovError>,
    },
}

pub type Result<T, E = CovError> = std::result::Result<T, E>;

pub(crate) fn check_domain(
    name: &'static str,
    value: f64,
    ok: bool,
    expected: &'static str,
) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CovError::Domain {
            name,
            value,
            expected,
        })
    }
}
