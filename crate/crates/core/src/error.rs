use thiserror::Error;

#[derive(Debug, Error)]
pub enum GdfmError {
    #[error("ingestion error at row {row}, column {column}: {message}")]
    Ingestion {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("eigensolver failed at frequency index {0}")]
    Eigen(isize),
    #[error("inverse transform imaginary residue {residue:.3e} at lag {lag} exceeds tolerance")]
    ImaginaryResidue { lag: isize, residue: f64 },
    #[error("block Toeplitz matrix is numerically singular (condition number {0:.3e}); increase the bandwidth or enable the ridge")]
    Singular(f64),
    #[error("degenerate series {0}: zero variance")]
    ZeroVariance(usize),
}

pub type Result<T> = std::result::Result<T, GdfmError>;
