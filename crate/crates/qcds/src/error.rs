use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("tiling error: {0}")]
    Tiling(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("gp fitting error: {0}")]
    GpFit(String),

    #[error("plot error: {0}")]
    Plot(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
