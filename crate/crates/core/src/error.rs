use thiserror::Error;

/// Errors raised by the monotonicity tests and their supporting routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("local design is singular at x = {x} for bandwidth {bandwidth}; widen the bandwidth")]
    SingularDesign { x: f64, bandwidth: f64 },
    #[error("no candidate bandwidth produced a usable fit")]
    NoUsableBandwidth,
    #[error("particle filter degenerated at observation {step}: every particle has zero weight; use more particles")]
    FilterDegenerate { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("calibration aborted: {failures} of {total} runs failed")]
    CalibrationFailures { failures: usize, total: usize },
    #[error("missing calibration for test `{0}`")]
    MissingCalibration(String),
    #[error("malformed CSV at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
