use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rejected input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular point at {freq_hz} Hz: {what}")]
    Singular { freq_hz: f64, what: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("extraction failed: {0}")]
    Extraction(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
