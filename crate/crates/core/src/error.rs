use thiserror::Error;

/// Errors raised across the library. Variants map onto the CLI exit codes:
/// capacity problems exit with 2, everything else with 1.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("{a} is not invertible modulo {modulus}")]
    NotInvertible { a: i64, modulus: u64 },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("unsupported case: {0}")]
    Unsupported(String),
    #[error("contour symmetry violated: imaginary part {imag:e} exceeds tolerance")]
    ContourSymmetry { imag: f64 },
    #[error("insufficient eigenvalue coverage: need lambda(n) up to n = {required}, have {available}")]
    Coverage { required: usize, available: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation failed for record '{label}': {msg}")]
    Validation { label: String, msg: String },
    #[error("mismatch: {0}")]
    Mismatch(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn is_capacity(&self) -> bool {
        matches!(self, Error::Capacity(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
