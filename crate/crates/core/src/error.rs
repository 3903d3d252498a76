use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pole {0} is not stable (real part must be below -1e-12)")]
    UnstablePole(Complex64),
    #[error("complex pole {0} has no conjugate partner")]
    UnpairedComplexPole(Complex64),
    #[error("expected 1 or 2 poles, got {0}")]
    PoleCount(usize),
    #[error("sample time must be positive, got {0}")]
    NonPositiveSampleTime(f64),
    #[error("switching signal entry {index} is {value}, expected 0 or 1")]
    NonBinarySignal { index: usize, value: u8 },
    #[error("invalid load {index}: {reason}")]
    InvalidLoad { index: usize, reason: String },
    #[error("invalid decision grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: expected {expected}, got {actual} ({what})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("schedule count overflows 128 bits")]
    CountOverflow,
    #[error("profile has {actual} samples but the day needs {required}")]
    ProfileTooShort { required: usize, actual: usize },
    #[error("no parseable data rows: {0}")]
    NoRows(String),
    #[error("line {line}: timestamp {time} does not increase on the previous row")]
    NonMonotonicTime { line: u64, time: f64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error("series is empty")]
    EmptySeries,
    #[error("series has no positive value to normalize by")]
    AllZero,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
