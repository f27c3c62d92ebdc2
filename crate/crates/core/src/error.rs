use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pencil sE - A is singular at s = {0}")]
    SingularPencil(Complex64),
    #[error("descriptor matrix E is numerically singular")]
    SingularE,
    #[error("frequency {omega} rad/s is at or above Nyquist for sample time {sample_time} s")]
    AboveNyquist { omega: f64, sample_time: f64 },
    #[error("interpolation set has odd size {0}")]
    OddCount(usize),
    #[error("left point {lambda} coincides with right point {mu}")]
    CoincidentPoints { lambda: Complex64, mu: Complex64 },
    #[error("Loewner matrix is rank deficient (rcond {0:e})")]
    SingularLoewner(f64),
    #[error("no measurement data")]
    EmptyData,
    #[error("model is not conjugate closed (residual imaginary part {0:e})")]
    NotConjugateClosed(f64),
    #[error("every grid point has already been measured")]
    GridExhausted,
    #[error("selection objective vanishes on all candidates")]
    DegenerateObjective,
    #[error("grid of {grid} points cannot supply {requested} distinct points")]
    GridTooSmall { grid: usize, requested: usize },
    #[error("trace of length {len} is too short for window {window}")]
    TraceTooShort { len: usize, window: usize },
    #[error("input has no component at angle {0}")]
    ZeroInputComponent(f64),
    #[error("least-squares matrix is ill conditioned (cond {0:e})")]
    IllConditioned(f64),
    #[error("parse error at line {line}, field `{field}`: {msg}")]
    Parse {
        line: usize,
        field: String,
        msg: String,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Configuration problems are reported separately from numerical failures
    /// by the CLI.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch(_)
                | Error::Io(_)
                | Error::GridTooSmall { .. }
                | Error::AboveNyquist { .. }
        )
    }
}
