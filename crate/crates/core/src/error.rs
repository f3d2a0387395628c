use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("column {0} has zero variance")]
    ZeroVarianceColumn(usize),

    #[error("input contains NaN or infinite values")]
    NonFiniteInput,

    #[error("matrix is rank deficient (singular value ratio {0:e})")]
    RankDeficient(f64),

    #[error("requested {b} basis centers but only {n} samples are available")]
    TooManyCenters { b: usize, n: usize },

    #[error("linear system is numerically singular (condition estimate {0:e})")]
    SolveFailure(f64),

    #[error("operation requires dz = 1, got dz = {0}")]
    UnsupportedDimension(usize),

    #[error("candidate grid is empty")]
    EmptyGrid,

    #[error("cross-validation fold {fold} has only {size} samples")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("line search failed after {0} backtracks")]
    LineSearchFailure(usize),

    #[error("all {0} restarts failed")]
    AllRestartsFailed(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        })
    }
}
