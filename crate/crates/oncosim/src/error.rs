//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

use crate::model::State;

#[derive(Debug, Error)]
pub enum Error {
    /// A rate parameter or derived row probability is out of range.
    #[error("invalid parameter `{field}`: {reason} (got {value})")]
    InvalidParam {
        field: &'static str,
        value: f64,
        reason: String,
    },

    /// A transient state has no exit probability, so mass is trapped there.
    #[error("degenerate model: state {0} has zero exit probability and traps probability mass")]
    DegenerateState(State),

    /// Mixture with overall survival below the non-progressive fraction.
    #[error(
        "inconsistent mixture: overall survival {survival} is below the \
         non-progressive fraction {fraction} (survivors must include all non-progressives)"
    )]
    InconsistentMixture { survival: f64, fraction: f64 },

    /// Mixture with non-progressive fraction 1: no progressive subgroup exists.
    #[error("undefined mixture: non-progressive fraction must be < 1")]
    UndefinedMixture,

    /// Input file could not be parsed; row/col are 1-based, row 1 is the header.
    #[error("{origin}: row {row}, column `{column}`: {message}")]
    Parse {
        origin: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("site not found: {0}")]
    SiteNotFound(String),

    /// A target row has no stage shares and the caller did not opt into
    /// survival-only fitting.
    #[error("target `{0}` has no stage shares; pass --survival-only to fit on survival rates alone")]
    MissingShares(String),

    #[error("numerical failure in {0}: non-finite value")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code: 2 for input/validation problems, 3 for internal
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
