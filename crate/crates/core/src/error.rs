use thiserror::Error;

/// Errors raised while building, evaluating or analysing a problem.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value produced in layer {layer}")]
    NonFinite { layer: usize },
    #[error("point is infeasible (max residual {max_residual:e})")]
    Infeasible { max_residual: f64 },
    #[error("direction is not tangent (max violation {max_violation:e})")]
    NotTangent { max_violation: f64 },
    #[error("first-order condition fails, second-order check does not apply")]
    FirstOrderFails,
    #[error("penalty parameters are not certified: {0}")]
    Uncertified(String),
    #[error("too many activation patterns to enumerate: {count}")]
    TooManyPatterns { count: u128 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: what.to_string(),
            expected,
            found,
        })
    }
}
