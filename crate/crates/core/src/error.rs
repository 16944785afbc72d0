use thiserror::Error;

use crate::market::PayoffKind;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("argument {0} is outside the open unit interval")]
    Domain(f64),

    #[error("Halton leap {leap} is not coprime with base {base}")]
    LeapNotCoprime { leap: u64, base: u64 },

    #[error("no cached factor for date t = {0}")]
    UncachedDate(f64),

    #[error("payoff {0:?} is not supported by this pricer")]
    WrongPayoff(PayoffKind),

    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("variance {0} is not strictly positive")]
    NonPositiveVariance(f64),

    #[error("failure at exercise date {date}: {source}")]
    AtDate {
        date: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_date(date: usize) -> impl FnOnce(Error) -> Error {
        move |source| Error::AtDate {
            date,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
