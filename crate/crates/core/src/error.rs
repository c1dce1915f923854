use thiserror::Error;

use crate::expr::{EvalError, ParseError};
use crate::space::Point;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A failed attempt to find a preimage under `K` (or `K∘K`) inside the carrier.
///
/// This is the numerical face of a violated range hypothesis `f(ℜ) ⊆ K(ℜ)`:
/// `source` is the point whose image could not be matched and `target` is that image.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("no preimage of {target} inside the carrier (source point {source_point}): {reason}")]
pub struct InversionFailure {
    pub source_point: Point,
    pub target: Point,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sequence is empty")]
    EmptySequence,

    #[error("coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("trace has {len} points, at least {required} required")]
    TraceTooShort { len: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Inversion(#[from] InversionFailure),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping iteration context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_inversion_failure(&self) -> bool {
        matches!(self.root(), Error::Inversion(_))
    }
}
