use thiserror::Error;

use crate::construct::Transcript;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("support mismatch: {0}")]
    SupportMismatch(String),
    #[error("conditioning mismatch: Z marginals differ at {0}")]
    ConditioningMismatch(String),
    #[error("enumeration limit: {what} has size {size}, limit is {limit}")]
    EnumerationLimit {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("precision too coarse: grid denominator would be {0}")]
    PrecisionTooCoarse(i64),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("density undefined for an empty vertex set (edge count {count})")]
    DensityUndefined { count: u64 },
    #[error("structural failure: {0}")]
    Structural(String),
    #[error("range mismatch: {0}")]
    RangeMismatch(String),
    #[error("inconsistent parameters: {0}")]
    Construction(String),
    #[error("internal invariant violated: {0}")]
    InternalInvariant(String),
    #[error("empty sample list")]
    EmptySamples,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("sampled construction exceeded its iteration cap after {} iterations", .0.iterations.len())]
    SampledFailure(Box<Transcript>),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
