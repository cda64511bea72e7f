use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the operation (MGF pole, bad rate, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// No free parameter satisfies the stability condition of the bound.
    #[error("unstable system: {0}")]
    Stability(String),
    /// The requested allocation or bound has no admissible solution.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A binomial (k,l) composition was requested for dependent servers.
    #[error("independence required: {0}")]
    Independence(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty sample: {0}")]
    Empty(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
