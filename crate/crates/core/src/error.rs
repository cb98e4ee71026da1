use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },
    #[error("n = {n} exceeds the {limit} limit of {what}")]
    CapExceeded { what: &'static str, n: u64, limit: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
