use thiserror::Error;

/// Errors surfaced by the library. Domain/invalid-input errors indicate bad
/// caller data; `Internal` signals a broken invariant inside a construction.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal invariant failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
