use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("iteration limit reached after {iterations} steps (last two values {previous} and {last})")]
    IterationLimit { iterations: usize, previous: f64, last: f64 },

    #[error("delayed argument {delayed} at t = {t} lies before the history domain starting at {history_start}")]
    UnderResolvedHistory { t: f64, delayed: f64, history_start: f64 },

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("adjacent zeros {a} and {b} are closer than the resolution {resolution}")]
    Resolution { a: f64, b: f64, resolution: f64 },

    #[error("insufficient window: {0}")]
    InsufficientWindow(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),
}
