use thiserror::Error;

/// Errors produced by the protocol, simulation and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("accumulator overflow: {0}")]
    Overflow(String),

    #[error("drift function has no sign change on ({lo}, {hi})")]
    NoRoot { lo: f64, hi: f64 },

    #[error("state space too large: {states} states exceeds limit {limit}")]
    Size { states: u128, limit: u128 },

    #[error("stationary solver failed: {0}")]
    Solver(String),

    #[error("no feasible point: {0}")]
    NoFeasiblePoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
