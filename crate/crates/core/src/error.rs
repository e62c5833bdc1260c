use thiserror::Error;

/// Errors produced by mesh construction, kernel evaluation and the solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    /// A lag-0 kernel weight was zero or negative, so the DOC recursion cannot proceed.
    #[error("singular kernel: lag-0 weight {value} at step {n}")]
    SingularKernel { n: usize, value: f64 },

    #[error("numerical failure after {iterations} iterations: {what}")]
    Numerical { what: String, iterations: usize },

    /// Operator applied outside its domain, e.g. the inverse Laplacian on a field with nonzero mean.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fixed-point iteration did not converge in {iterations} iterations (last update {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("step {tau:e} exceeds the solvability bound {bound:e}")]
    StepRestriction { tau: f64, bound: f64 },

    #[error("linear splitting symbol is not positive (min {min_symbol:e})")]
    Splitting { min_symbol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
