use core::fmt;

/// Errors surfaced by the numeric pipeline.
///
/// Recoverable conditions (a pair with no saddle, a non-converged flow) are
/// reported through result payloads instead; these variants are for calls
/// whose preconditions were violated or whose linear algebra failed outright.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Error {
    /// Input shape or parameter outside the documented domain.
    InvalidArgument(&'static str),
    /// Matrix expected to be symmetric positive definite was not.
    NotPositiveDefinite,
    /// Iterative routine exhausted its iteration budget.
    NoConvergence(&'static str),
    /// Non-finite value encountered where finite data is required.
    NonFinite(&'static str),
    /// Fit cannot produce a usable model (e.g. identical rows with K > 1).
    DegenerateFit(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(what) => write!(f, "invalid argument: {what}"),
            Error::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            Error::NoConvergence(what) => write!(f, "no convergence: {what}"),
            Error::NonFinite(what) => write!(f, "non-finite value: {what}"),
            Error::DegenerateFit(what) => write!(f, "degenerate fit: {what}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
