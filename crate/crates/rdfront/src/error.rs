//! Crate-wide error type.

use std::fmt;

/// Errors produced by mesh handling, decomposition, assembly, solvers and I/O.
#[derive(Debug)]
pub enum Error {
    /// Invalid geometric input (containment, degenerate sizes, ...).
    Geometry(String),
    /// A resource budget (element count, memory cap) was exceeded.
    Resource(String),
    /// Malformed input file; carries the 1-based line number when known.
    Parse { line: usize, msg: String },
    /// Structurally invalid data (out-of-range index, negative volume, NaN, ...).
    Validation(String),
    /// Invalid argument to an operation.
    Argument(String),
    /// Vectors or operators do not conform to the decomposition.
    Conformance(String),
    /// A subdomain-local factorization or solve failed.
    SingularSubdomain { subdomain: usize, msg: String },
    /// A subdomain worker reported a failure; the message carries the
    /// underlying error.
    Worker { worker: usize, msg: String },
    /// Iterative solver failure; the best iterate found is retained.
    Solve(crate::linsolve::SolveError),
    /// Configuration file problem; names the offending key.
    Config { key: String, msg: String },
    /// Underlying I/O failure.
    Io(std::io::Error),
    /// Failure during a simulation step, with step and equation context.
    Step {
        step: usize,
        pde: &'static str,
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Geometry(m) => write!(f, "geometry error: {m}"),
            Error::Resource(m) => write!(f, "resource error: {m}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Validation(m) => write!(f, "validation error: {m}"),
            Error::Argument(m) => write!(f, "argument error: {m}"),
            Error::Conformance(m) => write!(f, "conformance error: {m}"),
            Error::SingularSubdomain { subdomain, msg } => {
                write!(f, "singular subdomain {subdomain}: {msg}")
            }
            Error::Worker { worker, msg } => write!(f, "worker {worker}: {msg}"),
            Error::Solve(e) => write!(f, "solver error: {e}"),
            Error::Config { key, msg } => write!(f, "config error for key `{key}`: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Step { step, pde, source } => {
                write!(f, "step {step}, {pde} equation: {source}")
            }
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<crate::linsolve::SolveError> for Error {
    fn from(e: crate::linsolve::SolveError) -> Self {
        Error::Solve(e)
    }
}

impl Error {
    /// Attach time-loop context to an error.
    pub fn in_step(self, step: usize, pde: &'static str) -> Self {
        Error::Step {
            step,
            pde,
            source: Box::new(self),
        }
    }
}
