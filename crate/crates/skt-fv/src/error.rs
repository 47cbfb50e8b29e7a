//! Error type shared across the crate.

use std::fmt;

/// Errors produced by grid construction, kernel discretization, solvers and
/// the run drivers.
#[derive(Debug, Clone)]
pub enum Error {
    /// A configuration value is rejected (degenerate mesh, unsupported kernel
    /// for a grid, mismatched shapes, unknown config key, ...).
    InvalidConfig(String),
    /// An input is outside the mathematical domain of an operation
    /// (negative density passed to the entropy, mass mismatch, ...).
    Domain(String),
    /// A structural bound does not apply because its time step condition
    /// or kernel regularity requirement is violated. This is not a failure
    /// of the scheme itself.
    BoundInapplicable(String),
    /// A linear solve broke down (singular pivot, stalled iteration).
    LinearSolve(String),
    /// Newton did not converge within the iteration budget; the caller may
    /// retry with a smaller time step.
    NewtonStalled { iterations: usize, residual: f64 },
    /// A time step failed even after the maximum number of dt halvings.
    HardFailure {
        time: f64,
        dt: f64,
        halvings: usize,
        residual: f64,
    },
    /// The per-step entropy balance exceeded its solver-accuracy slack on a
    /// run where the entropy check was requested.
    EntropyViolation { step: usize, balance: f64, slack: f64 },
    /// I/O error while writing run outputs.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::BoundInapplicable(msg) => write!(f, "bound inapplicable: {msg}"),
            Error::LinearSolve(msg) => write!(f, "linear solver failure: {msg}"),
            Error::NewtonStalled { iterations, residual } => write!(
                f,
                "Newton stalled after {iterations} iterations (residual {residual:.3e})"
            ),
            Error::HardFailure { time, dt, halvings, residual } => write!(
                f,
                "step at t = {time:.6} failed after {halvings} dt halvings \
                 (dt = {dt:.3e}, residual {residual:.3e})"
            ),
            Error::EntropyViolation { step, balance, slack } => write!(
                f,
                "entropy balance {balance:.3e} exceeds solver slack {slack:.3e} at step {step}"
            ),
            Error::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
