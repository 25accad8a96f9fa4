//! Crate-wide error type.

use std::fmt;

/// Errors produced by solvers, tableau validation, and the CLI layer.
#[derive(Debug, Clone)]
pub enum Error {
    /// Matrix is singular to working precision (pivot below tolerance).
    SingularMatrix { pivot: f64, scale: f64 },
    /// Newton iteration failed to reach the tolerance.
    NewtonFailure {
        residual: f64,
        tol: f64,
        iters: usize,
        context: String,
    },
    /// Mismatched vector/matrix dimensions.
    DimensionMismatch { expected: usize, got: usize, what: String },
    /// Step size fell below the controller's minimum.
    StepSizeUnderflow { t: f64, h: f64, h_min: f64 },
    /// A method id, problem id, or configuration field did not resolve.
    InvalidConfig(String),
    /// A quarantined registry entry was asked to run.
    Quarantined(String),
    /// The requested combination of scheme and strategy is not defined.
    UnsupportedCombination(String),
    /// Inner (infinitesimal) solve failed.
    InnerSolveFailure(String),
    /// Problem parameters are outside the admissible range.
    BadParameter(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SingularMatrix { pivot, scale } => {
                write!(f, "singular matrix: pivot {pivot:.3e} below tolerance for scale {scale:.3e}")
            }
            Error::NewtonFailure { residual, tol, iters, context } => write!(
                f,
                "Newton did not converge in {iters} iterations ({context}): residual {residual:.3e} > tol {tol:.3e}"
            ),
            Error::DimensionMismatch { expected, got, what } => {
                write!(f, "dimension mismatch in {what}: expected {expected}, got {got}")
            }
            Error::StepSizeUnderflow { t, h, h_min } => {
                write!(f, "step size underflow at t = {t:.6e}: H = {h:.3e} < H_min = {h_min:.3e}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::Quarantined(name) => write!(f, "method '{name}' is quarantined; see `mrode validate`"),
            Error::UnsupportedCombination(msg) => write!(f, "unsupported combination: {msg}"),
            Error::InnerSolveFailure(msg) => write!(f, "inner solve failed: {msg}"),
            Error::BadParameter(msg) => write!(f, "bad parameter: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
