//! Error type shared by all numerical modules.

use std::fmt;

/// Errors reported by the numerical kernels.
#[derive(Debug)]
pub enum Error {
    /// A field's component count or node count does not match what the
    /// operation expects.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// A field was built on a different grid than the one supplied.
    GridMismatch { what: &'static str },
    /// A director (unit-vector) field has a node with (near-)zero length,
    /// so it cannot be normalized.
    DegenerateDirector { node: usize, norm: f64 },
    /// A matrix that must be symmetric is not, beyond tolerance.
    NotSymmetric { deviation: f64 },
    /// A matrix that must be symmetric positive definite has a
    /// non-positive eigenvalue.
    NotSpd { min_eigenvalue: f64 },
    /// An orientation-preserving matrix argument has non-positive
    /// determinant.
    OrientationLoss { det: f64 },
    /// The demagnetization axis (adj F) lam is numerically zero.
    DegenerateAxis,
    /// A query time lies outside the load schedule.
    TimeOutOfRange { t: f64, t_first: f64, t_last: f64 },
    /// An index window over a trace is empty.
    EmptyWindow,
    /// An incremental step could not meet its suboptimality budget even
    /// after smoothing refinements.
    StepQuality { gap: f64, budget: f64 },
    /// Spectral transforms need power-of-two periodic sample counts.
    NonPowerOfTwo { n: usize },
    /// A field handed to the periodic machinery does not wrap around.
    PeriodicWrap { deviation: f64 },
    /// An iterative linear solve failed to reach its tolerance.
    SolverDiverged { what: &'static str, residual: f64 },
    /// A constructor argument violates a documented invariant.
    InvalidParameter { what: String },
    /// Field dump I/O failed.
    Io(std::io::Error),
    /// A field dump could not be parsed.
    Parse { line: usize, msg: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                got,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, got {got}"),
            Error::GridMismatch { what } => write!(f, "grid mismatch in {what}"),
            Error::DegenerateDirector { node, norm } => {
                write!(f, "degenerate director at node {node}: norm {norm:e}")
            }
            Error::NotSymmetric { deviation } => {
                write!(f, "matrix not symmetric: deviation {deviation:e}")
            }
            Error::NotSpd { min_eigenvalue } => {
                write!(f, "matrix not positive definite: min eigenvalue {min_eigenvalue:e}")
            }
            Error::OrientationLoss { det } => {
                write!(f, "orientation lost: determinant {det:e} <= 0")
            }
            Error::DegenerateAxis => write!(f, "degenerate demagnetization axis"),
            Error::TimeOutOfRange { t, t_first, t_last } => {
                write!(f, "time {t} outside schedule [{t_first}, {t_last}]")
            }
            Error::EmptyWindow => write!(f, "empty index window"),
            Error::StepQuality { gap, budget } => write!(
                f,
                "incremental step rejected: suboptimality gap {gap:e} exceeds budget {budget:e}"
            ),
            Error::NonPowerOfTwo { n } => {
                write!(f, "periodic sample count {n} is not a power of two")
            }
            Error::PeriodicWrap { deviation } => {
                write!(f, "field is not periodic: wrap deviation {deviation:e}")
            }
            Error::SolverDiverged { what, residual } => {
                write!(f, "{what} did not converge: residual {residual:e}")
            }
            Error::InvalidParameter { what } => write!(f, "invalid parameter: {what}"),
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
