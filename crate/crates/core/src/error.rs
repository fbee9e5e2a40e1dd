//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A tensor/layer operation received an input of the wrong shape.
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    /// A vector had the wrong width (latent length, fusion input, ...).
    WidthMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },
    /// A grid extent is not divisible by the patch extent.
    NotDivisible {
        extent: usize,
        patch: usize,
        remainder: usize,
    },
    /// A subdomain lattice is missing the patch at the given coordinates.
    MissingPatch { coords: Vec<usize> },
    /// An explicit scheme was asked to run outside its stability bound.
    Stability {
        scheme: &'static str,
        cfl: f64,
        limit: f64,
    },
    /// A laser path way-segment leaves the domain.
    PathOutOfDomain { segment: usize, x: f64, y: f64 },
    /// A value that must be finite is NaN or infinite.
    NonFinite { context: String },
    /// A rollout step produced a non-finite latent.
    NonFiniteLatent { timestep: usize },
    /// An optimizer step saw a non-finite gradient.
    NonFiniteGradient { param: String },
    /// Training loss became non-finite; the last good checkpoint was kept.
    Diverged { epoch: usize },
    /// A time-history window had the wrong length.
    HistoryLength { expected: usize, actual: usize },
    /// A container file is malformed (bad magic, version, truncation, ...).
    Format { message: String },
    /// A config failed validation before any work started.
    InvalidConfig { message: String },
    Io(std::io::Error),
}

impl Error {
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            message: message.into(),
        }
    }

    pub fn format(message: impl Into<String>) -> Self {
        Error::Format {
            message: message.into(),
        }
    }

    /// Process exit code convention: 1 = validation failure, 2 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stability { .. }
            | Error::NonFinite { .. }
            | Error::NonFiniteLatent { .. }
            | Error::NonFiniteGradient { .. }
            | Error::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch {
                context,
                expected,
                actual,
            } => write!(
                f,
                "{context}: shape mismatch, expected {expected:?}, got {actual:?}"
            ),
            Error::WidthMismatch {
                context,
                expected,
                actual,
            } => write!(
                f,
                "{context}: width mismatch, expected {expected}, got {actual}"
            ),
            Error::NotDivisible {
                extent,
                patch,
                remainder,
            } => write!(
                f,
                "grid extent {extent} is not divisible by patch extent {patch} (remainder {remainder})"
            ),
            Error::MissingPatch { coords } => {
                write!(f, "lattice is missing the patch at {coords:?}")
            }
            Error::Stability { scheme, cfl, limit } => write!(
                f,
                "{scheme}: stability bound violated, CFL number {cfl:.6} exceeds {limit}"
            ),
            Error::PathOutOfDomain { segment, x, y } => write!(
                f,
                "laser path segment {segment} leaves the domain at ({x}, {y})"
            ),
            Error::NonFinite { context } => write!(f, "{context}: non-finite value"),
            Error::NonFiniteLatent { timestep } => {
                write!(f, "rollout produced a non-finite latent at timestep {timestep}")
            }
            Error::NonFiniteGradient { param } => {
                write!(f, "non-finite gradient for parameter `{param}`")
            }
            Error::Diverged { epoch } => {
                write!(f, "training loss became non-finite at epoch {epoch}")
            }
            Error::HistoryLength { expected, actual } => write!(
                f,
                "time history has {actual} entries, the model needs exactly {expected}"
            ),
            Error::Format { message } => write!(f, "container format error: {message}"),
            Error::InvalidConfig { message } => write!(f, "invalid config: {message}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
