use thiserror::Error;

/// Errors raised by the simulation, transfer and reconstruction routines.
///
/// Numerical failures carry the name of the operation that detected them so
/// front ends can report which stage of a pipeline broke.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{op}: input series have different lengths ({left} vs {right})")]
    LengthMismatch {
        op: &'static str,
        left: usize,
        right: usize,
    },

    #[error("{op}: grids are incompatible: {reason}")]
    GridMismatch { op: &'static str, reason: String },

    #[error("{op}: frequency {omega} is not on the grid")]
    OffGrid { op: &'static str, omega: f64 },

    #[error("{op}: frequency {omega} lies outside the grid and the spectrum support is unknown")]
    UnknownSupport { op: &'static str, omega: f64 },

    #[error("{op}: pole at frequency {omega}")]
    Pole { op: &'static str, omega: f64 },

    #[error("{op}: zero-frequency sample has imaginary part {imag} (relative {relative:.3e})")]
    ComplexDcSample {
        op: &'static str,
        imag: f64,
        relative: f64,
    },

    #[error("{op}: transfer gain {magnitude:e} at frequency {omega} is below the conditioning threshold")]
    IllConditioned {
        op: &'static str,
        omega: f64,
        magnitude: f64,
    },

    #[error("{op}: residual check failed (relative residual {residual:.3e} > tolerance {tolerance:.1e}); the term limit is too small for the force support")]
    ResidualCheck {
        op: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("{op}: measurement rate k = 0 makes the measurement-noise term infinite")]
    InfiniteBudget { op: &'static str },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad inputs rather than numerical breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. } | Error::LengthMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
