use thiserror::Error;

use crate::basis::Domain;

/// Errors raised by the numerical library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("basis degree must be at least 1")]
    DegenerateBasis,

    #[error("basis index {index} out of range for basis of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("point is not valid for the {0:?} domain")]
    InvalidPoint(Domain),

    #[error("Legendre argument {0} outside [-1, 1]")]
    LegendreDomain(f64),

    #[error("quadrature resolution {got} below the minimum of {min}")]
    ResolutionTooLow { got: usize, min: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("domain mismatch: {0:?} vs {1:?}")]
    DomainMismatch(Domain, Domain),

    #[error("basis mismatch between coefficient vectors")]
    BasisMismatch,

    #[error("bandwidth must be at least {min}, got {got}")]
    InvalidBandwidth { got: f64, min: f64 },

    #[error("series cutoff must be at least 1")]
    InvalidCutoff,

    #[error("empty sample set")]
    EmptySamples,

    #[error("smoothness level must be positive and finite, got {0}")]
    InvalidKappa(f64),

    #[error("flow time {t} amplifies the top mode by {factor:e}, beyond the deblur limit")]
    DeblurOverflow { t: f64, factor: f64 },

    #[error("uniform density has zero roughness and lies on no section")]
    UniformDensity,

    #[error("points lie on different sections ({0} vs {1})")]
    SectionMismatch(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wrap interval has zero width")]
    ZeroRange,

    #[error("sample {value} outside wrap interval [{lo}, {hi}]")]
    OutOfInterval { value: f64, lo: f64, hi: f64 },

    #[error("circular sample has no declared cut point")]
    MissingCutPoint,

    #[error("bootstrap replicate {replicate} stayed uniform after {redraws} redraws")]
    DegenerateResample { replicate: usize, redraws: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
