use crate::map::MapKind;

/// Errors raised by the fusion pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("expected a {expected:?} map, got {actual:?}")]
    KindMismatch { expected: MapKind, actual: MapKind },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("reduction over an empty domain")]
    EmptyDomain,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid value: {0}")]
    InvalidValue(&'static str),
    #[error("need at least 3 non-collinear support pixels")]
    DegenerateSupport,
    #[error("prediction and radar maps share no valid pixel")]
    EmptyOverlap,
    #[error("normal equations are singular")]
    SingularSystem,
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no sign change of the derivative inside [1e-6, 1e6]")]
    NoBracket,
    #[error("fitted scale {0} is not positive")]
    NonPositiveScale(f64),
    #[error("point projects outside the image")]
    OutOfView,
    #[error("patch {patch:?} larger than image {image:?}")]
    PatchTooLarge {
        patch: (usize, usize),
        image: (usize, usize),
    },
    #[error("scene has no surfaces")]
    EmptyScene,
    #[error("mono distortion scale must be positive")]
    InvalidDistortion,
    #[error("loss became non-finite at iteration {iteration}")]
    DivergenceDetected { iteration: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
