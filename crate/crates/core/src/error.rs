use thiserror::Error as ThisError;

/// Errors produced by fallible operations across the crate.
#[derive(Debug, ThisError)]
pub enum Error {
    /// Model construction or deserialization rejected its input.
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    /// Separation statistics are only defined for two or more components.
    #[error("need at least two components")]
    NeedTwoComponents,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    /// The Gaussian norm tail bound only holds for r >= 2*sqrt(d).
    #[error("bound invalid below 2\u{221a}d")]
    TailBoundDomain,
    /// Sphere covering bound needs a radius in (0, 2].
    #[error("covering radius out of range (0, 2]")]
    CoveringRadius,
    /// Gradient-stability constant evaluated at a radius >= R_min / 2.
    #[error("outside admissible radius")]
    OutsideAdmissibleRadius,
    /// No positive contraction radius certifies this separation.
    #[error("separation too small for certificate")]
    SeparationTooSmall,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
