use thiserror::Error;

/// Errors raised by the measure, geometry and corona routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("measure has no atoms")]
    EmptyMeasure,
    #[error("support is empty")]
    EmptySupport,
    #[error("square has zero side length")]
    ZeroSideLength,
    #[error("inner square is not contained in the outer square")]
    NotNested,
    #[error("square carries no mass")]
    EmptySquare,
    #[error("candidate {index}: center does not lie in the half square")]
    CenterNotInHalf { index: usize },
    #[error("comparability precondition |x'-y| ~ |x-y| fails for C6 = {c6}")]
    Inapplicable { c6: f64 },
    #[error("atom index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("vector has {got} entries, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eps = {eps} is not below the minimum pairwise distance {min_distance}")]
    EpsTooLarge { eps: f64, min_distance: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("square {index} meets the curve in a set of zero length")]
    CurveMissesSquare { index: usize },
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("map undefined: {0}")]
    MapUndefined(String),
    #[error("need at least two distinct atoms")]
    TooFewAtoms,
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
