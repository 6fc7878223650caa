use thiserror::Error;

/// Errors raised by measure construction and the analyses built on top of it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} exceeds tree depth {depth}")]
    OutOfResolution { level: u32, depth: u32 },
    #[error("selection carries zero mass")]
    EmptyRestriction,
    #[error("measure has zero mass")]
    ZeroMass,
    #[error("cube {0} is outside the unit cube or has the wrong dimension")]
    InvalidCube(String),
    #[error("exponent s = {s} must lie in (0, {dim})")]
    InvalidExponent { s: f64, dim: u32 },
    #[error("2^{0} is not representable in this scalar mode")]
    NotRepresentable(f64),
    #[error("tree is inconsistent: {0}")]
    Inconsistent(String),
    #[error("measure is not normalized (total {0})")]
    NotNormalized(f64),
    #[error("point is too close to the support (distance {distance:.3e} < {required:.3e})")]
    Separation { distance: f64, required: f64 },
    #[error("direction between coincident points")]
    CoincidentPoints,
    #[error("invalid scale schedule: {0}")]
    InvalidSchedule(String),
    #[error("trees have mismatched shapes: {0}")]
    MismatchedTrees(String),
    #[error("candidate list is empty")]
    EmptyCandidates,
    #[error("point lies outside the support")]
    OutsideSupport,
    #[error("generator went extinct after {0} attempts")]
    Extinction(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("measure file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
