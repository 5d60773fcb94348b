use thiserror::Error;

use crate::lpp::LatticePoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("box is empty or exceeds {limit} sites per side")]
    BoxTooLarge { limit: i64 },
    #[error("unknown weight distribution `{0}`")]
    UnknownDistribution(String),
    #[error("point {0:?} lies outside the box")]
    OutOfBox(LatticePoint),
    #[error("two maximizing paths agree within tolerance at {at:?}")]
    Tie { at: LatticePoint },
    #[error("invalid step from {from:?} to {to:?}")]
    InvalidStep { from: LatticePoint, to: LatticePoint },
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
    #[error("{0:?} is unreachable")]
    Unreachable(LatticePoint),
    #[error("value at {at:?} did not stabilize between horizons")]
    NotStabilized { at: LatticePoint },
    #[error("horizon target {target:?} falls outside the field box")]
    HorizonOutsideBox { target: LatticePoint },
    #[error("windows or fields do not match: {0}")]
    Mismatch(String),
    #[error("vertex {0:?} is excluded from the switching graph")]
    Excluded(LatticePoint),
    #[error("greedy decomposition stuck at {at:?}")]
    Stuck { at: LatticePoint },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("profile is not monotone between x={left} and x={right}")]
    NotMonotone { left: i32, right: i32 },
    #[error("coalescence classes are not intervals on row {level}")]
    ClassesNotIntervals { level: i32 },
    #[error("no anchor found within search width {width}")]
    NotFound { width: usize },
    #[error("cover scale {0} violates the gauge guard")]
    ScaleGuard(f64),
    #[error("sup/inf duality mismatch: {0}")]
    DualityMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
