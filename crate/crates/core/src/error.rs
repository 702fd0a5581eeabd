use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight {weight} on edge ({u}, {v})")]
    NegativeWeight { u: i64, v: i64, weight: f64 },

    #[error("root {0} has zero measure after pruning")]
    RootIsolated(i64),

    #[error("root {0} is a frame vertex")]
    RootInFrame(i64),

    #[error("unknown vertex {0}")]
    UnknownVertex(i64),

    #[error("vertices {0} and {1} are not joined by any path")]
    Unreachable(i64, i64),

    #[error("region has no exit: boundary measure is zero")]
    NoExit,

    #[error("region is not connected")]
    NotConnected,

    #[error("root is not in the region")]
    RootNotInRegion,

    #[error("region contains frame vertex {0}")]
    FrameInRegion(i64),

    #[error("region is not contained in the ambient region")]
    RegionNotContained,

    #[error("linear solve stalled at residual {residual:e} (target {target:e})")]
    SolverFailed { residual: f64, target: f64 },

    #[error("transient comparison curve unsupported for {0}")]
    TransientUnsupported(String),

    #[error("no closed-form bound for {0}")]
    UnsupportedCombination(String),

    #[error("enumeration exceeded budget of {0} sets")]
    BudgetExceeded(u64),

    #[error("{truncated} of {trials} trials hit the horizon")]
    ExcessiveTruncation { truncated: u64, trials: u64 },

    #[error("regression needs at least two distinct sizes")]
    DegenerateRegression,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
