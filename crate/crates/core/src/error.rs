use thiserror::Error;

use crate::belief::BeliefError;
use crate::domains::vr::MapError;
use crate::planner::PlanError;
use crate::rulelang::{EvalError, ParseError};
use crate::rulelearn::LearnError;
use crate::shield::ShieldError;
use crate::stats::StatsError;
use crate::tracelog::XesError;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Shield(#[from] ShieldError),
    #[error(transparent)]
    Xes(#[from] XesError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
