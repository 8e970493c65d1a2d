//! The VPC protocol: plan construction, the observer-positioning guard, the
//! session engine that runs the schedule, and novelty-preference scoring.

mod engine;
mod guard;
mod plan;
mod score;

pub use engine::{run_session, EngineConfig, EngineEvent, SessionEngine, SessionResult, SessionStatus, AlarmRecord};
pub use guard::{observer_guard, ObserverGuard, ObserverState, ObserverStatus, ALARM_AFTER_INVALID, RECOVER_AFTER_VALID};
pub use plan::{
    build_plan, build_plan_with, FamiliarizationEntry, ItemKind, PairKind, PairSpec, PlanTiming, ScheduleItem,
    SessionPlan, DEFAULT_PROMPT, FAMILIAR_POOL, NOVEL_POOL, PAIRS_PER_KIND,
};
pub use score::{score, score_partial, PairRecord, PairTimes, Scoring, HEALTHY_REFERENCE};

use alloc::boxed::Box;
use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageRole {
    Familiar,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub path: String,
    pub role: ImageRole,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, path: impl Into<String>, role: ImageRole) -> Self {
        Self { id: id.into(), path: path.into(), role }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("pools hold {familiar} familiar and {novel} novel images, need 12 and 24")]
    PoolSizeMismatch { familiar: usize, novel: usize },
    #[error("image id {0:?} is used twice")]
    DuplicateId(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("no recorded interval for pair {0:?}")]
    MissingPair(String),
    #[error("session aborted by the operator")]
    AbortedByOperator(Box<SessionResult>),
    #[error("input ended after {stimulus_ms} ms of stimulus time")]
    StreamEnded { stimulus_ms: u64 },
}
