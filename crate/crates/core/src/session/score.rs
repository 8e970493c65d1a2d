use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::plan::{PairKind, SessionPlan};
use super::SessionError;

/// Novelty preference typical of healthy adults, shown next to results.
pub const HEALTHY_REFERENCE: f64 = 0.70;

/// Fixation time per side over one pair's display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTimes {
    pub pair_id: String,
    pub left_ms: u64,
    pub right_ms: u64,
    /// Valid-sample time per side, for comparison with fixation time.
    #[serde(default)]
    pub raw_left_ms: f64,
    #[serde(default)]
    pub raw_right_ms: f64,
    /// Display intervals on the measurement clock.
    #[serde(default)]
    pub display: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair_id: String,
    pub kind: PairKind,
    pub left_ms: u64,
    pub right_ms: u64,
    pub novel_ms: u64,
    pub known_ms: u64,
    /// Present for pairs with a familiar image and some fixation time.
    pub novelty_fraction: Option<f64>,
    pub raw_left_ms: f64,
    pub raw_right_ms: f64,
    pub display: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub pairs: Vec<PairRecord>,
    /// Total novel time over total novel-plus-known time across known pairs.
    pub novelty_preference: Option<f64>,
}

/// Scores a complete session: every pair of the plan must have times.
pub fn score(times: &[PairTimes], plan: &SessionPlan) -> Result<Scoring, SessionError> {
    if let Some(p) = plan.test_pairs.iter().find(|p| !times.iter().any(|t| t.pair_id == p.id)) {
        return Err(SessionError::MissingPair(p.id.clone()));
    }
    score_partial(times, plan)
}

/// Scores whatever pairs have times, in plan order.
pub fn score_partial(times: &[PairTimes], plan: &SessionPlan) -> Result<Scoring, SessionError> {
    if let Some(t) = times.iter().find(|t| plan.pair(&t.pair_id).is_none()) {
        return Err(SessionError::InvalidPlan("times for a pair the plan does not have: ".to_string() + &t.pair_id));
    }
    let mut pairs = Vec::new();
    let (mut novel_sum, mut total_sum) = (0u64, 0u64);
    for spec in &plan.test_pairs {
        let Some(t) = times.iter().find(|t| t.pair_id == spec.id) else {
            continue;
        };
        let (novel_ms, known_ms) = match spec.kind {
            PairKind::KnownRight => (t.left_ms, t.right_ms),
            PairKind::KnownLeft => (t.right_ms, t.left_ms),
            PairKind::BothNew => (t.left_ms + t.right_ms, 0),
        };
        let counted = spec.kind != PairKind::BothNew && novel_ms + known_ms > 0;
        if counted {
            novel_sum += novel_ms;
            total_sum += novel_ms + known_ms;
        }
        pairs.push(PairRecord {
            pair_id: spec.id.clone(),
            kind: spec.kind,
            left_ms: t.left_ms,
            right_ms: t.right_ms,
            novel_ms,
            known_ms,
            novelty_fraction: counted.then(|| novel_ms as f64 / (novel_ms + known_ms) as f64),
            raw_left_ms: t.raw_left_ms,
            raw_right_ms: t.raw_right_ms,
            display: t.display.clone(),
        });
    }
    let novelty_preference = (total_sum > 0).then(|| novel_sum as f64 / total_sum as f64);
    Ok(Scoring { pairs, novelty_preference })
}
