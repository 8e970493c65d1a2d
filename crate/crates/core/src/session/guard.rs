use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gaze::{GazeSample, InvalidReason};

/// Consecutive invalid samples that put the session on hold.
pub const ALARM_AFTER_INVALID: u32 = 10;
/// Consecutive valid samples that release the hold.
pub const RECOVER_AFTER_VALID: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverState {
    Ok,
    AlarmStandby,
}

/// `reason` is set exactly when the state is `AlarmStandby`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverStatus {
    pub state: ObserverState,
    pub reason: Option<InvalidReason>,
    pub since_ms: u64,
}

impl ObserverStatus {
    pub fn is_ok(&self) -> bool {
        self.state == ObserverState::Ok
    }
}

/// Hysteresis on sample validity.
#[derive(Debug, Clone)]
pub struct ObserverGuard {
    status: ObserverStatus,
    invalid_run: u32,
    valid_run: u32,
}

impl Default for ObserverGuard {
    fn default() -> Self {
        Self::new(0)
    }
}

impl ObserverGuard {
    pub fn new(t_ms: u64) -> Self {
        Self {
            status: ObserverStatus { state: ObserverState::Ok, reason: None, since_ms: t_ms },
            invalid_run: 0,
            valid_run: 0,
        }
    }

    pub fn status(&self) -> ObserverStatus {
        self.status
    }

    /// Feeds one sample; returns the new status when it changed.
    pub fn update(&mut self, sample: &GazeSample) -> Option<ObserverStatus> {
        if sample.valid {
            self.invalid_run = 0;
            self.valid_run += 1;
            if !self.status.is_ok() && self.valid_run >= RECOVER_AFTER_VALID {
                self.status = ObserverStatus { state: ObserverState::Ok, reason: None, since_ms: sample.t_ms };
                return Some(self.status);
            }
        } else {
            self.valid_run = 0;
            self.invalid_run += 1;
            if self.status.is_ok() && self.invalid_run >= ALARM_AFTER_INVALID {
                let reason = sample.invalid_reason.unwrap_or(InvalidReason::NoFace);
                self.status = ObserverStatus { state: ObserverState::AlarmStandby, reason: Some(reason), since_ms: sample.t_ms };
                return Some(self.status);
            }
        }
        None
    }
}

/// Status transitions over a whole sample stream.
pub fn observer_guard(samples: &[GazeSample]) -> Vec<ObserverStatus> {
    let mut guard = ObserverGuard::new(samples.first().map_or(0, |s| s.t_ms));
    samples.iter().filter_map(|s| guard.update(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(pattern: &[(bool, usize)]) -> Vec<GazeSample> {
        let mut out = Vec::new();
        for &(valid, n) in pattern {
            for _ in 0..n {
                let k = out.len() as u64;
                out.push(if valid {
                    GazeSample::valid(k, k * 33, 0.5)
                } else {
                    GazeSample::invalid(k, k * 33, InvalidReason::EyesNotFound)
                });
            }
        }
        out
    }

    #[test]
    fn valid_stream_never_alarms() {
        assert!(observer_guard(&samples(&[(true, 500)])).is_empty());
    }

    #[test]
    fn alarm_then_recovery() {
        let t = observer_guard(&samples(&[(false, 10), (true, 15)]));
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].state, ObserverState::AlarmStandby);
        assert_eq!(t[0].reason, Some(InvalidReason::EyesNotFound));
        assert_eq!(t[0].since_ms, 9 * 33);
        assert_eq!(t[1], ObserverStatus { state: ObserverState::Ok, reason: None, since_ms: 24 * 33 });
    }

    #[test]
    fn nine_invalid_is_not_enough() {
        assert!(observer_guard(&samples(&[(false, 9), (true, 1), (false, 9)])).is_empty());
    }

    #[test]
    fn flicker_never_alarms() {
        let pattern: Vec<(bool, usize)> = (0..40).map(|i| (i % 2 == 1, 5)).collect();
        assert!(observer_guard(&samples(&pattern)).is_empty());
    }
}
