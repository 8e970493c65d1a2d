use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::guard::{ObserverGuard, ObserverState, ObserverStatus};
use super::plan::{ItemKind, ScheduleItem, SessionPlan};
use super::score::{score, score_partial, PairRecord, PairTimes, HEALTHY_REFERENCE};
use super::SessionError;
use crate::fixation::{detect_fixations, raw_side_times, side_times, FixationParams, Side};
use crate::frame::Channel;
use crate::gaze::{GazeSample, InvalidReason};
use crate::pipeline::FrameOutput;
use crate::ppg::{bridge_gaps, hrv_over_segments, HrvSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub patient_id: String,
    pub fps: f64,
    pub fixation: FixationParams,
    /// Stop the stimulus clock while the observer guard is in alarm.
    pub pause_on_alarm: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { patient_id: String::new(), fps: 30.0, fixation: FixationParams::default(), pause_on_alarm: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EngineEvent {
    /// A schedule item starts showing at `t_ms` on the measurement clock.
    Stimulus { t_ms: u64, item: ScheduleItem },
    Status { t_ms: u64, status: ObserverStatus },
    Finished { t_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Complete,
    Aborted,
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub t_ms: u64,
    pub reason: InvalidReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub patient_id: String,
    pub plan_hash: String,
    pub status: SessionStatus,
    pub started_ms: Option<u64>,
    pub ended_ms: Option<u64>,
    pub pairs: Vec<PairRecord>,
    pub novelty_preference: Option<f64>,
    pub healthy_reference: f64,
    pub hrv: Option<HrvSummary>,
    pub alarms: Vec<AlarmRecord>,
    /// `(t_start_ms, t_end_ms, mean_x, side)` per fixation.
    pub fixations: Vec<(u64, u64, f64, Side)>,
    /// Live heart-rate estimates as `(t_ms, bpm)`.
    pub bpm_series: Vec<(u64, f64)>,
    /// Where the per-frame trace was stored, once it was.
    pub gaze_trace: Option<String>,
}

/// Drives a plan's schedule from the per-frame measurement stream.
///
/// The stimulus clock advances with sample timestamps while the observer is
/// in position and stands still during an alarm, so every item is shown
/// for exactly its planned time. Item boundaries that fall between two
/// samples are placed at the exact millisecond.
#[derive(Debug, Clone)]
pub struct SessionEngine {
    plan: SessionPlan,
    plan_hash: String,
    schedule: Vec<ScheduleItem>,
    config: EngineConfig,
    guard: ObserverGuard,
    started: Option<u64>,
    now: u64,
    stim: u64,
    idx: usize,
    open_since: Option<u64>,
    segments: Vec<Vec<(u64, u64)>>,
    samples: Vec<GazeSample>,
    green: Vec<(u64, Option<f64>)>,
    bpm_series: Vec<(u64, f64)>,
    alarms: Vec<AlarmRecord>,
    ended: Option<(u64, SessionStatus)>,
}

impl SessionEngine {
    pub fn new(plan: SessionPlan, config: EngineConfig) -> Result<Self, SessionError> {
        plan.validate_structure()?;
        let schedule = plan.schedule();
        Ok(Self {
            plan_hash: plan.hash(),
            segments: vec![Vec::new(); schedule.len()],
            schedule,
            plan,
            config,
            guard: ObserverGuard::new(0),
            started: None,
            now: 0,
            stim: 0,
            idx: 0,
            open_since: None,
            samples: Vec::new(),
            green: Vec::new(),
            bpm_series: Vec::new(),
            alarms: Vec::new(),
            ended: None,
        })
    }

    pub fn plan(&self) -> &SessionPlan {
        &self.plan
    }

    pub fn schedule(&self) -> &[ScheduleItem] {
        &self.schedule
    }

    pub fn status(&self) -> ObserverStatus {
        self.guard.status()
    }

    /// Stimulus time elapsed so far.
    pub fn stimulus_ms(&self) -> u64 {
        self.stim
    }

    pub fn is_ended(&self) -> bool {
        self.ended.is_some()
    }

    /// The item on screen, if the session is running.
    pub fn current_item(&self) -> Option<ScheduleItem> {
        match self.ended {
            None if self.started.is_some() => self.schedule.get(self.idx).copied(),
            _ => None,
        }
    }

    /// Feeds one frame's measurements. Frames must arrive in time order;
    /// anything after the end of the session is ignored.
    pub fn push(&mut self, out: &FrameOutput) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        let t = out.sample.t_ms;
        if !self.clock_to(t, &mut events) {
            return events;
        }
        self.samples.push(out.sample);
        self.green.push((t, out.ppg_rgb.map(|c| c[Channel::G.offset()])));
        if let Some(p) = out.pulse {
            self.bpm_series.push((t, p.bpm));
        }
        if let Some(status) = self.guard.update(&out.sample) {
            events.push(EngineEvent::Status { t_ms: t, status });
            match status.state {
                ObserverState::AlarmStandby => {
                    self.alarms.push(AlarmRecord { t_ms: t, reason: status.reason.unwrap_or(InvalidReason::NoFace) });
                    if self.config.pause_on_alarm {
                        self.close_segment(t);
                    }
                }
                ObserverState::Ok => {
                    if self.config.pause_on_alarm {
                        self.open_since = Some(t);
                    }
                }
            }
        }
        events
    }

    /// Moves the schedule to `t_ms` without a measurement, as when frames
    /// are only recorded for later processing. The clock never pauses here.
    pub fn tick(&mut self, t_ms: u64) -> Vec<EngineEvent> {
        let mut events = Vec::new();
        self.clock_to(t_ms, &mut events);
        events
    }

    // Advances the stimulus clock; false when the instant is not part of
    // the session.
    fn clock_to(&mut self, t: u64, events: &mut Vec<EngineEvent>) -> bool {
        if self.ended.is_some() {
            return false;
        }
        match self.started {
            None => {
                self.started = Some(t);
                self.now = t;
                self.guard = ObserverGuard::new(t);
                match self.schedule.first() {
                    Some(&item) => {
                        self.open_since = Some(t);
                        events.push(EngineEvent::Stimulus { t_ms: t, item });
                        true
                    }
                    None => {
                        self.ended = Some((t, SessionStatus::Complete));
                        events.push(EngineEvent::Finished { t_ms: t });
                        false
                    }
                }
            }
            Some(_) if t <= self.now => false,
            Some(_) => {
                if self.running() {
                    self.advance(t, events);
                } else {
                    self.now = t;
                }
                self.ended.is_none()
            }
        }
    }

    /// Ends the session early at `t_ms`.
    pub fn abort(&mut self, t_ms: u64) {
        if self.ended.is_none() {
            let t = t_ms.max(self.now);
            self.close_segment(t);
            self.ended = Some((t, SessionStatus::Aborted));
        }
    }

    fn running(&self) -> bool {
        !self.config.pause_on_alarm || self.guard.status().is_ok()
    }

    fn close_segment(&mut self, t: u64) {
        if let Some(s) = self.open_since.take() {
            if t > s && self.idx < self.segments.len() {
                self.segments[self.idx].push((s, t));
            }
        }
    }

    fn advance(&mut self, t: u64, events: &mut Vec<EngineEvent>) {
        while self.idx < self.schedule.len() {
            let remaining = self.schedule[self.idx].end_ms - self.stim;
            let available = t - self.now;
            if available < remaining {
                self.stim += available;
                self.now = t;
                return;
            }
            let boundary = self.now + remaining;
            self.close_segment(boundary);
            self.stim = self.schedule[self.idx].end_ms;
            self.now = boundary;
            self.idx += 1;
            match self.schedule.get(self.idx) {
                Some(&item) => {
                    self.open_since = Some(boundary);
                    events.push(EngineEvent::Stimulus { t_ms: boundary, item });
                }
                None => {
                    self.ended = Some((boundary, SessionStatus::Complete));
                    events.push(EngineEvent::Finished { t_ms: boundary });
                    return;
                }
            }
        }
    }

    /// Per-pair side times over each pair's display intervals.
    pub fn pair_times(&self) -> Vec<PairTimes> {
        let fixations = detect_fixations(&self.samples, &self.config.fixation);
        let mut out = Vec::new();
        for (item, segs) in self.schedule.iter().zip(&self.segments) {
            if item.kind != ItemKind::Pair || segs.is_empty() {
                continue;
            }
            let mut t = PairTimes {
                pair_id: self.plan.test_pairs[item.index].id.clone(),
                left_ms: 0,
                right_ms: 0,
                raw_left_ms: 0.0,
                raw_right_ms: 0.0,
                display: segs.clone(),
            };
            for &seg in segs {
                let (l, r) = side_times(&fixations, seg);
                let (rl, rr) = raw_side_times(&self.samples, seg, self.config.fps);
                t.left_ms += l;
                t.right_ms += r;
                t.raw_left_ms += rl;
                t.raw_right_ms += rr;
            }
            out.push(t);
        }
        out
    }

    /// Display intervals of every schedule item so far.
    pub fn display_segments(&self) -> &[Vec<(u64, u64)>] {
        &self.segments
    }

    pub fn result(&self) -> SessionResult {
        let status = self.ended.map_or(SessionStatus::Incomplete, |e| e.1);
        let times = self.pair_times();
        let scoring = match status {
            SessionStatus::Complete => score(&times, &self.plan),
            _ => score_partial(&times, &self.plan),
        }
        .unwrap_or_else(|_| score_partial(&times, &self.plan).expect("times come from the plan"));
        let hrv = bridge_gaps(Channel::G, self.config.fps, &self.green)
            .ok()
            .and_then(|segs| hrv_over_segments(&segs).ok());
        SessionResult {
            patient_id: self.config.patient_id.clone(),
            plan_hash: self.plan_hash.clone(),
            status,
            started_ms: self.started,
            ended_ms: self.ended.map(|e| e.0),
            pairs: scoring.pairs,
            novelty_preference: scoring.novelty_preference,
            healthy_reference: HEALTHY_REFERENCE,
            hrv,
            alarms: self.alarms.clone(),
            fixations: detect_fixations(&self.samples, &self.config.fixation)
                .into_iter()
                .map(|e| (e.t_start_ms, e.t_end_ms, e.mean_x, e.side))
                .collect(),
            bpm_series: self.bpm_series.clone(),
            gaze_trace: None,
        }
    }
}

/// Runs a plan to completion over a measurement stream.
pub fn run_session<I>(plan: SessionPlan, outputs: I, config: EngineConfig) -> Result<SessionResult, SessionError>
where
    I: IntoIterator<Item = FrameOutput>,
{
    let mut engine = SessionEngine::new(plan, config)?;
    for out in outputs {
        engine.push(&out);
        if engine.is_ended() {
            break;
        }
    }
    let result = engine.result();
    match result.status {
        SessionStatus::Complete => Ok(result),
        SessionStatus::Aborted => Err(SessionError::AbortedByOperator(Box::new(result))),
        SessionStatus::Incomplete => Err(SessionError::StreamEnded { stimulus_ms: engine.stimulus_ms() }),
    }
}
