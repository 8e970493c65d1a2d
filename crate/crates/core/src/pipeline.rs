//! Per-frame measurement: gaze sample, forehead channel means and the live
//! heart-rate estimate. Live and offline processing share this code, so the
//! same frames always give the same outputs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::frame::{Channel, Frame};
use crate::gaze::{EyeTracker, GazeError, GazeNet, GazeSample};
use crate::geom::Rect;
use crate::ppg::{bridge_gaps, estimate_bpm, forehead_roi, rgb_means, PulseEstimate, MAX_BRIDGED_GAP_MS};

/// Live heart-rate window and hop.
pub const BPM_WINDOW_S: f64 = 10.0;
pub const BPM_HOP_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameOutput {
    pub sample: GazeSample,
    /// Latest heart-rate estimate, held between hops.
    pub bpm: Option<f64>,
    /// Forehead R, G, B means when exactly one face was found.
    pub ppg_rgb: Option<[f64; 3]>,
    pub face: Option<Rect>,
    /// Set on frames where a new estimate was computed.
    pub pulse: Option<PulseEstimate>,
}

#[derive(Debug, Clone)]
pub struct MeasurementPipeline<'a> {
    tracker: EyeTracker<'a>,
    net: &'a GazeNet,
    fps: f64,
    trace: Vec<(u64, Option<f64>)>,
    next_hop_ms: Option<u64>,
    bpm: Option<f64>,
}

impl<'a> MeasurementPipeline<'a> {
    pub fn new(tracker: EyeTracker<'a>, net: &'a GazeNet, fps: f64) -> Self {
        Self { tracker, net, fps, trace: Vec::new(), next_hop_ms: None, bpm: None }
    }

    pub fn process(&mut self, frame: &Frame) -> Result<FrameOutput, GazeError> {
        let (sample, obs) = self.tracker.sample(frame, self.net)?;
        let face = obs.face();
        let ppg_rgb = face
            .and_then(|f| forehead_roi(f, frame.width(), frame.height()).ok())
            .and_then(|roi| rgb_means(frame, roi).ok());
        let t = frame.timestamp_ms;
        self.trace.push((t, ppg_rgb.map(|c| c[1])));

        let mut pulse = None;
        let due = *self.next_hop_ms.get_or_insert(t + BPM_HOP_MS);
        if t >= due {
            self.next_hop_ms = Some(due + BPM_HOP_MS * ((t - due) / BPM_HOP_MS + 1));
            pulse = self.estimate();
            self.bpm = pulse.map(|p| p.bpm);
        }
        Ok(FrameOutput { sample, bpm: self.bpm, ppg_rgb, face, pulse })
    }

    fn estimate(&mut self) -> Option<PulseEstimate> {
        let keep_ms = (BPM_WINDOW_S * 1000.0) as u64 + MAX_BRIDGED_GAP_MS + 2 * BPM_HOP_MS;
        let newest = self.trace.last()?.0;
        let cut = self.trace.partition_point(|&(t, _)| t + keep_ms < newest);
        self.trace.drain(..cut);
        let segments = bridge_gaps(Channel::G, self.fps, &self.trace).ok()?;
        // Only a segment reaching the newest frame describes the present.
        let last = segments.last().filter(|s| s.samples().last().map(|p| p.0) == Some(newest))?;
        estimate_bpm(last, BPM_WINDOW_S).ok()
    }
}
