use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::net::{GazeNet, TrainParams, STANDARD_LAYERS};
use super::patch::{extract_patch, EyePatch};
use super::track::EyeTracker;
use super::{GazeError, MIN_CALIB_SAMPLES};
use crate::frame::Frame;

/// Knots `(t_ms, circle_x, circle_y)` of the calibration target path; the
/// circle moves linearly between knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, f64, f64)>", into = "Vec<(u64, f64, f64)>")]
pub struct CalibPattern {
    knots: Vec<(u64, f64, f64)>,
}

impl TryFrom<Vec<(u64, f64, f64)>> for CalibPattern {
    type Error = GazeError;

    fn try_from(knots: Vec<(u64, f64, f64)>) -> Result<Self, GazeError> {
        Self::new(knots)
    }
}

impl From<CalibPattern> for Vec<(u64, f64, f64)> {
    fn from(p: CalibPattern) -> Self {
        p.knots
    }
}

impl CalibPattern {
    pub fn new(knots: Vec<(u64, f64, f64)>) -> Result<Self, GazeError> {
        if knots.is_empty() {
            return Err(GazeError::InvalidPattern("no knots"));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(GazeError::InvalidPattern("knot times must strictly increase"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !knots.iter().all(|&(_, x, y)| unit(x) && unit(y)) {
            return Err(GazeError::InvalidPattern("coordinates must lie in [0, 1]"));
        }
        Ok(Self { knots })
    }

    /// Left-to-right sweeps at the given heights, each lasting `sweep_ms`.
    pub fn sweeps(heights: &[f64], sweep_ms: u64) -> Result<Self, GazeError> {
        if sweep_ms < 2 {
            return Err(GazeError::InvalidPattern("sweep too short"));
        }
        let mut knots = Vec::with_capacity(heights.len() * 2);
        for (k, &y) in heights.iter().enumerate() {
            let t0 = k as u64 * sweep_ms;
            knots.push((t0, 0.0, y));
            knots.push((t0 + sweep_ms - 1, 1.0, y));
        }
        Self::new(knots)
    }

    /// Default pattern: three 10 s sweeps at heights 0.25, 0.5 and 0.75.
    pub fn three_sweeps() -> Self {
        Self::sweeps(&[0.25, 0.5, 0.75], 10_000).expect("default pattern is valid")
    }

    pub fn knots(&self) -> &[(u64, f64, f64)] {
        &self.knots
    }

    pub fn span(&self) -> (u64, u64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    /// Circle position at `t_ms`, held constant outside the pattern span.
    pub fn circle_at(&self, t_ms: u64) -> (f64, f64) {
        let k = &self.knots;
        let i = k.partition_point(|p| p.0 <= t_ms);
        if i == 0 {
            return (k[0].1, k[0].2);
        }
        if i == k.len() {
            return (k[i - 1].1, k[i - 1].2);
        }
        let (a, b) = (k[i - 1], k[i]);
        let f = (t_ms - a.0) as f64 / (b.0 - a.0) as f64;
        (a.1 + f * (b.1 - a.1), a.2 + f * (b.2 - a.2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibSample {
    pub patch: EyePatch,
    pub target_x: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub samples: Vec<CalibSample>,
    /// Frames dropped because the face or designated eye was not found.
    pub skipped: usize,
}

impl Calibration {
    /// Trains a standard-shape network on the collected samples.
    pub fn train(&self, params: &TrainParams) -> Result<GazeNet, GazeError> {
        if self.samples.len() < MIN_CALIB_SAMPLES {
            return Err(GazeError::InsufficientSamples { collected: self.samples.len() });
        }
        let mut net = GazeNet::new(&STANDARD_LAYERS, params.seed)?;
        let inputs: Vec<&[f64]> = self.samples.iter().map(|s| s.patch.values()).collect();
        let targets: Vec<f64> = self.samples.iter().map(|s| s.target_x).collect();
        net.fit(&inputs, &targets, params)?;
        Ok(net)
    }
}

/// Pairs the designated-eye patch of every usable frame with the circle's
/// horizontal position at that frame's timestamp.
pub fn collect_calibration<I>(frames: I, pattern: &CalibPattern, tracker: &EyeTracker<'_>) -> Result<Calibration, GazeError>
where
    I: IntoIterator<Item = Frame>,
{
    let mut samples = Vec::new();
    let mut skipped = 0;
    for frame in frames {
        match tracker.observe(&frame).designated_eye() {
            Ok(eye) => samples.push(CalibSample {
                patch: extract_patch(&frame, eye)?,
                target_x: pattern.circle_at(frame.timestamp_ms).0,
            }),
            Err(_) => skipped += 1,
        }
    }
    if samples.len() < MIN_CALIB_SAMPLES {
        return Err(GazeError::InsufficientSamples { collected: samples.len() });
    }
    Ok(Calibration { samples, skipped })
}
