use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::net::GazeNet;
use super::patch::extract_patch;
use super::GazeError;
use crate::frame::Frame;
use crate::haar::{detect_in, CascadeModel, DetectParams, Detection, IntegralImage};
use crate::geom::Rect;

/// Why a frame produced no gaze estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    NoFace,
    MultipleFaces,
    EyesNotFound,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::NoFace => "no_face",
            InvalidReason::MultipleFaces => "multiple_faces",
            InvalidReason::EyesNotFound => "eyes_not_found",
        }
    }
}

/// Per-frame gaze estimate. `gaze_x` is present exactly when `valid`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub frame_index: u64,
    pub t_ms: u64,
    pub gaze_x: Option<f64>,
    pub valid: bool,
    pub invalid_reason: Option<InvalidReason>,
}

impl GazeSample {
    pub fn valid(frame_index: u64, t_ms: u64, gaze_x: f64) -> Self {
        Self { frame_index, t_ms, gaze_x: Some(gaze_x), valid: true, invalid_reason: None }
    }

    pub fn invalid(frame_index: u64, t_ms: u64, reason: InvalidReason) -> Self {
        Self { frame_index, t_ms, gaze_x: None, valid: false, invalid_reason: Some(reason) }
    }
}

/// What the detectors found in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub faces: Vec<Detection>,
    /// Best eye in the image-left and image-right halves of the face ROI.
    pub eyes: [Option<Detection>; 2],
}

impl Observation {
    pub fn face(&self) -> Option<Rect> {
        match self.faces.as_slice() {
            [one] => Some(one.bbox),
            _ => None,
        }
    }

    /// The eye that feeds the network: the observer's left eye, which is
    /// the right half of the face ROI in the image.
    pub fn designated_eye(&self) -> Result<Rect, InvalidReason> {
        match self.faces.len() {
            0 => Err(InvalidReason::NoFace),
            1 => self.eyes[1].map(|d| d.bbox).ok_or(InvalidReason::EyesNotFound),
            _ => Err(InvalidReason::MultipleFaces),
        }
    }
}

/// Face and eye detection with the cascades the tracker was built with.
#[derive(Debug, Clone, Copy)]
pub struct EyeTracker<'a> {
    pub face_model: &'a CascadeModel,
    pub eye_model: &'a CascadeModel,
    /// Fraction of the face box height searched for eyes.
    pub eye_band: f64,
}

impl<'a> EyeTracker<'a> {
    pub fn new(face_model: &'a CascadeModel, eye_model: &'a CascadeModel) -> Self {
        Self { face_model, eye_model, eye_band: 0.55 }
    }

    pub fn observe(&self, frame: &Frame) -> Observation {
        let ii = IntegralImage::from_frame(frame);
        let faces = detect_in(self.face_model, &ii, &DetectParams::faces(frame.height()));
        let mut eyes = [None, None];
        if let [face] = faces.as_slice() {
            let fb = face.bbox;
            let band = ((fb.h as f64 * self.eye_band) as u32).max(1);
            let half = fb.w / 2;
            let rois = [Rect::new(fb.x, fb.y, half, band), Rect::new(fb.x + half, fb.y, fb.w - half, band)];
            for (slot, roi) in eyes.iter_mut().zip(rois) {
                // Results are sorted by area, so the first is the largest.
                *slot = detect_in(self.eye_model, &ii, &DetectParams::eyes(roi)).into_iter().next();
            }
        }
        Observation { faces, eyes }
    }

    /// Observes `frame` and runs the network on the designated eye.
    pub fn sample(&self, frame: &Frame, net: &GazeNet) -> Result<(GazeSample, Observation), GazeError> {
        let obs = self.observe(frame);
        let sample = match obs.designated_eye() {
            Ok(eye) => {
                let patch = extract_patch(frame, eye)?;
                GazeSample::valid(frame.index, frame.timestamp_ms, net.predict_patch(&patch)?)
            }
            Err(reason) => GazeSample::invalid(frame.index, frame.timestamp_ms, reason),
        };
        Ok((sample, obs))
    }
}

/// One sample per frame, in stream order.
pub fn track<I>(frames: I, net: &GazeNet, tracker: &EyeTracker<'_>) -> Result<Vec<GazeSample>, GazeError>
where
    I: IntoIterator<Item = Frame>,
{
    if net.input_len() != super::PATCH_LEN {
        return Err(GazeError::ShapeMismatch { expected: super::PATCH_LEN, got: net.input_len() });
    }
    frames.into_iter().map(|f| tracker.sample(&f, net).map(|(s, _)| s)).collect()
}
