//! Horizontal gaze estimation: eye patches, the calibration network, the
//! per-frame tracker and the click-point accuracy check.

mod accuracy;
mod calib;
mod net;
mod patch;
mod track;

pub use accuracy::{assess_accuracy, generate_click_points, AccuracyReport, OperatingPoint, REPORTED_OPERATING_POINT};
pub use calib::{collect_calibration, CalibPattern, CalibSample, Calibration};
pub use net::{GazeNet, Gradients, LrSchedule, TrainParams, TrainReport, STANDARD_LAYERS};
pub use patch::{extract_patch, EyePatch, PATCH_LEN, PATCH_SIDE};
pub use track::{track, EyeTracker, GazeSample, InvalidReason, Observation};

use thiserror::Error;

use crate::geom::Rect;

/// Left/right boundary of the screen in normalized coordinates.
pub const SIDE_BOUNDARY: f64 = 0.5;

/// Smallest calibration set the trainer accepts.
pub const MIN_CALIB_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GazeError {
    #[error("eye box {0:?} is outside the frame")]
    BoxOutOfBounds(Rect),
    #[error("only {collected} calibration samples collected, need {MIN_CALIB_SAMPLES}")]
    InsufficientSamples { collected: usize },
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: u32 },
    #[error("input has {got} values, network expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("{truths} click points but {predictions} predictions")]
    LengthMismatch { truths: usize, predictions: usize },
    #[error("click point count {0} is odd")]
    OddCount(usize),
    #[error("invalid network: {0}")]
    InvalidNet(&'static str),
    #[error("invalid calibration pattern: {0}")]
    InvalidPattern(&'static str),
}
