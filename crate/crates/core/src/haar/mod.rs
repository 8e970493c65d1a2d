//! Viola–Jones detection with pretrained Haar cascades: the model types,
//! summed-area tables, per-window cascade evaluation and the multi-scale
//! sliding-window detector.

mod detect;
mod eval;
mod integral;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use detect::{detect, detect_in, group_rectangles, DetectParams, Detection, DetectionKind};
pub use eval::{eval_window, ScaledCascade};
pub use integral::IntegralImage;

use crate::geom::Rect;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HaarError {
    #[error("cascade has no stages")]
    NoStages,
    #[error("stage {0} has no weak classifiers")]
    EmptyStage(usize),
    #[error("base window {w}x{h} is smaller than 8x8")]
    BaseWindowTooSmall { w: u32, h: u32 },
    #[error("stage {stage} classifier {classifier}: {reason}")]
    BadFeature {
        stage: usize,
        classifier: usize,
        reason: &'static str,
    },
    #[error("window {window:?} at scale {scale} leaves the {width}x{height} image")]
    WindowOutOfBounds {
        window: Rect,
        scale: f64,
        width: u32,
        height: u32,
    },
}

/// One weighted rectangle of a Haar feature, in base-window units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarFeature {
    pub rects: Vec<WeightedRect>,
}

/// Decision stump over one feature: `value < threshold` selects `left_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakClassifier {
    pub feature: HaarFeature,
    pub threshold: f64,
    pub left_value: f64,
    pub right_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStage {
    pub weak_classifiers: Vec<WeakClassifier>,
    pub stage_threshold: f64,
}

/// A pretrained boosted cascade. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    base_w: u32,
    base_h: u32,
    stages: Vec<CascadeStage>,
}

impl CascadeModel {
    /// Validates the structural invariants: at least one stage, no empty
    /// stage, a base window of at least 8×8, and features with 2–3 rectangles
    /// inside the base window carrying weights of both signs.
    pub fn new(base_w: u32, base_h: u32, stages: Vec<CascadeStage>) -> Result<Self, HaarError> {
        if base_w < 8 || base_h < 8 {
            return Err(HaarError::BaseWindowTooSmall { w: base_w, h: base_h });
        }
        if stages.is_empty() {
            return Err(HaarError::NoStages);
        }
        for (si, stage) in stages.iter().enumerate() {
            if stage.weak_classifiers.is_empty() {
                return Err(HaarError::EmptyStage(si));
            }
            for (ci, weak) in stage.weak_classifiers.iter().enumerate() {
                let bad = |reason| HaarError::BadFeature {
                    stage: si,
                    classifier: ci,
                    reason,
                };
                let rects = &weak.feature.rects;
                if !(2..=3).contains(&rects.len()) {
                    return Err(bad("feature needs 2 or 3 rectangles"));
                }
                for r in rects {
                    if r.w == 0 || r.h == 0 || r.x + r.w > base_w || r.y + r.h > base_h {
                        return Err(bad("rectangle outside the base window"));
                    }
                    if !r.weight.is_finite() {
                        return Err(bad("non-finite weight"));
                    }
                }
                if !rects.iter().any(|r| r.weight < 0.0) || !rects.iter().any(|r| r.weight > 0.0) {
                    return Err(bad("weights must include both signs"));
                }
            }
        }
        Ok(Self {
            base_w,
            base_h,
            stages,
        })
    }

    pub fn base_size(&self) -> (u32, u32) {
        (self.base_w, self.base_h)
    }

    pub fn stages(&self) -> &[CascadeStage] {
        &self.stages
    }

    pub fn weak_classifier_count(&self) -> usize {
        self.stages.iter().map(|s| s.weak_classifiers.len()).sum()
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_structural_violations() {
        assert_eq!(CascadeModel::new(24, 24, vec![]), Err(HaarError::NoStages));
        assert_eq!(
            CascadeModel::new(6, 24, single_stage(0.0).stages.clone()),
            Err(HaarError::BaseWindowTooSmall { w: 6, h: 24 })
        );
        let mut stages = single_stage(0.0).stages.clone();
        stages[0].weak_classifiers[0].feature.rects[1].weight = -2.0;
        assert!(matches!(
            CascadeModel::new(24, 24, stages),
            Err(HaarError::BadFeature { .. })
        ));
        let mut stages = single_stage(0.0).stages.clone();
        stages[0].weak_classifiers[0].feature.rects[0].w = 25;
        assert!(CascadeModel::new(24, 24, stages).is_err());
    }
}
