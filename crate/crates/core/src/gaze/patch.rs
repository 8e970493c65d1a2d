use alloc::vec::Vec;

use super::GazeError;
use crate::frame::Frame;
use crate::geom::Rect;

pub const PATCH_SIDE: usize = 32;
pub const PATCH_LEN: usize = PATCH_SIDE * PATCH_SIDE;

/// A 32x32 luminance crop of one eye, min-max normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct EyePatch {
    values: Vec<f64>,
    pub source_frame_index: u64,
    pub source_box: Rect,
}

impl EyePatch {
    /// Wraps raw values. Values are clamped into [0, 1].
    pub fn from_values(values: Vec<f64>, source_frame_index: u64, source_box: Rect) -> Result<Self, GazeError> {
        if values.len() != PATCH_LEN {
            return Err(GazeError::ShapeMismatch { expected: PATCH_LEN, got: values.len() });
        }
        let values = values.into_iter().map(|v| if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) }).collect();
        Ok(Self { values, source_frame_index, source_box })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column of the darkest value (first one in row-major order).
    pub fn darkest_column(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best % PATCH_SIDE
    }
}

/// Crops `eye_box`, converts to luminance, resamples bilinearly to 32x32 and
/// stretches the result to [0, 1]. Constant crops become all 0.5.
pub fn extract_patch(frame: &Frame, eye_box: Rect) -> Result<EyePatch, GazeError> {
    if eye_box.is_empty() || !eye_box.fits_within(frame.width(), frame.height()) {
        return Err(GazeError::BoxOutOfBounds(eye_box));
    }
    let (bw, bh) = (eye_box.w as usize, eye_box.h as usize);
    let mut crop = Vec::with_capacity(bw * bh);
    for y in eye_box.y..eye_box.bottom() {
        for x in eye_box.x..eye_box.right() {
            crop.push(frame.luminance(x, y) as f64);
        }
    }

    let sx = bw as f64 / PATCH_SIDE as f64;
    let sy = bh as f64 / PATCH_SIDE as f64;
    let mut values = Vec::with_capacity(PATCH_LEN);
    for j in 0..PATCH_SIDE {
        let (y0, y1, fy) = sample_axis(j, sy, bh);
        for i in 0..PATCH_SIDE {
            let (x0, x1, fx) = sample_axis(i, sx, bw);
            let top = crop[y0 * bw + x0] * (1.0 - fx) + crop[y0 * bw + x1] * fx;
            let bottom = crop[y1 * bw + x0] * (1.0 - fx) + crop[y1 * bw + x1] * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }

    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if range <= 1e-12 {
        values.iter_mut().for_each(|v| *v = 0.5);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    }
    Ok(EyePatch { values, source_frame_index: frame.index, source_box: eye_box })
}

// Source neighbours and blend weight for output sample `i` (pixel-centre aligned).
fn sample_axis(i: usize, step: f64, len: usize) -> (usize, usize, f64) {
    let pos = ((i as f64 + 0.5) * step - 0.5).clamp(0.0, (len - 1) as f64);
    let p0 = libm::floor(pos) as usize;
    let p1 = (p0 + 1).min(len - 1);
    (p0, p1, pos - p0 as f64)
}
