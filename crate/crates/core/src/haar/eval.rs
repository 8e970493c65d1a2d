use alloc::vec::Vec;

use super::integral::{window_std_from_sums, IntegralImage};
use super::{CascadeModel, HaarError};
use crate::geom::Rect;

/// Corner offsets of one scaled rectangle into the integral table.
#[derive(Debug, Clone, Copy)]
struct ScaledRect {
    tl: usize,
    tr: usize,
    bl: usize,
    br: usize,
    weight: f64,
}

#[derive(Debug, Clone)]
struct ScaledWeak {
    rects: [ScaledRect; 3],
    n_rects: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

#[derive(Debug, Clone)]
struct ScaledStage {
    weak: Vec<ScaledWeak>,
    threshold: f64,
}

/// A cascade with every feature rectangle scaled and resolved to table
/// offsets for one scale and one integral-image stride.
///
/// Feature rectangles are scaled by rounding each coordinate; weights are
/// kept. A feature value is `Σ weight·rect_sum / (scale² · base_area)` and is
/// compared against `threshold · σ`, σ being the window's pixel standard
/// deviation (floor 1).
#[derive(Debug, Clone)]
pub struct ScaledCascade {
    stages: Vec<ScaledStage>,
    win_w: u32,
    win_h: u32,
    stride: usize,
    inv_area: f64,
}

impl ScaledCascade {
    pub fn new(model: &CascadeModel, scale: f64, stride: usize) -> Self {
        let (bw, bh) = model.base_size();
        let win_w = scaled(bw, scale).max(1);
        let win_h = scaled(bh, scale).max(1);
        let inv_area = 1.0 / (scale * scale * f64::from(bw) * f64::from(bh));
        let stages = model
            .stages()
            .iter()
            .map(|stage| ScaledStage {
                threshold: stage.stage_threshold,
                weak: stage
                    .weak_classifiers
                    .iter()
                    .map(|weak| {
                        let empty = ScaledRect {
                            tl: 0,
                            tr: 0,
                            bl: 0,
                            br: 0,
                            weight: 0.0,
                        };
                        let mut rects = [empty; 3];
                        for (slot, r) in rects.iter_mut().zip(&weak.feature.rects) {
                            let x = scaled(r.x, scale).min(win_w - 1);
                            let y = scaled(r.y, scale).min(win_h - 1);
                            let w = scaled(r.w, scale).max(1).min(win_w - x);
                            let h = scaled(r.h, scale).max(1).min(win_h - y);
                            let (x, y, w, h) = (x as usize, y as usize, w as usize, h as usize);
                            *slot = ScaledRect {
                                tl: y * stride + x,
                                tr: y * stride + x + w,
                                bl: (y + h) * stride + x,
                                br: (y + h) * stride + x + w,
                                weight: r.weight,
                            };
                        }
                        ScaledWeak {
                            rects,
                            n_rects: weak.feature.rects.len(),
                            threshold: weak.threshold,
                            left: weak.left_value,
                            right: weak.right_value,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            stages,
            win_w,
            win_h,
            stride,
            inv_area,
        }
    }

    pub fn window_size(&self) -> (u32, u32) {
        (self.win_w, self.win_h)
    }

    #[inline]
    fn stage_sum(&self, stage: &ScaledStage, sums: &[u64], base: usize, sigma: f64) -> f64 {
        let mut stage_sum = 0.0;
        for weak in &stage.weak {
            let mut raw = 0.0;
            for r in &weak.rects[..weak.n_rects] {
                let s = (sums[base + r.br] + sums[base + r.tl]) - (sums[base + r.tr] + sums[base + r.bl]);
                raw += r.weight * s as f64;
            }
            stage_sum += if raw * self.inv_area < weak.threshold * sigma {
                weak.left
            } else {
                weak.right
            };
        }
        stage_sum
    }

    fn sigma(&self, ii: &IntegralImage, x: u32, y: u32) -> f64 {
        let win = Rect::new(x, y, self.win_w, self.win_h);
        window_std_from_sums(win.area(), ii.rect_sum(win), ii.rect_sq_sum(win))
    }

    /// Cascade verdict for the window whose top-left corner is `(x, y)`.
    /// The caller guarantees the window fits the image.
    #[inline]
    pub fn accepts(&self, ii: &IntegralImage, x: u32, y: u32) -> bool {
        debug_assert_eq!(ii.stride(), self.stride);
        let sigma = self.sigma(ii, x, y);
        let base = y as usize * self.stride + x as usize;
        let sums = ii.sums();
        self.stages
            .iter()
            .all(|stage| self.stage_sum(stage, sums, base, sigma) >= stage.threshold)
    }

    /// Every stage's sum and verdict, without short-circuiting.
    pub fn stage_outcomes(&self, ii: &IntegralImage, x: u32, y: u32) -> Vec<(f64, bool)> {
        let sigma = self.sigma(ii, x, y);
        let base = y as usize * self.stride + x as usize;
        self.stages
            .iter()
            .map(|stage| {
                let s = self.stage_sum(stage, ii.sums(), base, sigma);
                (s, s >= stage.threshold)
            })
            .collect()
    }
}

fn scaled(v: u32, scale: f64) -> u32 {
    libm::round(f64::from(v) * scale) as u32
}

/// Runs the cascade on one window. `window` gives the top-left corner and
/// must have the scaled base-window size; rectangles are scaled by `scale`.
pub fn eval_window(
    model: &CascadeModel,
    ii: &IntegralImage,
    window: Rect,
    scale: f64,
) -> Result<bool, HaarError> {
    let out_of_bounds = HaarError::WindowOutOfBounds {
        window,
        scale,
        width: ii.width(),
        height: ii.height(),
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(out_of_bounds);
    }
    let cascade = ScaledCascade::new(model, scale, ii.stride());
    let (w, h) = cascade.window_size();
    let scaled_window = Rect::new(window.x, window.y, w, h);
    if !scaled_window.fits_within(ii.width(), ii.height()) || !window.fits_within(ii.width(), ii.height()) {
        return Err(out_of_bounds);
    }
    Ok(cascade.accepts(ii, window.x, window.y))
}
