//! Reference cascade evaluation by direct pixel summation over a luminance
//! plane. No summed-area table is involved anywhere.

use vpc_core::haar::CascadeModel;
use vpc_core::Rect;

pub struct Plane<'a> {
    pub width: u32,
    pub pixels: &'a [u8],
}

impl Plane<'_> {
    pub fn sum(&self, r: Rect) -> u64 {
        let mut s = 0u64;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                s += u64::from(self.pixels[(y * self.width + x) as usize]);
            }
        }
        s
    }

    pub fn sq_sum(&self, r: Rect) -> u64 {
        let mut s = 0u64;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                let v = u64::from(self.pixels[(y * self.width + x) as usize]);
                s += v * v;
            }
        }
        s
    }
}

fn round_scaled(v: u32, scale: f64) -> u32 {
    (f64::from(v) * scale).round() as u32
}

/// Pixel standard deviation with the unit floor.
fn sigma(plane: &Plane, win: Rect) -> f64 {
    let n = u128::from(win.area());
    let s = u128::from(plane.sum(win));
    let q = u128::from(plane.sq_sum(win));
    let std = ((n * q).saturating_sub(s * s) as f64).sqrt() / win.area() as f64;
    std.max(1.0)
}

/// Stage sums and verdicts for the window at `(x, y)`, every stage evaluated.
pub fn stage_sums(model: &CascadeModel, plane: &Plane, x: u32, y: u32, scale: f64) -> Vec<(f64, bool)> {
    let (bw, bh) = model.base_size();
    let ww = round_scaled(bw, scale).max(1);
    let wh = round_scaled(bh, scale).max(1);
    let win = Rect::new(x, y, ww, wh);
    let sd = sigma(plane, win);
    let inv_area = 1.0 / (scale * scale * f64::from(bw) * f64::from(bh));
    model
        .stages()
        .iter()
        .map(|stage| {
            let mut total = 0.0;
            for weak in &stage.weak_classifiers {
                let mut raw = 0.0;
                for r in &weak.feature.rects {
                    let rx = round_scaled(r.x, scale).min(ww - 1);
                    let ry = round_scaled(r.y, scale).min(wh - 1);
                    let rw = round_scaled(r.w, scale).max(1).min(ww - rx);
                    let rh = round_scaled(r.h, scale).max(1).min(wh - ry);
                    raw += r.weight * plane.sum(Rect::new(x + rx, y + ry, rw, rh)) as f64;
                }
                total += if raw * inv_area < weak.threshold * sd { weak.left_value } else { weak.right_value };
            }
            (total, total >= stage.stage_threshold)
        })
        .collect()
}

pub fn accepts(model: &CascadeModel, plane: &Plane, x: u32, y: u32, scale: f64) -> bool {
    stage_sums(model, plane, x, y, scale).iter().all(|s| s.1)
}
