use alloc::vec;
use alloc::vec::Vec;

use crate::frame::Frame;
use crate::geom::Rect;

/// Summed-area table of frame luminance with a zero top row and left column,
/// plus the matching table of squared luminance for window variance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralImage {
    width: u32,
    height: u32,
    sum: Vec<u64>,
    sq_sum: Vec<u64>,
}

impl IntegralImage {
    pub fn from_frame(frame: &Frame) -> Self {
        Self::from_luminance(frame.width(), frame.height(), &frame.luminance_plane())
    }

    /// Builds the tables from a row-major 8-bit plane.
    pub fn from_luminance(width: u32, height: u32, plane: &[u8]) -> Self {
        let (w, h) = (width as usize, height as usize);
        assert_eq!(plane.len(), w * h, "plane size");
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sq_sum = vec![0u64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0u64;
            let mut row_sq = 0u64;
            for x in 0..w {
                let v = u64::from(plane[y * w + x]);
                row += v;
                row_sq += v * v;
                let i = (y + 1) * stride + x + 1;
                sum[i] = sum[i - stride] + row;
                sq_sum[i] = sq_sum[i - stride] + row_sq;
            }
        }
        Self {
            width,
            height,
            sum,
            sq_sum,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub(crate) fn stride(&self) -> usize {
        self.width as usize + 1
    }

    pub(crate) fn sums(&self) -> &[u64] {
        &self.sum
    }

    /// Table entry at `(x, y)`: the sum over `[0, x) × [0, y)`.
    pub fn entry(&self, x: u32, y: u32) -> u64 {
        self.sum[y as usize * self.stride() + x as usize]
    }

    pub fn sq_entry(&self, x: u32, y: u32) -> u64 {
        self.sq_sum[y as usize * self.stride() + x as usize]
    }

    /// Luminance sum over `r` by four-corner lookup. `r` must fit the image.
    pub fn rect_sum(&self, r: Rect) -> u64 {
        let s = self.stride();
        let (x0, y0) = (r.x as usize, r.y as usize);
        let (x1, y1) = (x0 + r.w as usize, y0 + r.h as usize);
        self.sum[y1 * s + x1] + self.sum[y0 * s + x0] - self.sum[y0 * s + x1] - self.sum[y1 * s + x0]
    }

    pub fn rect_sq_sum(&self, r: Rect) -> u64 {
        let s = self.stride();
        let (x0, y0) = (r.x as usize, r.y as usize);
        let (x1, y1) = (x0 + r.w as usize, y0 + r.h as usize);
        self.sq_sum[y1 * s + x1] + self.sq_sum[y0 * s + x0]
            - self.sq_sum[y0 * s + x1]
            - self.sq_sum[y1 * s + x0]
    }

    /// Pixel standard deviation over `r`, floored at 1.
    pub fn window_std(&self, r: Rect) -> f64 {
        window_std_from_sums(r.area(), self.rect_sum(r), self.rect_sq_sum(r))
    }
}

/// Standard deviation from the pixel count and the sum and squared sum,
/// floored at 1 so flat windows do not blow up the normalization.
pub(crate) fn window_std_from_sums(n: u64, sum: u64, sq_sum: u64) -> f64 {
    let n128 = u128::from(n);
    let num = (n128 * u128::from(sq_sum)).saturating_sub(u128::from(sum) * u128::from(sum));
    let std = libm::sqrt(num as f64) / n as f64;
    if std < 1.0 {
        1.0
    } else {
        std
    }
}
