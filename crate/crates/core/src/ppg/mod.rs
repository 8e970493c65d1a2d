//! Remote photoplethysmography: the forehead region, per-frame channel
//! means, heart rate from the spectrum and beat-interval variability.

mod filter;
mod hrv;
mod series;
mod spectrum;

pub use filter::{band_pass, low_pass, Biquad};
pub use hrv::{hrv_over_segments, hrv_summary, HrvSummary};
pub use series::{bridge_gaps, PpgSeries, MAX_BRIDGED_GAP_MS};
pub use spectrum::{estimate_bpm, PulseEstimate, MIN_CONFIDENCE};

use thiserror::Error;

use crate::frame::{Channel, Frame};
use crate::geom::Rect;

/// Pass band in Hz (42 to 240 beats per minute).
pub const BAND_HZ: (f64, f64) = (0.7, 4.0);
/// Shortest window accepted by [`estimate_bpm`].
pub const MIN_WINDOW_S: f64 = 8.0;
/// Shortest series accepted by [`hrv_summary`].
pub const MIN_HRV_SPAN_MS: u64 = 15_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PpgError {
    #[error("forehead region of {0:?} is empty after clipping")]
    DegenerateBox(Rect),
    #[error("region {0:?} is outside the frame")]
    RoiOutOfBounds(Rect),
    #[error("series covers {have_ms} ms, need {need_ms} ms")]
    SeriesTooShort { have_ms: u64, need_ms: u64 },
    #[error("no pulse: dominant peak holds {confidence:.3} of in-band power")]
    NoPulse { confidence: f64 },
    #[error("only {peaks} beats found, need 4")]
    TooFewBeats { peaks: usize },
    #[error("sample {0} is not later than its predecessor")]
    NonMonotonic(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Forehead region of a face box: the middle 60% of its width and the band
/// from 10% to 30% of its height, clipped to the frame.
pub fn forehead_roi(face_box: Rect, frame_width: u32, frame_height: u32) -> Result<Rect, PpgError> {
    let (fx, fy, fw, fh) = (face_box.x as f64, face_box.y as f64, face_box.w as f64, face_box.h as f64);
    let x0 = libm::round(fx + 0.2 * fw);
    let x1 = libm::round(fx + 0.8 * fw);
    let y0 = libm::round(fy + 0.1 * fh);
    let y1 = libm::round(fy + 0.3 * fh);
    let roi = Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32).clip_to(frame_width, frame_height);
    if roi.is_empty() {
        return Err(PpgError::DegenerateBox(face_box));
    }
    Ok(roi)
}

/// Mean of one channel over `roi`: the pixel sum divided by the exact pixel count.
pub fn channel_mean(frame: &Frame, roi: Rect, channel: Channel) -> Result<f64, PpgError> {
    Ok(channel_sums(frame, roi)?[channel.offset()] as f64 / roi.area() as f64)
}

/// Means of all three channels over `roi`, in R, G, B order.
pub fn rgb_means(frame: &Frame, roi: Rect) -> Result<[f64; 3], PpgError> {
    let sums = channel_sums(frame, roi)?;
    let n = roi.area() as f64;
    Ok([sums[0] as f64 / n, sums[1] as f64 / n, sums[2] as f64 / n])
}

fn channel_sums(frame: &Frame, roi: Rect) -> Result<[u64; 3], PpgError> {
    if roi.is_empty() || !roi.fits_within(frame.width(), frame.height()) {
        return Err(PpgError::RoiOutOfBounds(roi));
    }
    let stride = frame.width() as usize * 3;
    let px = frame.pixels();
    let mut sums = [0u64; 3];
    for y in roi.y as usize..roi.bottom() as usize {
        let row = &px[y * stride + roi.x as usize * 3..y * stride + roi.right() as usize * 3];
        for p in row.chunks_exact(3) {
            sums[0] += u64::from(p[0]);
            sums[1] += u64::from(p[1]);
            sums[2] += u64::from(p[2]);
        }
    }
    Ok(sums)
}
