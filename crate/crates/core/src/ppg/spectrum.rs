use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::series::PpgSeries;
use super::{PpgError, BAND_HZ, MIN_WINDOW_S};

/// Below this dominant-peak power fraction there is no usable pulse.
pub const MIN_CONFIDENCE: f64 = 0.2;

// Peak search grid density relative to the natural 1/T bin spacing.
const OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseEstimate {
    pub bpm: f64,
    /// Power of the strongest in-band bin over total in-band power.
    pub confidence: f64,
    pub window: (u64, u64),
}

/// Heart rate over the most recent `window_s` seconds of `series`.
///
/// The window is detrended by least squares, then its Fourier transform is
/// evaluated on the pass band only, which acts as an ideal band-pass. The
/// confidence is read off the natural bins `k/T`; the peak frequency comes
/// from a four-times denser grid with parabolic interpolation.
pub fn estimate_bpm(series: &PpgSeries, window_s: f64) -> Result<PulseEstimate, PpgError> {
    if !(window_s >= MIN_WINDOW_S) || !window_s.is_finite() {
        return Err(PpgError::InvalidParameter("window must be at least 8 s"));
    }
    let n = libm::round(window_s * series.fps) as usize;
    if series.len() < n || n < 3 {
        return Err(PpgError::SeriesTooShort {
            have_ms: libm::round(series.span_ms()) as u64,
            need_ms: libm::round(window_s * 1000.0) as u64,
        });
    }
    let win = &series.samples()[series.len() - n..];
    let t0 = win[0].0;
    let ts: Vec<f64> = win.iter().map(|&(t, _)| (t - t0) as f64 / 1000.0).collect();
    let raw: Vec<f64> = win.iter().map(|&(_, v)| v).collect();
    let x = detrend(&ts, &raw);
    let window = (t0, win[n - 1].0);

    let scale = raw.iter().map(|v| v.abs()).sum::<f64>() / n as f64 + f64::MIN_POSITIVE;
    let residual = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / n as f64);
    if residual <= 1e-9 * scale {
        return Err(PpgError::NoPulse { confidence: 0.0 });
    }

    let span = n as f64 / series.fps;
    let coarse: Vec<f64> = band_bins(span, 1).map(|f| power(&ts, &x, f)).collect();
    let total: f64 = coarse.iter().sum();
    let peak = coarse.iter().cloned().fold(0.0, f64::max);
    let confidence = if total > 0.0 { peak / total } else { 0.0 };
    if !(confidence >= MIN_CONFIDENCE) {
        return Err(PpgError::NoPulse { confidence });
    }

    let grid: Vec<f64> = band_bins(span, OVERSAMPLE).collect();
    let fine: Vec<f64> = grid.iter().map(|&f| power(&ts, &x, f)).collect();
    let mut k = 0;
    for i in 1..fine.len() {
        if fine[i] > fine[k] {
            k = i;
        }
    }
    let mut freq = grid[k];
    if k > 0 && k + 1 < fine.len() {
        let (a, b, c) = (fine[k - 1], fine[k], fine[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            freq += 0.5 * (a - c) / denom * (grid[1] - grid[0]);
        }
    }
    let bpm = (60.0 * freq).clamp(60.0 * BAND_HZ.0, 60.0 * BAND_HZ.1);
    Ok(PulseEstimate { bpm, confidence, window })
}

// Frequencies j / (oversample · span) inside the pass band.
fn band_bins(span_s: f64, oversample: usize) -> impl Iterator<Item = f64> {
    let step = 1.0 / (span_s * oversample as f64);
    let first = libm::ceil(BAND_HZ.0 / step - 1e-9) as usize;
    let last = libm::floor(BAND_HZ.1 / step + 1e-9) as usize;
    (first..=last).map(move |j| j as f64 * step)
}

fn power(ts: &[f64], x: &[f64], f: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (&t, &v) in ts.iter().zip(x) {
        let phase = 2.0 * PI * f * t;
        re += v * libm::cos(phase);
        im -= v * libm::sin(phase);
    }
    re * re + im * im
}

/// Residual of the least-squares line through `(t, x)`.
pub(crate) fn detrend(t: &[f64], x: &[f64]) -> Vec<f64> {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|&a| (a - mt) * (a - mt)).sum();
    let sxy: f64 = t.iter().zip(x).map(|(&a, &b)| (a - mt) * (b - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    t.iter().zip(x).map(|(&a, &b)| b - mx - slope * (a - mt)).collect()
}
