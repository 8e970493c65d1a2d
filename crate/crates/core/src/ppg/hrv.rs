use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::filter::{band_pass, low_pass};
use super::series::PpgSeries;
use super::spectrum::{detrend, estimate_bpm};
use super::{PpgError, BAND_HZ, MIN_HRV_SPAN_MS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HrvSummary {
    pub inter_beat_intervals_ms: Vec<f64>,
    /// Root mean square of successive interval differences.
    pub rmssd_ms: f64,
    /// Population standard deviation of the intervals.
    pub sdnn_ms: f64,
}

/// Beat intervals and their variability over a whole series.
///
/// Beats are the band-passed signal's local maxima at least `60 / (1.5 bpm)`
/// seconds apart with a prominence of at least a quarter of its standard
/// deviation. Each beat is then placed on the low-passed signal, which keeps
/// the pulse shape, by climbing to the nearest maximum and fitting a
/// parabola through it and its neighbours.
pub fn hrv_summary(series: &PpgSeries) -> Result<HrvSummary, PpgError> {
    let beats = beat_times(series)?;
    summarize(&[intervals(&beats)])
}

/// Like [`hrv_summary`] over several continuous segments of one recording.
/// Successive differences never straddle two segments; segments too short
/// or too weak to yield beats are skipped.
pub fn hrv_over_segments(segments: &[PpgSeries]) -> Result<HrvSummary, PpgError> {
    let runs: Vec<Vec<f64>> = segments
        .iter()
        .filter_map(|s| beat_times(s).ok())
        .map(|b| intervals(&b))
        .collect();
    summarize(&runs)
}

fn intervals(beats: &[f64]) -> Vec<f64> {
    beats.windows(2).map(|w| w[1] - w[0]).collect()
}

fn summarize(runs: &[Vec<f64>]) -> Result<HrvSummary, PpgError> {
    let all: Vec<f64> = runs.iter().flatten().copied().collect();
    if all.len() < 3 {
        return Err(PpgError::TooFewBeats { peaks: if all.is_empty() { 0 } else { all.len() + 1 } });
    }
    let diffs: Vec<f64> = runs.iter().flat_map(|r| r.windows(2).map(|w| w[1] - w[0])).collect();
    let rmssd = if diffs.is_empty() {
        0.0
    } else {
        libm::sqrt(diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64)
    };
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let sdnn = libm::sqrt(all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / all.len() as f64);
    Ok(HrvSummary { inter_beat_intervals_ms: all, rmssd_ms: rmssd, sdnn_ms: sdnn })
}

/// Beat times in ms on the series' clock.
fn beat_times(series: &PpgSeries) -> Result<Vec<f64>, PpgError> {
    let span = series.span_ms();
    if span + 0.5 < MIN_HRV_SPAN_MS as f64 {
        return Err(PpgError::SeriesTooShort { have_ms: libm::round(span) as u64, need_ms: MIN_HRV_SPAN_MS });
    }
    let bpm = estimate_bpm(series, series.len() as f64 / series.fps)?.bpm;
    let fs = series.fps;
    let dt = series.period_ms();
    let u = series.uniform();
    let grid: Vec<f64> = (0..u.len()).map(|k| k as f64 / fs).collect();
    let flat = detrend(&grid, &u);
    let bp = band_pass(&flat, fs, BAND_HZ.0, BAND_HZ.1);
    let lp = low_pass(&flat, fs, BAND_HZ.1);

    let min_dist = 60.0 / (1.5 * bpm) * fs;
    let mean = bp.iter().sum::<f64>() / bp.len() as f64;
    let std = libm::sqrt(bp.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / bp.len() as f64);
    let peaks = find_peaks(&bp, min_dist, 0.25 * std);

    let t0 = series.samples()[0].0 as f64;
    let mut beats: Vec<f64> = Vec::with_capacity(peaks.len());
    for p in peaks {
        let pos = refine(&lp, p);
        let t = t0 + pos * dt;
        if beats.last().is_none_or(|&b| t - b > 1e-6) {
            beats.push(t);
        }
    }
    if beats.len() < 4 {
        return Err(PpgError::TooFewBeats { peaks: beats.len() });
    }
    Ok(beats)
}

/// Indices of local maxima with the given minimum prominence, thinned so no
/// two are closer than `min_dist` samples (taller peaks win).
fn find_peaks(x: &[f64], min_dist: f64, min_prominence: f64) -> Vec<usize> {
    let n = x.len();
    let mut cands: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| x[i] > x[i - 1] && x[i] >= x[i + 1])
        .filter(|&i| prominence(x, i) >= min_prominence)
        .collect();
    cands.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in cands {
        if kept.iter().all(|&k| (k as f64 - c as f64).abs() >= min_dist) {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept
}

fn prominence(x: &[f64], i: usize) -> f64 {
    let mut left = x[i];
    for j in (0..i).rev() {
        if x[j] > x[i] {
            break;
        }
        left = left.min(x[j]);
    }
    let mut right = x[i];
    for &v in &x[i + 1..] {
        if v > x[i] {
            break;
        }
        right = right.min(v);
    }
    x[i] - left.max(right)
}

// Sub-sample position of the maximum of `x` nearest to `i`.
fn refine(x: &[f64], mut i: usize) -> f64 {
    loop {
        if i + 1 < x.len() && x[i + 1] > x[i] {
            i += 1;
        } else if i > 0 && x[i - 1] > x[i] {
            i -= 1;
        } else {
            break;
        }
    }
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom < 0.0 {
        i as f64 + 0.5 * (a - c) / denom
    } else {
        i as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Channel;
    use core::f64::consts::PI;

    fn sampled(f: impl Fn(f64) -> f64, seconds: f64) -> PpgSeries {
        let n = (seconds * 30.0) as u64;
        let samples = (0..n).map(|k| ((k * 1000 + 15) / 30, f(k as f64 / 30.0))).collect();
        PpgSeries::from_samples(Channel::G, 30.0, samples).unwrap()
    }

    #[test]
    fn periodic_signal_has_no_variability() {
        let s = sampled(|t| libm::sin(2.0 * PI * t), 30.0);
        let h = hrv_summary(&s).unwrap();
        assert!(h.inter_beat_intervals_ms.iter().all(|&v| (v - 1000.0).abs() < 1.0));
        assert!(h.rmssd_ms < 1.0 && h.sdnn_ms < 1.0);
    }

    #[test]
    fn short_series_is_rejected() {
        let s = sampled(|t| libm::sin(2.0 * PI * t), 10.0);
        assert!(matches!(hrv_summary(&s), Err(PpgError::SeriesTooShort { .. })));
    }

    #[test]
    fn peak_thinning() {
        let x = [0.0, 1.0, 0.0, 2.0, 0.0, 0.5, 0.0, 3.0, 0.0];
        assert_eq!(find_peaks(&x, 1.0, 0.0), [1, 3, 5, 7]);
        assert_eq!(find_peaks(&x, 3.0, 0.0), [3, 7]);
        assert_eq!(find_peaks(&x, 1.0, 0.9), [1, 3, 7]);
    }

    #[test]
    fn parabolic_refinement() {
        let x: Vec<f64> = (0..9).map(|k| -((k as f64 - 4.3) * (k as f64 - 4.3))).collect();
        assert!((refine(&x, 1) - 4.3).abs() < 1e-12);
    }

    #[test]
    fn summary_arithmetic() {
        let h = summarize(&[alloc::vec![900.0, 1100.0, 900.0, 1100.0]]).unwrap();
        assert_eq!(h.rmssd_ms, 200.0);
        assert_eq!(h.sdnn_ms, 100.0);
        assert!(matches!(summarize(&[alloc::vec![1.0, 2.0]]), Err(PpgError::TooFewBeats { peaks: 3 })));
    }
}

