use vpc_core::ppg::{hrv_over_segments, hrv_summary, PpgError, PpgSeries};
use vpc_core::Channel;

const FPS: f64 = 30.0;

/// Beat instants from a repeating interval pattern, starting at `first_ms`.
fn beat_train(pattern: &[f64], first_ms: f64, until_ms: f64) -> Vec<f64> {
    let mut beats = vec![first_ms];
    let mut k = 0;
    while *beats.last().unwrap() < until_ms {
        let next = beats.last().unwrap() + pattern[k % pattern.len()];
        beats.push(next);
        k += 1;
    }
    beats
}

/// Sum of Gaussian pulses of width 120 ms at `beats`, sampled at the nominal
/// 30 fps instants over `seconds`.
fn pulse_series(beats: &[f64], seconds: f64) -> PpgSeries {
    let n = (seconds * FPS) as u64;
    let samples = (0..n)
        .map(|k| {
            let t = (k as f64 * 1000.0 / FPS).round();
            let v: f64 = beats.iter().map(|b| (-0.5 * ((t - b) / 120.0).powi(2)).exp()).sum();
            (t as u64, 120.0 + 4.0 * v)
        })
        .collect();
    PpgSeries::from_samples(Channel::G, FPS, samples).unwrap()
}

#[test]
fn periodic_train_has_zero_variability() {
    for period in [600.0, 750.0, 1000.0] {
        let s = pulse_series(&beat_train(&[period], 400.0, 40_000.0), 30.0);
        let h = hrv_summary(&s).unwrap();
        assert!(h.rmssd_ms <= 1.0, "period {period}: rmssd {}", h.rmssd_ms);
        assert!(h.sdnn_ms <= 1.0, "period {period}: sdnn {}", h.sdnn_ms);
    }
}

#[test]
fn alternating_intervals() {
    let s = pulse_series(&beat_train(&[900.0, 1100.0], 400.0, 40_000.0), 30.0);
    let h = hrv_summary(&s).unwrap();
    assert!((h.rmssd_ms - 200.0).abs() <= 1.0, "rmssd {}", h.rmssd_ms);
    assert!((h.sdnn_ms - 100.0).abs() <= 1.0, "sdnn {}", h.sdnn_ms);
}

#[test]
fn interval_list_matches_the_train() {
    let beats = beat_train(&[900.0, 1100.0], 400.0, 40_000.0);
    let h = hrv_summary(&pulse_series(&beats, 30.0)).unwrap();
    assert!(h.inter_beat_intervals_ms.len() >= 20);
    for (i, w) in h.inter_beat_intervals_ms.windows(2).enumerate() {
        assert!((w[0] + w[1] - 2000.0).abs() <= 2.0, "pair {i}: {w:?}");
    }
}

#[test]
fn segments_do_not_share_differences() {
    // Each segment alone is periodic; joined they would show a jump.
    let a = pulse_series(&beat_train(&[800.0], 400.0, 40_000.0), 20.0);
    let b_beats = beat_train(&[1000.0], 400.0, 40_000.0);
    let b_raw = pulse_series(&b_beats, 20.0);
    let shifted = b_raw.samples().iter().map(|&(t, v)| (t + 60_000, v)).collect();
    let b = PpgSeries::from_samples(Channel::G, FPS, shifted).unwrap();
    let h = hrv_over_segments(&[a, b]).unwrap();
    assert!(h.rmssd_ms <= 1.0, "rmssd {}", h.rmssd_ms);
    assert!((h.sdnn_ms - 100.0).abs() <= 5.0, "sdnn {}", h.sdnn_ms);
}

#[test]
fn short_or_flat_series_are_rejected() {
    let short = pulse_series(&beat_train(&[1000.0], 400.0, 20_000.0), 10.0);
    assert!(matches!(hrv_summary(&short), Err(PpgError::SeriesTooShort { .. })));
    let samples = (0..900u64).map(|k| (k * 100 / 3, 120.0)).collect();
    let flat = PpgSeries::from_samples(Channel::G, FPS, samples).unwrap();
    assert!(hrv_summary(&flat).is_err());
}
