use std::f64::consts::PI;

use vpc_core::ppg::{estimate_bpm, forehead_roi, rgb_means, PpgError, PpgSeries};
use vpc_core::synth::{render_synthetic, SyntheticSceneSpec};
use vpc_core::Channel;

const FPS: f64 = 30.0;

fn scene(pulse_hz: Option<f64>, noise: f64) -> SyntheticSceneSpec {
    let mut spec = SyntheticSceneSpec::centered(0.5);
    spec.pulse_hz = pulse_hz;
    spec.noise_sigma = noise;
    spec.seed = 7;
    spec
}

/// Forehead green means of a rendered stream, using the renderer's own face box.
fn forehead_series(spec: &SyntheticSceneSpec, seconds: u64) -> PpgSeries {
    let face = spec.layout().face_rect();
    let frames = render_synthetic(spec, FPS, seconds * 1000).unwrap();
    let mut series = PpgSeries::new(Channel::G, FPS);
    for frame in frames {
        let roi = forehead_roi(face, frame.width(), frame.height()).unwrap();
        let [_, g, _] = rgb_means(&frame, roi).unwrap();
        series.push(frame.timestamp_ms, g).unwrap();
    }
    series
}

/// Brute-force periodogram peak over 0.7..4 Hz in 0.001 Hz steps.
fn dft_peak_hz(series: &PpgSeries) -> f64 {
    let s = series.samples();
    let t0 = s[0].0;
    let mean = s.iter().map(|p| p.1).sum::<f64>() / s.len() as f64;
    let mut best = (0.0, f64::MIN);
    for step in 700..=4000 {
        let f = step as f64 / 1000.0;
        let (mut re, mut im) = (0.0, 0.0);
        for &(t, v) in s {
            let ph = 2.0 * PI * f * (t - t0) as f64 / 1000.0;
            re += (v - mean) * ph.cos();
            im += (v - mean) * ph.sin();
        }
        let p = re * re + im * im;
        if p > best.1 {
            best = (f, p);
        }
    }
    best.0
}

#[test]
fn rendered_pulse_matches_dft_oracle() {
    let series = forehead_series(&scene(Some(1.2), 2.0 / 255.0), 20);
    let oracle = dft_peak_hz(&series) * 60.0;
    assert!((oracle - 72.0).abs() < 1.0, "oracle {oracle}");
    let est = estimate_bpm(&series, 20.0).unwrap();
    assert!((est.bpm - oracle).abs() < 1.0, "estimate {} vs oracle {oracle}", est.bpm);
}

#[test]
fn recovers_rates_across_the_band() {
    for hz in [0.8, 1.0, 1.2, 1.5, 2.0] {
        let series = forehead_series(&scene(Some(hz), 5.0 / 255.0), 12);
        let est = estimate_bpm(&series, 10.0).unwrap();
        assert!((est.bpm - 60.0 * hz).abs() <= 2.0, "{hz} Hz: {}", est.bpm);
    }
}

#[test]
fn constant_illumination_has_no_pulse() {
    let series = forehead_series(&scene(None, 2.0 / 255.0), 12);
    assert!(matches!(estimate_bpm(&series, 10.0), Err(PpgError::NoPulse { .. })));
}

#[test]
fn window_shorter_than_minimum_is_rejected() {
    let series = forehead_series(&scene(Some(1.0), 0.0), 12);
    assert!(matches!(estimate_bpm(&series, 5.0), Err(PpgError::InvalidParameter(_))));
    assert!(matches!(estimate_bpm(&series, 20.0), Err(PpgError::SeriesTooShort { .. })));
}
