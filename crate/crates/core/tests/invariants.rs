use std::f64::consts::PI;

use proptest::prelude::*;
use vpc_core::fixation::{detect_fixations, raw_side_times, side_times, FixationParams, Side, MIN_FIXATION_SAMPLES};
use vpc_core::frame::nominal_timestamp_ms;
use vpc_core::gaze::{GazeNet, GazeSample, InvalidReason};
use vpc_core::ppg::{estimate_bpm, PpgSeries};
use vpc_core::Channel;

fn samples_from(track: &[Option<f64>]) -> Vec<GazeSample> {
    track
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let t = nominal_timestamp_ms(k as u64, 30.0);
            match x {
                Some(x) => GazeSample::valid(k as u64, t, *x),
                None => GazeSample::invalid(k as u64, t, InvalidReason::EyesNotFound),
            }
        })
        .collect()
}

fn gaze_track() -> impl Strategy<Value = Vec<Option<f64>>> {
    // Piecewise-constant dwell with jitter and dropouts.
    proptest::collection::vec((0.0..1.0f64, 1usize..40, any::<bool>()), 1..20).prop_flat_map(|segs| {
        let n: usize = segs.iter().map(|s| s.1).sum();
        (Just(segs), proptest::collection::vec((-0.02..0.02f64, 0u8..20), n))
    })
    .prop_map(|(segs, noise)| {
        let mut out = Vec::new();
        let mut k = 0;
        for (x, len, _) in segs {
            for _ in 0..len {
                let (jit, drop) = noise[k];
                k += 1;
                out.push(if drop == 0 { None } else { Some((x + jit).clamp(0.0, 1.0)) });
            }
        }
        out
    })
}

#[test]
fn steady_dwell_is_one_fixation() {
    let track = vec![Some(0.25); 45];
    let events = detect_fixations(&samples_from(&track), &FixationParams::default());
    assert_eq!(events.len(), 1);
    let e = events[0];
    assert_eq!((e.t_start_ms, e.duration_ms(), e.n_frames, e.side), (0, 1500, 45, Side::Left));
    assert_eq!(side_times(&events, (0, 1000)), (1000, 0));
    let (raw_left, raw_right) = raw_side_times(&samples_from(&track), (0, 1000), 30.0);
    assert!((raw_left - 1000.0).abs() < 1e-9 && raw_right == 0.0);
}

#[test]
fn boundary_mean_is_dropped() {
    let events = detect_fixations(&samples_from(&vec![Some(0.5); 30]), &FixationParams::default());
    assert!(events.is_empty());
}

#[test]
fn two_samples_are_never_a_fixation() {
    let params = FixationParams { min_duration_ms: 0, ..FixationParams::default() };
    let track = [Some(0.2), Some(0.2), None, Some(0.7), Some(0.7), None];
    assert!(detect_fixations(&samples_from(&track), &params).is_empty());
}

proptest! {
    #[test]
    fn fixations_are_well_formed(track in gaze_track(), dispersion in 0.01..0.2f64, min_ms in 0u64..300) {
        let params = FixationParams { dispersion_max: dispersion, min_duration_ms: min_ms, fps: 30.0 };
        let samples = samples_from(&track);
        let events = detect_fixations(&samples, &params);
        for w in events.windows(2) {
            prop_assert!(w[0].t_end_ms <= w[1].t_start_ms + 1, "{:?}", w);
        }
        for e in &events {
            prop_assert!(e.n_frames as usize >= MIN_FIXATION_SAMPLES);
            prop_assert!(e.duration_ms() >= min_ms);
            prop_assert_eq!(e.duration_ms(), (e.n_frames as f64 * 1000.0 / 30.0).round() as u64);
            prop_assert_eq!(e.side, Side::of(e.mean_x));
            let first = samples.iter().position(|s| s.t_ms == e.t_start_ms).unwrap();
            let run = &samples[first..first + e.n_frames as usize];
            prop_assert!(run.iter().all(|s| s.valid));
            let xs: Vec<f64> = run.iter().map(|s| s.gaze_x.unwrap()).collect();
            let lo = xs.iter().cloned().fold(f64::MAX, f64::min);
            let hi = xs.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(hi - lo <= dispersion);
            prop_assert!(e.mean_x >= lo && e.mean_x <= hi);
        }
        let span = (0, nominal_timestamp_ms(track.len() as u64, 30.0));
        let (l, r) = side_times(&events, span);
        let total: u64 = events.iter().map(|e| e.duration_ms()).sum();
        prop_assert!(l + r <= total);
    }

    #[test]
    fn sigmoid_output_stays_inside_the_unit_interval(seed in any::<u64>(), scale in prop_oneof![Just(1.0), Just(1e3), Just(1e8)], sign in prop_oneof![Just(1.0), Just(-1.0)]) {
        let net = GazeNet::new(&[16, 8, 4, 1], seed).unwrap();
        let x: Vec<f64> = (0..16).map(|i| sign * scale * ((i as f64 * 0.37 + seed as f64 % 7.0).sin())).collect();
        let y = net.predict(&x).unwrap();
        prop_assert!(y > 0.0 && y < 1.0, "{y}");
    }

    #[test]
    fn bpm_ignores_gain_offset_and_linear_drift(hz in 0.8..3.0f64, gain in 0.1..20.0f64, offset in -100.0..100.0f64, drift in -5.0..5.0f64) {
        let make = |g: f64, o: f64, d: f64| {
            let samples = (0..360u64)
                .map(|k| {
                    let t = nominal_timestamp_ms(k, 30.0);
                    let s = t as f64 / 1000.0;
                    (t, o + d * s + g * ((2.0 * PI * hz * s).sin() + 0.3 * (4.0 * PI * hz * s).sin()))
                })
                .collect();
            PpgSeries::from_samples(Channel::G, 30.0, samples).unwrap()
        };
        let base = estimate_bpm(&make(1.0, 0.0, 0.0), 12.0).unwrap();
        let moved = estimate_bpm(&make(gain, offset, drift), 12.0).unwrap();
        prop_assert!((base.bpm - moved.bpm).abs() < 1e-6, "{} vs {}", base.bpm, moved.bpm);
        prop_assert!((base.confidence - moved.confidence).abs() < 1e-6);
        prop_assert!((base.bpm - 60.0 * hz).abs() <= 2.0);
    }
}
