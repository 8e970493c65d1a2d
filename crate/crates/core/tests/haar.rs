use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpc_core::haar::{
    detect, eval_window, CascadeModel, CascadeStage, DetectParams, HaarError, HaarFeature, IntegralImage,
    ScaledCascade, WeakClassifier, WeightedRect,
};
use vpc_core::{Frame, Rect};

#[path = "support/haar_oracle.rs"]
mod haar_oracle;
use haar_oracle::Plane;

#[path = "support/haar_random.rs"]
mod haar_random;
use haar_random::{random_cascade, random_plane};

#[test]
fn thousand_windows_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut accepted, mut rejected) = (0, 0);
    for _ in 0..100 {
        let plane = random_plane(&mut rng, 64, 64);
        let ii = IntegralImage::from_luminance(64, 64, &plane);
        let model = random_cascade(&mut rng);
        for _ in 0..10 {
            let scale = rng.random_range(1.0..2.6);
            let side = (24.0 * scale as f64).round() as u32;
            let (x, y) = (rng.random_range(0..=64 - side), rng.random_range(0..=64 - side));
            let oracle = haar_oracle::accepts(&model, &Plane { width: 64, pixels: &plane }, x, y, scale);
            let got = eval_window(&model, &ii, Rect::new(x, y, side, side), scale).unwrap();
            assert_eq!(got, oracle, "window ({x}, {y}) at scale {scale}");
            let cascade = ScaledCascade::new(&model, scale, 65);
            let expected = haar_oracle::stage_sums(&model, &Plane { width: 64, pixels: &plane }, x, y, scale);
            assert_eq!(cascade.stage_outcomes(&ii, x, y), expected);
            if got {
                accepted += 1;
            } else {
                rejected += 1;
            }
        }
    }
    assert_eq!(accepted + rejected, 1000);
    assert!(accepted > 50 && rejected > 50, "{accepted} accepted, {rejected} rejected");
}

#[test]
fn every_rectangle_of_small_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let plane: Vec<u8> = (0..64).map(|_| rng.random()).collect();
        let ii = IntegralImage::from_luminance(8, 8, &plane);
        let direct = Plane { width: 8, pixels: &plane };
        for y in 0..8 {
            for x in 0..8 {
                for h in 1..=8 - y {
                    for w in 1..=8 - x {
                        let r = Rect::new(x, y, w, h);
                        assert_eq!(ii.rect_sum(r), direct.sum(r), "{r:?}");
                        assert_eq!(ii.rect_sq_sum(r), direct.sq_sum(r), "{r:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn table_has_zero_border() {
    let ii = IntegralImage::from_luminance(3, 2, &[1, 2, 3, 4, 5, 6]);
    for x in 0..=3 {
        assert_eq!(ii.entry(x, 0), 0);
    }
    assert_eq!(ii.entry(0, 2), 0);
    assert_eq!(ii.entry(3, 2), 21);
    assert_eq!(ii.sq_entry(3, 2), 91);
}

#[test]
fn out_of_bounds_windows_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_cascade(&mut rng);
    let ii = IntegralImage::from_luminance(30, 30, &[0; 900]);
    for (win, scale) in [(Rect::new(7, 0, 24, 24), 1.0), (Rect::new(0, 0, 24, 24), 1.5), (Rect::new(0, 0, 24, 24), 0.0)] {
        assert!(matches!(eval_window(&model, &ii, win, scale), Err(HaarError::WindowOutOfBounds { .. })));
    }
}

#[test]
fn structural_invariants_are_enforced() {
    let weak = |rects: Vec<WeightedRect>| WeakClassifier {
        feature: HaarFeature { rects },
        threshold: 0.0,
        left_value: 0.0,
        right_value: 1.0,
    };
    let r = |x, w, weight| WeightedRect { x, y: 0, w, h: 4, weight };
    let stage = |w| vec![CascadeStage { weak_classifiers: vec![w], stage_threshold: 0.0 }];
    assert_eq!(CascadeModel::new(24, 24, vec![]), Err(HaarError::NoStages));
    assert_eq!(CascadeModel::new(6, 24, stage(weak(vec![r(0, 2, -1.0), r(0, 1, 2.0)]))), Err(HaarError::BaseWindowTooSmall { w: 6, h: 24 }));
    assert!(matches!(
        CascadeModel::new(24, 24, vec![CascadeStage { weak_classifiers: vec![], stage_threshold: 0.0 }]),
        Err(HaarError::EmptyStage(0))
    ));
    assert!(matches!(CascadeModel::new(24, 24, stage(weak(vec![r(0, 4, -1.0)]))), Err(HaarError::BadFeature { .. })));
    assert!(matches!(CascadeModel::new(24, 24, stage(weak(vec![r(20, 8, -1.0), r(0, 2, 1.0)]))), Err(HaarError::BadFeature { .. })));
    assert!(matches!(CascadeModel::new(24, 24, stage(weak(vec![r(0, 4, 1.0), r(0, 2, 1.0)]))), Err(HaarError::BadFeature { .. })));
    assert!(CascadeModel::new(24, 24, stage(weak(vec![r(0, 4, -1.0), r(0, 2, 2.0)]))).is_ok());
}

#[test]
fn uniform_frame_yields_nothing_under_a_demanding_cascade() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = random_cascade(&mut rng);
    let stages: Vec<CascadeStage> = model
        .stages()
        .iter()
        .cloned()
        .map(|mut s| {
            s.stage_threshold = 1e9;
            s
        })
        .collect();
    model = CascadeModel::new(24, 24, stages).unwrap();
    let frame = Frame::filled(0, 0, 80, 60, [128, 128, 128]);
    assert!(detect(&model, &frame, &DetectParams::faces(60)).is_empty());
}

fn plane_strategy() -> impl Strategy<Value = (u32, u32, Vec<u8>)> {
    (1u32..20, 1u32..20).prop_flat_map(|(w, h)| (Just(w), Just(h), proptest::collection::vec(any::<u8>(), (w * h) as usize)))
}

proptest! {
    #[test]
    fn rect_sums_equal_direct_sums(((w, h, plane), a, b, c, d) in (plane_strategy(), 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64)) {
        let ii = IntegralImage::from_luminance(w, h, &plane);
        let x = (a * w as f64) as u32;
        let y = (b * h as f64) as u32;
        let rw = 1 + (c * (w - x) as f64) as u32 % (w - x);
        let rh = 1 + (d * (h - y) as f64) as u32 % (h - y);
        let r = Rect::new(x, y, rw.min(w - x), rh.min(h - y));
        let direct = Plane { width: w, pixels: &plane };
        prop_assert_eq!(ii.rect_sum(r), direct.sum(r));
        prop_assert_eq!(ii.rect_sq_sum(r), direct.sq_sum(r));
        prop_assert!(ii.window_std(r) >= 1.0);
    }

    #[test]
    fn short_circuit_agrees_with_full_evaluation(seed in any::<u64>(), scale in 1.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane = random_plane(&mut rng, 48, 48);
        let ii = IntegralImage::from_luminance(48, 48, &plane);
        let model = random_cascade(&mut rng);
        let cascade = ScaledCascade::new(&model, scale, 49);
        let (ww, wh) = cascade.window_size();
        for y in (0..=48 - wh).step_by(5) {
            for x in (0..=48 - ww).step_by(5) {
                let full = cascade.stage_outcomes(&ii, x, y);
                prop_assert_eq!(full.len(), model.stages().len());
                prop_assert_eq!(cascade.accepts(&ii, x, y), full.iter().all(|s| s.1));
            }
        }
    }
}
