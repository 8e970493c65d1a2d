//! Random planes and cascades for the oracle comparisons.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vpc_core::haar::{CascadeModel, CascadeStage, HaarFeature, WeakClassifier, WeightedRect};

/// Random luminance plane mixing a gradient, texture and a flat patch so the
/// window deviation takes both floored and ordinary values.
pub fn random_plane(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<u8> {
    let flat = (rng.random_range(0..w), rng.random_range(0..h), rng.random_range(0u8..=255));
    let amp = rng.random_range(0..=120);
    (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            if x >= flat.0 && y >= flat.1 && x < flat.0 + 20 && y < flat.1 + 20 {
                return flat.2;
            }
            let base = (x * 2 + y) as i32;
            let noise = if amp == 0 { 0 } else { rng.random_range(-amp..=amp) };
            (base + noise).clamp(0, 255) as u8
        })
        .collect()
}

fn random_rect(rng: &mut ChaCha8Rng, base: u32) -> (u32, u32, u32, u32) {
    let w = rng.random_range(1..=base);
    let h = rng.random_range(1..=base);
    (rng.random_range(0..=base - w), rng.random_range(0..=base - h), w, h)
}

pub fn random_cascade(rng: &mut ChaCha8Rng) -> CascadeModel {
    let base = 24;
    let stages = (0..rng.random_range(1..=3))
        .map(|_| {
            let weak: Vec<WeakClassifier> = (0..rng.random_range(1..=6))
                .map(|_| {
                    let n = rng.random_range(2..=3);
                    let rects = (0..n)
                        .map(|i| {
                            let (x, y, w, h) = random_rect(rng, base);
                            let mag = rng.random_range(0.5..3.0);
                            WeightedRect { x, y, w, h, weight: if i == 0 { -mag } else { mag } }
                        })
                        .collect();
                    WeakClassifier {
                        feature: HaarFeature { rects },
                        threshold: rng.random_range(-0.3..0.3),
                        left_value: rng.random_range(-1.0..1.0),
                        right_value: rng.random_range(-1.0..1.0),
                    }
                })
                .collect();
            let spread = weak.len() as f64 * 0.4;
            CascadeStage { weak_classifiers: weak, stage_threshold: rng.random_range(-spread..spread) }
        })
        .collect();
    CascadeModel::new(base, base, stages).unwrap()
}
