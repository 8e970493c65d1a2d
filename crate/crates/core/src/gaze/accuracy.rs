use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GazeError, SIDE_BOUNDARY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub n_points: usize,
    /// Mean absolute horizontal error, percent of screen width.
    pub mean_abs_error_pct: f64,
    /// Share of points predicted on the correct side of the boundary.
    pub lr_discrimination_pct: f64,
    pub per_point: Vec<(f64, f64)>,
}

/// The published human-trial operating point, kept for side-by-side
/// comparison. Synthetic runs are never asserted against it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub n_points: usize,
    pub mean_abs_error_pct: f64,
    pub lr_discrimination_pct: f64,
}

pub const REPORTED_OPERATING_POINT: OperatingPoint =
    OperatingPoint { n_points: 100, mean_abs_error_pct: 3.0, lr_discrimination_pct: 100.0 };

/// `n / 2` points on each screen half, away from the boundary and the edges,
/// in shuffled order.
pub fn generate_click_points(n: usize, seed: u64) -> Result<Vec<(f64, f64)>, GazeError> {
    if n % 2 != 0 {
        return Err(GazeError::OddCount(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let x = if i < n / 2 { rng.random_range(0.05..=0.45) } else { rng.random_range(0.55..=0.95) };
        points.push((x, rng.random_range(0.1..=0.9)));
    }
    points.shuffle(&mut rng);
    Ok(points)
}

pub fn assess_accuracy(click_points: &[(f64, f64)], predictions: &[f64]) -> Result<AccuracyReport, GazeError> {
    if click_points.len() != predictions.len() || click_points.is_empty() {
        return Err(GazeError::LengthMismatch { truths: click_points.len(), predictions: predictions.len() });
    }
    let n = click_points.len();
    let mut abs_err = 0.0;
    let mut correct = 0usize;
    let mut per_point = Vec::with_capacity(n);
    for (&(tx, _), &px) in click_points.iter().zip(predictions) {
        abs_err += (px - tx).abs();
        if side(px) == side(tx) && side(tx) != 0 {
            correct += 1;
        }
        per_point.push((tx, px));
    }
    Ok(AccuracyReport {
        n_points: n,
        mean_abs_error_pct: 100.0 * abs_err / n as f64,
        lr_discrimination_pct: 100.0 * correct as f64 / n as f64,
        per_point,
    })
}

fn side(x: f64) -> i8 {
    if x < SIDE_BOUNDARY {
        -1
    } else if x > SIDE_BOUNDARY {
        1
    } else {
        0
    }
}
