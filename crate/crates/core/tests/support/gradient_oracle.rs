//! Central finite differences of the batch loss against backprop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpc_core::gaze::GazeNet;

pub const STEP: f64 = 1e-5;

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Worst relative error over `probes` random parameters of a freshly
/// initialised net with the given layer sizes.
pub fn worst_probe(layers: &[usize], seed: u64, probes: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = GazeNet::new(layers, seed).unwrap();
    let xs: Vec<Vec<f64>> = (0..8).map(|_| (0..layers[0]).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ts: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
    let inputs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let mut grads = net.new_gradients();
    net.loss_and_gradients(&inputs, &ts, &mut grads).unwrap();

    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.random_range(0..net.parameter_count());
        let p = net.parameter(i);
        net.set_parameter(i, p + STEP);
        let up = net.mse(&inputs, &ts).unwrap();
        net.set_parameter(i, p - STEP);
        let down = net.mse(&inputs, &ts).unwrap();
        net.set_parameter(i, p);
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(relative_error(grads.get(i), numeric));
    }
    worst
}
