use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patch::EyePatch;
use super::GazeError;

/// 1024 inputs, hidden ReLU layers of 500 and 100 units, one sigmoid output.
pub const STANDARD_LAYERS: [usize; 4] = [1024, 500, 100, 1];

// Keeps the sigmoid strictly inside (0, 1) once exp() saturates.
const OUT_LO: f64 = f64::MIN_POSITIVE;
const OUT_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Step size over the epochs of one `fit`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `learning_rate` towards zero, evaluated at the
    /// middle of each epoch.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, epoch: u32, epochs: u32) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let progress = (epoch as f64 + 0.5) / epochs.max(1) as f64;
                base * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: u32,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub schedule: LrSchedule,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self { epochs: 2000, learning_rate: 0.01, batch_size: 32, seed: 0, schedule: LrSchedule::Constant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub epochs: u32,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub samples: usize,
    /// Mean squared error over the whole training set after the last epoch.
    pub final_mse: f64,
}

/// Fully connected network with ReLU hidden layers and a single logistic
/// output. Weight matrices are row-major, one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNet")]
pub struct GazeNet {
    layers: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainReport>,
}

#[derive(Deserialize)]
struct RawNet {
    layers: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    #[serde(default)]
    training: Option<TrainReport>,
}

impl TryFrom<RawNet> for GazeNet {
    type Error = GazeError;

    fn try_from(raw: RawNet) -> Result<Self, GazeError> {
        let mut net = GazeNet::zeros(&raw.layers)?;
        if raw.weights.len() != net.weights.len() || raw.biases.len() != net.biases.len() {
            return Err(GazeError::InvalidNet("layer count does not match parameter arrays"));
        }
        for l in 0..net.weights.len() {
            if raw.weights[l].len() != net.weights[l].len() || raw.biases[l].len() != net.biases[l].len() {
                return Err(GazeError::InvalidNet("parameter array has the wrong length"));
            }
        }
        if raw.weights.iter().chain(&raw.biases).flatten().any(|v| !v.is_finite()) {
            return Err(GazeError::InvalidNet("non-finite parameter"));
        }
        net.weights = raw.weights;
        net.biases = raw.biases;
        net.training = raw.training;
        Ok(net)
    }
}

/// Parameter-shaped accumulator for loss gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zero(&mut self) {
        self.weights.iter_mut().chain(self.biases.iter_mut()).for_each(|v| v.fill(0.0));
    }

    /// Gradient at the same flat index as [`GazeNet::parameter`].
    pub fn get(&self, index: usize) -> f64 {
        let (l, is_bias, i) = locate(&self.weights, &self.biases, index);
        if is_bias {
            self.biases[l][i]
        } else {
            self.weights[l][i]
        }
    }
}

fn locate(weights: &[Vec<f64>], biases: &[Vec<f64>], mut index: usize) -> (usize, bool, usize) {
    for l in 0..weights.len() {
        if index < weights[l].len() {
            return (l, false, index);
        }
        index -= weights[l].len();
        if index < biases[l].len() {
            return (l, true, index);
        }
        index -= biases[l].len();
    }
    panic!("parameter index out of range");
}

impl GazeNet {
    /// All-zero parameters.
    pub fn zeros(layers: &[usize]) -> Result<Self, GazeError> {
        if layers.len() < 2 {
            return Err(GazeError::InvalidNet("need at least an input and an output layer"));
        }
        if layers.contains(&0) {
            return Err(GazeError::InvalidNet("empty layer"));
        }
        if layers[layers.len() - 1] != 1 {
            return Err(GazeError::InvalidNet("output layer must have one unit"));
        }
        let weights = layers.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layers[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Self { layers: layers.to_vec(), weights, biases, training: None })
    }

    /// Weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn new(layers: &[usize], seed: u64) -> Result<Self, GazeError> {
        let mut net = Self::zeros(layers)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let bound = 1.0 / libm::sqrt(layers[l] as f64);
            w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        Ok(net)
    }

    pub fn standard(seed: u64) -> Self {
        Self::new(&STANDARD_LAYERS, seed).expect("standard layer sizes are valid")
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn input_len(&self) -> usize {
        self.layers[0]
    }

    pub fn is_standard(&self) -> bool {
        self.layers == STANDARD_LAYERS
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    /// Number of scalar parameters; flat order is weights then biases of
    /// each layer in turn.
    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn parameter(&self, index: usize) -> f64 {
        let (l, is_bias, i) = locate(&self.weights, &self.biases, index);
        if is_bias {
            self.biases[l][i]
        } else {
            self.weights[l][i]
        }
    }

    pub fn set_parameter(&mut self, index: usize, value: f64) {
        let (l, is_bias, i) = locate(&self.weights, &self.biases, index);
        if is_bias {
            self.biases[l][i] = value;
        } else {
            self.weights[l][i] = value;
        }
    }

    pub fn new_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn predict(&self, input: &[f64]) -> Result<f64, GazeError> {
        if input.len() != self.input_len() {
            return Err(GazeError::ShapeMismatch { expected: self.input_len(), got: input.len() });
        }
        let mut ws = Workspace::new(&self.layers, 1);
        ws.acts[0].copy_from_slice(input);
        self.forward(&mut ws, 1);
        Ok(ws.acts[self.layers.len() - 1][0])
    }

    pub fn predict_patch(&self, patch: &EyePatch) -> Result<f64, GazeError> {
        self.predict(patch.values())
    }

    /// Mean squared error over `inputs` and its gradient, written into `grads`.
    pub fn loss_and_gradients(
        &self,
        inputs: &[&[f64]],
        targets: &[f64],
        grads: &mut Gradients,
    ) -> Result<f64, GazeError> {
        self.check_inputs(inputs, targets)?;
        let mut ws = Workspace::new(&self.layers, inputs.len());
        for (b, x) in inputs.iter().enumerate() {
            ws.input_row(self.layers[0], b).copy_from_slice(x);
        }
        grads.zero();
        Ok(self.backprop(&mut ws, targets, grads))
    }

    /// Mean squared error over a data set.
    pub fn mse(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<f64, GazeError> {
        self.check_inputs(inputs, targets)?;
        let mut total = 0.0;
        let mut ws = Workspace::new(&self.layers, 64);
        for (xs, ts) in inputs.chunks(64).zip(targets.chunks(64)) {
            for (b, x) in xs.iter().enumerate() {
                ws.input_row(self.layers[0], b).copy_from_slice(x);
            }
            self.forward(&mut ws, xs.len());
            let out = &ws.acts[self.layers.len() - 1];
            total += ts.iter().enumerate().map(|(b, t)| (out[b] - t) * (out[b] - t)).sum::<f64>();
        }
        Ok(total / inputs.len() as f64)
    }

    /// Mini-batch SGD on mean squared error. No early stopping: the final
    /// epoch's parameters are kept.
    pub fn fit(&mut self, inputs: &[&[f64]], targets: &[f64], params: &TrainParams) -> Result<TrainReport, GazeError> {
        self.check_inputs(inputs, targets)?;
        if inputs.is_empty() || params.batch_size == 0 {
            return Err(GazeError::InvalidNet("empty training set or zero batch size"));
        }
        let batch = params.batch_size.min(inputs.len());
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5EED_0F_5A_FF1E);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut ws = Workspace::new(&self.layers, batch);
        let mut grads = self.new_gradients();
        let mut batch_targets = vec![0.0; batch];
        for epoch in 0..params.epochs {
            let rate = params.schedule.rate(params.learning_rate, epoch, params.epochs);
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(batch) {
                for (b, &k) in chunk.iter().enumerate() {
                    ws.input_row(self.layers[0], b).copy_from_slice(inputs[k]);
                    batch_targets[b] = targets[k];
                }
                grads.zero();
                let loss = self.backprop(&mut ws, &batch_targets[..chunk.len()], &mut grads);
                epoch_loss += loss * chunk.len() as f64;
                self.apply(&grads, rate);
            }
            if !epoch_loss.is_finite() {
                return Err(GazeError::NonFiniteLoss { epoch });
            }
        }
        let final_mse = self.mse(inputs, targets)?;
        if !final_mse.is_finite() {
            return Err(GazeError::NonFiniteLoss { epoch: params.epochs });
        }
        let report = TrainReport {
            seed: params.seed,
            epochs: params.epochs,
            learning_rate: params.learning_rate,
            schedule: params.schedule,
            batch_size: params.batch_size,
            samples: inputs.len(),
            final_mse,
        };
        self.training = Some(report.clone());
        Ok(report)
    }

    fn check_inputs(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<(), GazeError> {
        if inputs.len() != targets.len() {
            return Err(GazeError::LengthMismatch { truths: targets.len(), predictions: inputs.len() });
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.input_len()) {
            return Err(GazeError::ShapeMismatch { expected: self.input_len(), got: x.len() });
        }
        Ok(())
    }

    fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (p, g) in self.weights.iter_mut().zip(&grads.weights).chain(self.biases.iter_mut().zip(&grads.biases)) {
            p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
        }
    }

    fn forward(&self, ws: &mut Workspace, rows: usize) {
        let last = self.weights.len() - 1;
        for l in 0..self.weights.len() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let a = &head[l];
            let out = &mut tail[0];
            let w = &self.weights[l];
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let bias = self.biases[l][j];
                for b in 0..rows {
                    let z = bias + dot(row, &a[b * n_in..(b + 1) * n_in]);
                    out[b * n_out + j] = if l == last { sigmoid(z) } else { z.max(0.0) };
                }
            }
        }
    }

    // Forward and backward pass over the first `ws.rows` rows; gradients
    // are added into `grads`. Returns the batch MSE.
    fn backprop(&self, ws: &mut Workspace, targets: &[f64], grads: &mut Gradients) -> f64 {
        let rows = targets.len();
        self.forward(ws, rows);
        let depth = self.weights.len();
        let y = &ws.acts[depth];
        let mut loss = 0.0;
        for b in 0..rows {
            let diff = y[b] - targets[b];
            loss += diff * diff;
            ws.deltas[depth - 1][b] = 2.0 * diff / rows as f64 * y[b] * (1.0 - y[b]);
        }

        for l in (0..depth).rev() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let a = &ws.acts[l];
            let (lower, upper) = ws.deltas.split_at_mut(l);
            let delta = &upper[0];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for j in 0..n_out {
                let grow = &mut gw[j * n_in..(j + 1) * n_in];
                for b in 0..rows {
                    let d = delta[b * n_out + j];
                    if d != 0.0 {
                        axpy(grow, d, &a[b * n_in..(b + 1) * n_in]);
                        gb[j] += d;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let prev = &mut lower[l - 1];
            let w = &self.weights[l];
            for b in 0..rows {
                let p = &mut prev[b * n_in..(b + 1) * n_in];
                p.fill(0.0);
                for j in 0..n_out {
                    let d = delta[b * n_out + j];
                    if d != 0.0 {
                        axpy(p, d, &w[j * n_in..(j + 1) * n_in]);
                    }
                }
                // ReLU derivative, read off the stored activation.
                for (p, &act) in p.iter_mut().zip(&a[b * n_in..(b + 1) * n_in]) {
                    if act <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
        }
        loss / rows as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + libm::exp(-z))).clamp(OUT_LO, OUT_HI)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

// Per-layer activations and deltas for a batch, row per sample.
struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(layers: &[usize], rows: usize) -> Self {
        Self {
            acts: layers.iter().map(|&n| vec![0.0; n * rows]).collect(),
            deltas: layers[1..].iter().map(|&n| vec![0.0; n * rows]).collect(),
        }
    }

    fn input_row(&mut self, n: usize, b: usize) -> &mut [f64] {
        &mut self.acts[0][b * n..(b + 1) * n]
    }
}
