use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

/// Second-order IIR section, direct form II transposed, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Butterworth low-pass by the bilinear transform with prewarping.
    pub fn low_pass(cutoff_hz: f64, fs: f64) -> Self {
        let (cw, alpha) = Self::warp(cutoff_hz, fs);
        let a0 = 1.0 + alpha;
        let k = (1.0 - cw) / 2.0;
        Self { b: [k / a0, 2.0 * k / a0, k / a0], a: [-2.0 * cw / a0, (1.0 - alpha) / a0] }
    }

    /// Butterworth high-pass by the bilinear transform with prewarping.
    pub fn high_pass(cutoff_hz: f64, fs: f64) -> Self {
        let (cw, alpha) = Self::warp(cutoff_hz, fs);
        let a0 = 1.0 + alpha;
        let k = (1.0 + cw) / 2.0;
        Self { b: [k / a0, -2.0 * k / a0, k / a0], a: [-2.0 * cw / a0, (1.0 - alpha) / a0] }
    }

    fn warp(cutoff_hz: f64, fs: f64) -> (f64, f64) {
        let w0 = 2.0 * PI * cutoff_hz / fs;
        (libm::cos(w0), libm::sin(w0) / SQRT_2)
    }

    pub fn run(&self, x: &mut [f64]) {
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + s1;
            s1 = self.b[1] * *v - self.a[0] * y + s2;
            s2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }
}

/// Zero-phase filtering: forward and backward passes over an odd
/// extension of the signal, which is then trimmed away.
fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    if x.len() < 2 {
        return x.to_vec();
    }
    let pad = pad.min(x.len() - 1);
    let (first, last) = (x[0], x[x.len() - 1]);
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + x.len()].to_vec()
}

/// Zero-phase band-pass over `[lo_hz, hi_hz]` on a uniformly sampled signal.
pub fn band_pass(x: &[f64], fs: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let sections = [Biquad::high_pass(lo_hz, fs), Biquad::low_pass(hi_hz, fs)];
    filtfilt(&sections, x, pad_len(fs, lo_hz))
}

/// Zero-phase low-pass on a uniformly sampled signal.
pub fn low_pass(x: &[f64], fs: f64, hi_hz: f64) -> Vec<f64> {
    filtfilt(&[Biquad::low_pass(hi_hz, fs)], x, pad_len(fs, hi_hz))
}

// About two time constants of the slowest pole.
fn pad_len(fs: f64, slowest_hz: f64) -> usize {
    libm::ceil(2.0 * fs / slowest_hz) as usize
}
