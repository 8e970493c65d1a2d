use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PpgError;
use crate::frame::Channel;

/// Longest run of missing samples bridged by interpolation.
pub const MAX_BRIDGED_GAP_MS: u64 = 1000;

/// Channel means over time, strictly increasing in `t_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgSeries {
    pub channel: Channel,
    pub fps: f64,
    samples: Vec<(u64, f64)>,
}

impl PpgSeries {
    pub fn new(channel: Channel, fps: f64) -> Self {
        Self { channel, fps, samples: Vec::new() }
    }

    pub fn from_samples(channel: Channel, fps: f64, samples: Vec<(u64, f64)>) -> Result<Self, PpgError> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(PpgError::InvalidParameter("fps must be positive"));
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].0 <= w[0].0) {
            return Err(PpgError::NonMonotonic(i + 1));
        }
        Ok(Self { channel, fps, samples })
    }

    pub fn push(&mut self, t_ms: u64, value: f64) -> Result<(), PpgError> {
        if self.samples.last().is_some_and(|&(t, _)| t >= t_ms) {
            return Err(PpgError::NonMonotonic(self.samples.len()));
        }
        self.samples.push((t_ms, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(u64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn period_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    /// Time covered by the samples, counting one period for the last one.
    pub fn span_ms(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (b.0 - a.0) as f64 + self.period_ms(),
            _ => 0.0,
        }
    }

    /// The most recent samples, as a series of its own.
    pub fn tail(&self, n: usize) -> PpgSeries {
        let start = self.samples.len().saturating_sub(n);
        Self { channel: self.channel, fps: self.fps, samples: self.samples[start..].to_vec() }
    }

    /// Values resampled onto a uniform grid at the nominal frame rate,
    /// starting at the first sample.
    pub fn uniform(&self) -> Vec<f64> {
        let Some(&(t0, _)) = self.samples.first() else {
            return Vec::new();
        };
        let t_end = self.samples[self.samples.len() - 1].0 as f64;
        let dt = self.period_ms();
        let mut out = Vec::with_capacity(self.samples.len());
        let mut j = 0;
        let mut k = 0usize;
        loop {
            let t = t0 as f64 + k as f64 * dt;
            if t > t_end + 1e-9 {
                break;
            }
            while j + 1 < self.samples.len() && (self.samples[j + 1].0 as f64) < t {
                j += 1;
            }
            let (ta, va) = self.samples[j];
            let v = match self.samples.get(j + 1) {
                Some(&(tb, vb)) if t > ta as f64 => va + (vb - va) * (t - ta as f64) / (tb - ta) as f64,
                _ => va,
            };
            out.push(v);
            k += 1;
        }
        out
    }
}

/// Splits a per-frame trace with missing values into continuous series.
/// Holes whose bounding samples are at most [`MAX_BRIDGED_GAP_MS`] apart are
/// filled by linear interpolation; longer holes start a new segment.
pub fn bridge_gaps(channel: Channel, fps: f64, trace: &[(u64, Option<f64>)]) -> Result<Vec<PpgSeries>, PpgError> {
    if let Some(i) = trace.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(PpgError::NonMonotonic(i + 1));
    }
    let mut segments = Vec::new();
    let mut current: Vec<(u64, f64)> = Vec::new();
    let mut pending: Vec<u64> = Vec::new();
    for &(t, v) in trace {
        match v {
            None => {
                if !current.is_empty() {
                    pending.push(t);
                }
            }
            Some(v) => {
                if let Some(&(ta, va)) = current.last() {
                    if !pending.is_empty() {
                        if t - ta <= MAX_BRIDGED_GAP_MS {
                            for &tm in &pending {
                                current.push((tm, va + (v - va) * (tm - ta) as f64 / (t - ta) as f64));
                            }
                        } else {
                            segments.push(PpgSeries { channel, fps, samples: core::mem::take(&mut current) });
                        }
                        pending.clear();
                    }
                }
                current.push((t, v));
            }
        }
    }
    if !current.is_empty() {
        segments.push(PpgSeries { channel, fps, samples: current });
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn short_holes_are_interpolated() {
        let trace = vec![(0, Some(1.0)), (100, None), (200, None), (300, Some(4.0))];
        let segs = bridge_gaps(Channel::G, 10.0, &trace).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].samples(), &[(0, 1.0), (100, 2.0), (200, 3.0), (300, 4.0)]);
    }

    #[test]
    fn long_holes_split() {
        let mut trace = vec![(0, Some(1.0))];
        trace.extend((1..=20).map(|k| (k * 100, None)));
        trace.push((2100, Some(2.0)));
        let segs = bridge_gaps(Channel::G, 10.0, &trace).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].samples(), &[(2100, 2.0)]);
    }

    #[test]
    fn leading_and_trailing_holes_are_dropped() {
        let trace = vec![(0, None), (10, Some(1.0)), (20, Some(1.0)), (30, None)];
        let segs = bridge_gaps(Channel::G, 100.0, &trace).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 2);
    }

    #[test]
    fn uniform_grid_from_rounded_timestamps() {
        let samples: Vec<(u64, f64)> = (0..30u64).map(|k| ((k * 1000 + 15) / 30, k as f64)).collect();
        let s = PpgSeries::from_samples(Channel::G, 30.0, samples).unwrap();
        let u = s.uniform();
        assert_eq!(u.len(), 30);
        assert!(u.iter().enumerate().all(|(k, &v)| (v - k as f64).abs() < 0.05));
        assert!((s.span_ms() - 1000.0).abs() < 1.0);
    }

    #[test]
    fn monotonicity_enforced() {
        assert_eq!(
            PpgSeries::from_samples(Channel::G, 30.0, vec![(0, 0.0), (0, 1.0)]),
            Err(PpgError::NonMonotonic(1))
        );
        let mut s = PpgSeries::new(Channel::G, 30.0);
        s.push(5, 0.0).unwrap();
        assert!(s.push(5, 0.0).is_err());
    }
}
