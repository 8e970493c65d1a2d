//! Dispersion-threshold fixation detection on the horizontal gaze signal.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gaze::{GazeSample, SIDE_BOUNDARY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn of(x: f64) -> Side {
        if x < SIDE_BOUNDARY {
            Side::Left
        } else {
            Side::Right
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationEvent {
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub mean_x: f64,
    pub side: Side,
    pub n_frames: u32,
}

impl FixationEvent {
    pub fn duration_ms(&self) -> u64 {
        self.t_end_ms - self.t_start_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixationParams {
    /// Largest allowed max - min of gaze_x within one fixation.
    pub dispersion_max: f64,
    pub min_duration_ms: u64,
    /// Nominal sampling rate; an n-sample run lasts n frame periods.
    pub fps: f64,
}

impl Default for FixationParams {
    fn default() -> Self {
        Self { dispersion_max: 0.05, min_duration_ms: 100, fps: 30.0 }
    }
}

/// Shortest run that can form a fixation, whatever the duration floor.
pub const MIN_FIXATION_SAMPLES: usize = 3;

/// I-DT over the valid samples. Invalid samples, and timestamp gaps longer
/// than one and a half frame periods, end any open run. Runs whose mean is
/// exactly on the boundary are dropped.
pub fn detect_fixations(samples: &[GazeSample], params: &FixationParams) -> Vec<FixationEvent> {
    let period = 1000.0 / params.fps;
    let mut events = Vec::new();
    let mut run: Vec<(u64, f64)> = Vec::new();
    for s in samples {
        let point = if s.valid { s.gaze_x.map(|x| (s.t_ms, x)) } else { None };
        match point {
            Some(p) => {
                if let Some(&(t_prev, _)) = run.last() {
                    if p.0 <= t_prev || (p.0 - t_prev) as f64 > 1.5 * period {
                        scan_run(&run, params, period, &mut events);
                        run.clear();
                    }
                }
                run.push(p);
            }
            None => {
                scan_run(&run, params, period, &mut events);
                run.clear();
            }
        }
    }
    scan_run(&run, params, period, &mut events);
    events
}

fn scan_run(run: &[(u64, f64)], params: &FixationParams, period: f64, out: &mut Vec<FixationEvent>) {
    let m = run.len();
    let mut i = 0;
    while i < m {
        let (mut lo, mut hi) = (run[i].1, run[i].1);
        let mut j = i;
        while j + 1 < m {
            let v = run[j + 1].1;
            if hi.max(v) - lo.min(v) > params.dispersion_max {
                break;
            }
            lo = lo.min(v);
            hi = hi.max(v);
            j += 1;
        }
        let n = j - i + 1;
        let duration = libm::round(n as f64 * period) as u64;
        if n >= MIN_FIXATION_SAMPLES && duration >= params.min_duration_ms {
            let mean_x = run[i..=j].iter().map(|p| p.1).sum::<f64>() / n as f64;
            if mean_x != SIDE_BOUNDARY {
                out.push(FixationEvent {
                    t_start_ms: run[i].0,
                    t_end_ms: run[i].0 + duration,
                    mean_x,
                    side: Side::of(mean_x),
                    n_frames: n as u32,
                });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
}

/// Fixation time inside `[t0, t1)` per side, as `(left_ms, right_ms)`.
pub fn side_times(events: &[FixationEvent], interval: (u64, u64)) -> (u64, u64) {
    let (t0, t1) = interval;
    let mut sides = (0, 0);
    for e in events {
        let a = e.t_start_ms.max(t0);
        let b = e.t_end_ms.min(t1);
        if b > a {
            match e.side {
                Side::Left => sides.0 += b - a,
                Side::Right => sides.1 += b - a,
            }
        }
    }
    sides
}

/// Valid-sample time per side inside `[t0, t1)`, each sample counting one
/// frame period. Kept next to the fixation-based times for comparison.
pub fn raw_side_times(samples: &[GazeSample], interval: (u64, u64), fps: f64) -> (f64, f64) {
    let period = 1000.0 / fps;
    let mut sides = (0.0, 0.0);
    for s in samples.iter().filter(|s| s.t_ms >= interval.0 && s.t_ms < interval.1) {
        if let (true, Some(x)) = (s.valid, s.gaze_x) {
            if x < SIDE_BOUNDARY {
                sides.0 += period;
            } else if x > SIDE_BOUNDARY {
                sides.1 += period;
            }
        }
    }
    sides
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::nominal_timestamp_ms;
    use crate::gaze::InvalidReason;
    use alloc::vec;

    fn stream(xs: &[Option<f64>]) -> Vec<GazeSample> {
        xs.iter()
            .enumerate()
            .map(|(k, x)| {
                let t = nominal_timestamp_ms(k as u64, 30.0);
                match x {
                    Some(x) => GazeSample::valid(k as u64, t, *x),
                    None => GazeSample::invalid(k as u64, t, InvalidReason::NoFace),
                }
            })
            .collect()
    }

    #[test]
    fn three_frames_make_a_hundred_ms() {
        let ev = detect_fixations(&stream(&[Some(0.2); 3]), &FixationParams::default());
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].t_start_ms, ev[0].t_end_ms, ev[0].side, ev[0].n_frames), (0, 100, Side::Left, 3));
        assert!(detect_fixations(&stream(&[Some(0.2); 2]), &FixationParams::default()).is_empty());
    }

    #[test]
    fn alternating_gaze_never_fixates() {
        let xs: Vec<Option<f64>> = (0..60).map(|k| Some(if k % 2 == 0 { 0.1 } else { 0.9 })).collect();
        assert!(detect_fixations(&stream(&xs), &FixationParams::default()).is_empty());
    }

    #[test]
    fn invalid_sample_splits_runs() {
        let mut xs = vec![Some(0.7); 4];
        xs.push(None);
        xs.extend([Some(0.7); 4]);
        let ev = detect_fixations(&stream(&xs), &FixationParams::default());
        assert_eq!(ev.len(), 2);
        assert!(ev.iter().all(|e| e.side == Side::Right && e.n_frames == 4));
    }

    #[test]
    fn boundary_mean_is_dropped() {
        let ev = detect_fixations(&stream(&[Some(0.48), Some(0.52), Some(0.5)]), &FixationParams::default());
        assert!(ev.is_empty());
    }

    #[test]
    fn time_gap_splits_runs() {
        let mut s = stream(&[Some(0.3); 6]);
        for x in &mut s[3..] {
            x.t_ms += 500;
        }
        let ev = detect_fixations(&s, &FixationParams::default());
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn clipping_arithmetic() {
        assert_eq!(side_times(&[], (0, 100)), (0, 0));
        let e = |a, b, x: f64| FixationEvent { t_start_ms: a, t_end_ms: b, mean_x: x, side: Side::of(x), n_frames: 3 };
        assert_eq!(side_times(&[e(100, 400, 0.2)], (100, 400)), (300, 0));
        let evs = [e(0, 150, 0.2), e(200, 300, 0.8), e(350, 600, 0.1)];
        assert_eq!(side_times(&evs, (100, 500)), (50 + 150, 100));
    }
}
