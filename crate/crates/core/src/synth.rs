//! Synthetic frame renderer: a schematic frontal face whose pupils follow a
//! scripted horizontal gaze track and whose forehead carries an optional
//! sinusoidal pulse in the green channel. It is the ground-truth source for
//! every desk-scale check of detection, gaze and heart-rate estimation.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{nominal_timestamp_ms, Frame};
use crate::geom::{NormRect, Rect};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("gaze track is empty")]
    EmptyGazeTrack,
    #[error("gaze track timestamps decrease at entry {0}")]
    UnorderedGazeTrack(usize),
    #[error("pulse frequency {0} Hz outside [0.7, 4.0]")]
    PulseOutOfRange(f64),
    #[error("face box must be a non-empty rectangle inside the frame")]
    BadFaceBox,
    #[error("invalid scene: {0}")]
    InvalidSpec(&'static str),
}

fn default_width() -> u32 {
    320
}
fn default_height() -> u32 {
    240
}
fn default_pulse_amplitude() -> f64 {
    10.0
}

/// Scene description for the renderer.
///
/// `noise_sigma` is the standard deviation of additive Gaussian pixel noise
/// as a fraction of full scale, so `5.0 / 255.0` means 5 pixel-value units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    /// `(timestamp_ms, true_gaze_x)` knots, interpolated linearly.
    pub gaze_track: Vec<(u64, f64)>,
    #[serde(default)]
    pub pulse_hz: Option<f64>,
    pub face_box_norm: NormRect,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default)]
    pub seed: u64,
    /// Peak green-channel excursion of the forehead pulse in pixel-value units.
    #[serde(default = "default_pulse_amplitude")]
    pub pulse_amplitude: f64,
    /// Additional faces rendered with the same gaze, e.g. to provoke the
    /// multiple-faces condition.
    #[serde(default)]
    pub extra_faces: Vec<NormRect>,
}

impl SyntheticSceneSpec {
    /// Centred face with constant gaze, no pulse and no noise.
    pub fn centered(gaze_x: f64) -> Self {
        Self {
            gaze_track: alloc::vec![(0, gaze_x)],
            pulse_hz: None,
            face_box_norm: DEFAULT_FACE_BOX,
            noise_sigma: 0.0,
            width: default_width(),
            height: default_height(),
            seed: 0,
            pulse_amplitude: default_pulse_amplitude(),
            extra_faces: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.gaze_track.is_empty() {
            return Err(SynthError::EmptyGazeTrack);
        }
        for (i, w) in self.gaze_track.windows(2).enumerate() {
            if w[1].0 < w[0].0 {
                return Err(SynthError::UnorderedGazeTrack(i + 1));
            }
        }
        if let Some(f) = self.pulse_hz {
            if !(0.7..=4.0).contains(&f) {
                return Err(SynthError::PulseOutOfRange(f));
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::InvalidSpec("frame dimensions must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidSpec("noise_sigma must be nonnegative"));
        }
        if !self.face_box_norm.is_valid() || self.extra_faces.iter().any(|f| !f.is_valid()) {
            return Err(SynthError::BadFaceBox);
        }
        Ok(())
    }

    /// True gaze at `t_ms`, clamped to the track ends.
    pub fn gaze_at(&self, t_ms: u64) -> f64 {
        let track = &self.gaze_track;
        if t_ms <= track[0].0 {
            return track[0].1;
        }
        let last = track[track.len() - 1];
        if t_ms >= last.0 {
            return last.1;
        }
        // first knot strictly after t
        let hi = track.partition_point(|k| k.0 <= t_ms);
        let (t0, x0) = track[hi - 1];
        let (t1, x1) = track[hi];
        if t1 == t0 {
            return x1;
        }
        x0 + (x1 - x0) * (t_ms - t0) as f64 / (t1 - t0) as f64
    }

    pub fn layout(&self) -> FaceLayout {
        FaceLayout::new(self.face_box_norm, self.width, self.height)
    }
}

/// Face box used by the stock scenes: a face roughly 150 px wide in a 320×240 frame.
pub const DEFAULT_FACE_BOX: NormRect = NormRect::new(0.265_625, 0.1, 0.468_75, 0.8);

const BACKGROUND: [f64; 3] = [60.0, 70.0, 80.0];
const SKIN: [f64; 3] = [200.0, 160.0, 140.0];
const BROW: [f64; 3] = [90.0, 60.0, 50.0];
const SCLERA: [f64; 3] = [230.0, 230.0, 230.0];
const PUPIL: [f64; 3] = [15.0, 15.0, 15.0];
const NOSE: [f64; 3] = [160.0, 120.0, 100.0];
const MOUTH: [f64; 3] = [120.0, 50.0, 50.0];

/// Proportions of the schematic face. The defaults are what the shipped
/// cascades detect reliably.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceStyle {
    /// Edge softness of every shape, in pixels.
    pub edge_px: f64,
    pub eye_dx: f64,
    pub eye_dy: f64,
    pub socket_w: f64,
    pub socket_aspect: f64,
    pub brow_rise: f64,
    pub brow_half_h: f64,
    pub iris_r: f64,
    pub pupil_r: f64,
    pub iris_level: f64,
}

impl Default for FaceStyle {
    fn default() -> Self {
        Self {
            edge_px: 2.0,
            eye_dx: 0.22,
            eye_dy: 0.08,
            socket_w: 0.22,
            socket_aspect: 0.7,
            brow_rise: 0.8,
            brow_half_h: 0.18,
            iris_r: 0.45,
            pupil_r: 0.25,
            iris_level: 60.0,
        }
    }
}

/// Horizontal pupil travel over the full gaze range, as a fraction of socket width.
pub const PUPIL_TRAVEL: f64 = 0.4;

/// Pixel geometry of one rendered face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceLayout {
    pub center: (f64, f64),
    /// Head ellipse semi-axes.
    pub semi_axes: (f64, f64),
    /// Eye centres, image-left first.
    pub eye_centers: [(f64, f64); 2],
    /// Eye socket (sclera) width and height.
    pub socket: (f64, f64),
    /// Brow centre offset above the eye and brow half extents.
    pub brow_rise: f64,
    pub brow_half: (f64, f64),
    /// Rows above this line belong to the forehead.
    pub forehead_bottom: f64,
    pub face_px: (f64, f64, f64, f64),
    pub style: FaceStyle,
}

impl FaceLayout {
    pub fn new(face: NormRect, width: u32, height: u32) -> Self {
        Self::styled(face, width, height, FaceStyle::default())
    }

    pub fn styled(face: NormRect, width: u32, height: u32, style: FaceStyle) -> Self {
        let (fx, fy, fw, fh) = face.to_pixels(width, height);
        let cx = fx + fw / 2.0;
        let cy = fy + fh / 2.0;
        let ey = cy - style.eye_dy * fh;
        let sw = style.socket_w * fw;
        let sh = style.socket_aspect * sw;
        let brow_rise = style.brow_rise * sh;
        let brow_half = (0.6 * sw, style.brow_half_h * sh);
        let forehead_bottom = ey - brow_rise - brow_half.1 - 0.02 * fh;
        Self {
            center: (cx, cy),
            semi_axes: (fw / 2.0, fh / 2.0),
            eye_centers: [(cx - style.eye_dx * fw, ey), (cx + style.eye_dx * fw, ey)],
            socket: (sw, sh),
            brow_rise,
            brow_half,
            forehead_bottom,
            face_px: (fx, fy, fw, fh),
            style,
        }
    }

    /// Pupil centre of eye `i` for a given gaze.
    pub fn pupil_center(&self, eye: usize, gaze_x: f64) -> (f64, f64) {
        let (ex, ey) = self.eye_centers[eye];
        (ex + (gaze_x - 0.5) * PUPIL_TRAVEL * self.socket.0, ey)
    }

    /// Bounding box of eye socket `i`, in whole pixels.
    pub fn socket_box(&self, eye: usize) -> Rect {
        let (ex, ey) = self.eye_centers[eye];
        let (sw, sh) = self.socket;
        let x0 = libm::floor(ex - sw / 2.0).max(0.0);
        let y0 = libm::floor(ey - sh / 2.0).max(0.0);
        Rect::new(
            x0 as u32,
            y0 as u32,
            libm::ceil(sw) as u32,
            libm::ceil(sh) as u32,
        )
    }

    pub fn face_rect(&self) -> Rect {
        let (fx, fy, fw, fh) = self.face_px;
        Rect::new(
            libm::round(fx) as u32,
            libm::round(fy) as u32,
            libm::round(fw) as u32,
            libm::round(fh) as u32,
        )
    }

    /// True when (x, y) is inside the head ellipse.
    pub fn in_head(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.center.0) / self.semi_axes.0;
        let dy = (y - self.center.1) / self.semi_axes.1;
        dx * dx + dy * dy <= 1.0
    }
}

/// Pull-based synthetic frame stream.
#[derive(Debug, Clone)]
pub struct SyntheticStream {
    spec: SyntheticSceneSpec,
    fps: f64,
    duration_ms: u64,
    next: u64,
}

impl SyntheticStream {
    pub fn spec(&self) -> &SyntheticSceneSpec {
        &self.spec
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    /// Number of frames the stream yields in total.
    pub fn frame_count(&self) -> u64 {
        let mut n = libm::floor(self.duration_ms as f64 * self.fps / 1000.0) as u64;
        while nominal_timestamp_ms(n, self.fps) < self.duration_ms {
            n += 1;
        }
        while n > 0 && nominal_timestamp_ms(n - 1, self.fps) >= self.duration_ms {
            n -= 1;
        }
        n
    }
}

impl Iterator for SyntheticStream {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        let t = nominal_timestamp_ms(self.next, self.fps);
        if t >= self.duration_ms {
            return None;
        }
        let frame = render_frame(&self.spec, self.next, t);
        self.next += 1;
        Some(frame)
    }
}

/// Frames at the nominal instants `round(k · 1000 / fps)` below `duration_ms`.
pub fn render_synthetic(
    spec: &SyntheticSceneSpec,
    fps: f64,
    duration_ms: u64,
) -> Result<SyntheticStream, SynthError> {
    spec.validate()?;
    if duration_ms == 0 {
        return Err(SynthError::InvalidSpec("duration must be positive"));
    }
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(SynthError::InvalidSpec("fps must be positive"));
    }
    Ok(SyntheticStream {
        spec: spec.clone(),
        fps,
        duration_ms,
        next: 0,
    })
}

struct Canvas {
    edge_px: f64,
    width: u32,
    height: u32,
    rgb: Vec<f64>,
}

impl Canvas {
    fn new(width: u32, height: u32, fill: [f64; 3], edge_px: f64) -> Self {
        let n = width as usize * height as usize;
        let mut rgb = Vec::with_capacity(n * 3);
        for _ in 0..n {
            rgb.extend_from_slice(&fill);
        }
        Self {
            edge_px,
            width,
            height,
            rgb,
        }
    }

    /// Composites `colour_at` wherever `coverage` is positive inside `bbox`
    /// (x0, y0, x1, y1 in pixels).
    fn paint<C, F>(&mut self, bbox: (f64, f64, f64, f64), mut coverage: C, mut colour_at: F)
    where
        C: FnMut(f64, f64) -> f64,
        F: FnMut(f64, f64) -> [f64; 3],
    {
        let margin = 6.0 * self.edge_px;
        let x0 = libm::floor(bbox.0 - margin).max(0.0) as u32;
        let y0 = libm::floor(bbox.1 - margin).max(0.0) as u32;
        let x1 = (libm::ceil(bbox.2 + margin).max(0.0) as u32).min(self.width);
        let y1 = (libm::ceil(bbox.3 + margin).max(0.0) as u32).min(self.height);
        for y in y0..y1 {
            let py = f64::from(y) + 0.5;
            for x in x0..x1 {
                let px = f64::from(x) + 0.5;
                let a = coverage(px, py);
                if a <= 1e-6 {
                    continue;
                }
                let c = colour_at(px, py);
                let i = (y as usize * self.width as usize + x as usize) * 3;
                for k in 0..3 {
                    self.rgb[i + k] += (c[k] - self.rgb[i + k]) * a;
                }
            }
        }
    }
}

fn soft_edge(signed_distance: f64, edge_px: f64) -> f64 {
    let z = signed_distance / edge_px;
    if z > 30.0 {
        0.0
    } else if z < -30.0 {
        1.0
    } else {
        1.0 / (1.0 + libm::exp(z))
    }
}

/// Approximate signed distance to an axis-aligned ellipse boundary.
fn ellipse_sd(px: f64, py: f64, cx: f64, cy: f64, a: f64, b: f64) -> f64 {
    let dx = px - cx;
    let dy = py - cy;
    let q = (dx / a) * (dx / a) + (dy / b) * (dy / b);
    let gx = dx / (a * a);
    let gy = dy / (b * b);
    let g = 2.0 * libm::sqrt(gx * gx + gy * gy);
    if g < 1e-12 {
        return -a.min(b);
    }
    (q - 1.0) / g
}

fn rect_sd(px: f64, py: f64, cx: f64, cy: f64, hw: f64, hh: f64) -> f64 {
    ((px - cx).abs() - hw).max((py - cy).abs() - hh)
}

fn draw_face(canvas: &mut Canvas, layout: &FaceLayout, gaze_x: f64, pulse: f64) {
    let style = layout.style;
    let soft = move |d: f64| soft_edge(d, style.edge_px);
    let (cx, cy) = layout.center;
    let (ha, hb) = layout.semi_axes;
    let forehead_bottom = layout.forehead_bottom;
    canvas.paint(
        (cx - ha, cy - hb, cx + ha, cy + hb),
        |x, y| soft(ellipse_sd(x, y, cx, cy, ha, hb)),
        |_, y| {
            let mut c = SKIN;
            if pulse != 0.0 {
                c[1] += pulse * soft(y - forehead_bottom);
            }
            c
        },
    );

    let (_, _, fw, fh) = layout.face_px;
    let (sw, sh) = layout.socket;
    let (bhw, bhh) = layout.brow_half;
    for eye in 0..2 {
        let (ex, ey) = layout.eye_centers[eye];
        let by = ey - layout.brow_rise;
        canvas.paint(
            (ex - bhw, by - bhh, ex + bhw, by + bhh),
            |x, y| soft(rect_sd(x, y, ex, by, bhw, bhh)),
            |_, _| BROW,
        );
        let (a, b) = (sw / 2.0, sh / 2.0);
        let sclera = move |x: f64, y: f64| soft(ellipse_sd(x, y, ex, ey, a, b));
        canvas.paint((ex - a, ey - b, ex + a, ey + b), sclera, |_, _| SCLERA);
        let (pcx, pcy) = layout.pupil_center(eye, gaze_x);
        let iris_r = style.iris_r * sh;
        canvas.paint(
            (pcx - iris_r, pcy - iris_r, pcx + iris_r, pcy + iris_r),
            |x, y| soft(ellipse_sd(x, y, pcx, pcy, iris_r, iris_r)) * sclera(x, y),
            |_, _| [style.iris_level; 3],
        );
        let pupil_r = style.pupil_r * sh;
        canvas.paint(
            (pcx - pupil_r, pcy - pupil_r, pcx + pupil_r, pcy + pupil_r),
            |x, y| soft(ellipse_sd(x, y, pcx, pcy, pupil_r, pupil_r)) * sclera(x, y),
            |_, _| PUPIL,
        );
    }

    let (nhw, nhh, ny) = (0.08 * fw, 0.03 * fh, cy + 0.12 * fh);
    canvas.paint(
        (cx - nhw, ny - nhh, cx + nhw, ny + nhh),
        |x, y| soft(rect_sd(x, y, cx, ny, nhw, nhh)),
        |_, _| NOSE,
    );
    let (mhw, mhh, my) = (0.2 * fw, 0.025 * fh, cy + 0.28 * fh);
    canvas.paint(
        (cx - mhw, my - mhh, cx + mhw, my + mhh),
        |x, y| soft(rect_sd(x, y, cx, my, mhw, mhh)),
        |_, _| MOUTH,
    );
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; u1 in (0, 1]
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Renders the frame at stream position `index`, instant `t_ms`.
///
/// The result depends only on the spec, `index` and `t_ms`.
pub fn render_frame(spec: &SyntheticSceneSpec, index: u64, t_ms: u64) -> Frame {
    render_frame_styled(spec, FaceStyle::default(), index, t_ms)
}

/// [`render_frame`] with non-default face proportions.
pub fn render_frame_styled(spec: &SyntheticSceneSpec, style: FaceStyle, index: u64, t_ms: u64) -> Frame {
    let gaze = spec.gaze_at(t_ms).clamp(0.0, 1.0);
    let pulse = spec
        .pulse_hz
        .map(|f| spec.pulse_amplitude * libm::sin(2.0 * PI * f * t_ms as f64 / 1000.0))
        .unwrap_or(0.0);
    let mut canvas = Canvas::new(spec.width, spec.height, BACKGROUND, style.edge_px);
    let layout = FaceLayout::styled(spec.face_box_norm, spec.width, spec.height, style);
    draw_face(&mut canvas, &layout, gaze, pulse);
    for extra in &spec.extra_faces {
        draw_face(
            &mut canvas,
            &FaceLayout::styled(*extra, spec.width, spec.height, style),
            gaze,
            pulse,
        );
    }
    let sigma = spec.noise_sigma * 255.0;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let pixels = canvas
        .rgb
        .iter()
        .map(|&v| {
            let v = if sigma > 0.0 { v + sigma * gaussian(&mut rng) } else { v };
            libm::round(v).clamp(0.0, 255.0) as u8
        })
        .collect();
    Frame::new(index, t_ms, spec.width, spec.height, pixels).expect("canvas matches dimensions")
}
