//! Timestamped RGB frames and the recorded-stream manifest.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Rect;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
}

/// Colour channel of an sRGB frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub fn offset(self) -> usize {
        match self {
            Channel::R => 0,
            Channel::G => 1,
            Channel::B => 2,
        }
    }
}

/// One immutable RGB image of a stream. Pixels are row-major `[r, g, b]` triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u64,
    pub timestamp_ms: u64,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(
        index: u64,
        timestamp_ms: u64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            index,
            timestamp_ms,
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with a single colour.
    pub fn filled(index: u64, timestamp_ms: u64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self::new(index, timestamp_ms, width, height, pixels).expect("filled frame is consistent")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn rgb(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn channel(&self, x: u32, y: u32, channel: Channel) -> u8 {
        self.pixels[(y as usize * self.width as usize + x as usize) * 3 + channel.offset()]
    }

    pub fn luminance(&self, x: u32, y: u32) -> u8 {
        let [r, g, b] = self.rgb(x, y);
        luminance(r, g, b)
    }

    /// Luminance plane, row-major.
    pub fn luminance_plane(&self) -> Vec<u8> {
        self.pixels
            .chunks_exact(3)
            .map(|p| luminance(p[0], p[1], p[2]))
            .collect()
    }

    /// Same image relabelled with a new position in a stream.
    pub fn with_position(mut self, index: u64, timestamp_ms: u64) -> Self {
        self.index = index;
        self.timestamp_ms = timestamp_ms;
        self
    }
}

/// `round(0.299 R + 0.587 G + 0.114 B)`, computed in exact integer arithmetic
/// with halves rounded up.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}

/// Nominal timestamp of frame `index` in a stream sampled at `fps`.
pub fn nominal_timestamp_ms(index: u64, fps: f64) -> u64 {
    libm::round(index as f64 * 1000.0 / fps) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub path: String,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("manifest lists no frames")]
    Empty,
    #[error("fps must be positive")]
    BadFps,
    #[error("screen dimensions must be positive")]
    BadScreen,
    #[error("timestamps not strictly increasing at entry {0}")]
    TimestampOrder(usize),
    #[error("timestamps span {span_ms} ms but {frames} frames at the declared fps need about {expected_ms} ms")]
    RateMismatch {
        frames: usize,
        span_ms: u64,
        expected_ms: u64,
    },
}

fn default_fps() -> f64 {
    30.0
}

/// Recorded frame sequence: one JSON document listing PNG files with their
/// timestamps and the size of the display the observer watches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamManifest {
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub screen_width_px: u32,
    pub screen_height_px: u32,
    pub frames: Vec<FrameEntry>,
}

impl StreamManifest {
    /// Checks ordering and that the timestamps agree with `fps` within 5%.
    pub fn validate(&self) -> Result<(), ManifestError> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(ManifestError::BadFps);
        }
        if self.screen_width_px == 0 || self.screen_height_px == 0 {
            return Err(ManifestError::BadScreen);
        }
        let first = self.frames.first().ok_or(ManifestError::Empty)?;
        for (i, pair) in self.frames.windows(2).enumerate() {
            if pair[1].t_ms <= pair[0].t_ms {
                return Err(ManifestError::TimestampOrder(i + 1));
            }
        }
        let n = self.frames.len();
        if n > 1 {
            let span = self.frames[n - 1].t_ms - first.t_ms;
            let expected = 1000.0 * (n - 1) as f64 / self.fps;
            if (span as f64 - expected).abs() > 0.05 * expected {
                return Err(ManifestError::RateMismatch {
                    frames: n,
                    span_ms: span,
                    expected_ms: libm::round(expected) as u64,
                });
            }
        }
        Ok(())
    }
}
