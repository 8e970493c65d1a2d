//! PNG frame files, manifests and the frame sources the nodes read from.

use std::fs::{self, File};
use std::io::{self, BufWriter, Read};
use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;
use vpc_core::frame::{Frame, FrameEntry, ManifestError, StreamManifest};
use vpc_core::synth::{render_synthetic, SynthError, SyntheticSceneSpec, SyntheticStream};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("frame {entry}: {path} does not exist")]
    MissingFile { entry: usize, path: PathBuf },
    #[error("frame {entry}: cannot decode {path}: {message}")]
    DecodeError { entry: usize, path: PathBuf, message: String },
    #[error("frame {entry} is {got:?}, earlier frames are {expected:?}")]
    DimensionMismatch { entry: usize, expected: (u32, u32), got: (u32, u32) },
    #[error("{path}: {message}")]
    BadDocument { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Decodes an 8-bit PNG (RGB, RGBA, gray or gray+alpha) into RGB pixels.
pub fn decode_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>), String> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(format!("unsupported bit depth {:?}", info.bit_depth));
    }
    let px = (info.width * info.height) as usize;
    let data = &buf[..info.buffer_size()];
    let rgb = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(format!("unsupported color type {other:?}")),
    };
    debug_assert_eq!(rgb.len(), px * 3);
    Ok((info.width, info.height, rgb))
}

pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width(), frame.height());
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("writing to a Vec");
        w.write_image_data(frame.pixels()).expect("pixel count matches the header");
    }
    out
}

pub fn write_png(path: &Path, frame: &Frame) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    io::Write::write_all(&mut w, &encode_png(frame))?;
    io::Write::flush(&mut w)
}

pub fn load_manifest(path: &Path) -> Result<StreamManifest, SourceError> {
    let text = fs::read_to_string(path)?;
    let manifest: StreamManifest = serde_json::from_str(&text)
        .map_err(|e| SourceError::BadDocument { path: path.to_path_buf(), message: e.to_string() })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Frames of a manifest, decoded lazily in order. Relative paths resolve
/// against `base`.
#[derive(Debug)]
pub struct ManifestStream {
    manifest: StreamManifest,
    base: PathBuf,
    next: usize,
    dims: Option<(u32, u32)>,
}

pub fn open_stream(manifest: StreamManifest, base: impl Into<PathBuf>) -> Result<ManifestStream, SourceError> {
    manifest.validate()?;
    Ok(ManifestStream { manifest, base: base.into(), next: 0, dims: None })
}

impl ManifestStream {
    pub fn manifest(&self) -> &StreamManifest {
        &self.manifest
    }

    fn load(&mut self, entry: usize) -> Result<Frame, SourceError> {
        let e = &self.manifest.frames[entry];
        let path = self.base.join(&e.path);
        let mut bytes = Vec::new();
        match File::open(&path) {
            Ok(mut f) => f.read_to_end(&mut bytes)?,
            Err(err) if err.kind() == io::ErrorKind::NotFound => return Err(SourceError::MissingFile { entry, path }),
            Err(err) => return Err(err.into()),
        };
        let (w, h, rgb) = decode_png(&bytes).map_err(|message| SourceError::DecodeError { entry, path, message })?;
        let expected = *self.dims.get_or_insert((w, h));
        if expected != (w, h) {
            return Err(SourceError::DimensionMismatch { entry, expected, got: (w, h) });
        }
        Ok(Frame::new(entry as u64, e.t_ms, w, h, rgb).expect("decoder output matches its dimensions"))
    }
}

impl Iterator for ManifestStream {
    type Item = Result<Frame, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.manifest.frames.len() {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let r = self.load(i);
        if r.is_err() {
            // A broken entry ends the stream.
            self.next = self.manifest.frames.len();
        }
        Some(r)
    }
}

/// Writes frames as numbered PNGs under `dir` plus `manifest.json`.
pub fn record_frames<I>(frames: I, dir: &Path, fps: f64, screen: (u32, u32)) -> Result<StreamManifest, SourceError>
where
    I: IntoIterator<Item = Frame>,
{
    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for f in frames {
        let name = format!("frame_{:06}.png", f.index);
        write_png(&dir.join(&name), &f)?;
        entries.push(FrameEntry { path: name, t_ms: f.timestamp_ms });
    }
    let manifest = StreamManifest { fps, screen_width_px: screen.0, screen_height_px: screen.1, frames: entries };
    manifest.validate()?;
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

/// A synthetic scene file: the scene spec's fields plus an optional
/// `duration_ms` (default: the last gaze knot, at least one second) and
/// `fps` (default 30).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSource {
    pub spec: SyntheticSceneSpec,
    pub fps: f64,
    pub duration_ms: u64,
}

impl SyntheticSource {
    pub fn from_value(mut v: Value) -> Result<Self, String> {
        let obj = v.as_object_mut().ok_or("synthetic scene must be a JSON object")?;
        let duration = obj.remove("duration_ms").map(|d| d.as_u64().ok_or("duration_ms must be an integer"));
        let fps = obj.remove("fps").map(|d| d.as_f64().ok_or("fps must be a number"));
        let spec: SyntheticSceneSpec = serde_json::from_value(v).map_err(|e| e.to_string())?;
        let last = spec.gaze_track.last().map_or(0, |k| k.0);
        Ok(Self { duration_ms: duration.transpose()?.unwrap_or(last.max(1000)), fps: fps.transpose()?.unwrap_or(30.0), spec })
    }

    pub fn stream(&self) -> Result<SyntheticStream, SourceError> {
        Ok(render_synthetic(&self.spec, self.fps, self.duration_ms)?)
    }
}

/// Either kind of frame input named on the command line.
#[derive(Debug)]
pub enum FrameInput {
    Manifest { manifest: StreamManifest, base: PathBuf },
    Synthetic(SyntheticSource),
}

impl FrameInput {
    /// Reads a manifest or a synthetic scene, told apart by the `frames` key.
    pub fn load(path: &Path) -> Result<Self, SourceError> {
        let bad = |message: String| SourceError::BadDocument { path: path.to_path_buf(), message };
        let text = fs::read_to_string(path)?;
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if v.get("frames").is_some() {
            let manifest: StreamManifest = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
            manifest.validate()?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok(FrameInput::Manifest { manifest, base })
        } else {
            Ok(FrameInput::Synthetic(SyntheticSource::from_value(v).map_err(bad)?))
        }
    }

    pub fn fps(&self) -> f64 {
        match self {
            FrameInput::Manifest { manifest, .. } => manifest.fps,
            FrameInput::Synthetic(s) => s.fps,
        }
    }

    pub fn screen(&self) -> (u32, u32) {
        match self {
            FrameInput::Manifest { manifest, .. } => (manifest.screen_width_px, manifest.screen_height_px),
            FrameInput::Synthetic(_) => (1920, 1080),
        }
    }

    pub fn frames(&self) -> Result<Box<dyn Iterator<Item = Result<Frame, SourceError>> + Send>, SourceError> {
        Ok(match self {
            FrameInput::Manifest { manifest, base } => Box::new(open_stream(manifest.clone(), base.clone())?),
            FrameInput::Synthetic(s) => Box::new(s.stream()?.map(Ok)),
        })
    }
}
