//! Flat frame archive used by batch mode: the manifest JSON and PNG frames
//! behind an offset table.
//!
//! ```text
//! "VPCARC01"  u32 entry count  u32 CRC-32 of everything after these 16 bytes
//! per entry:  u64 offset  u64 length  u16 name length  name bytes
//! data
//! ```
//! Integers are big-endian; offsets count from the start of the data.
//! Entry 0 is `manifest.json`, whose frame paths name the other entries.
//! An optional `session.json` carries session metadata.

use std::collections::HashMap;

use thiserror::Error;
use vpc_core::frame::{Frame, FrameEntry, ManifestError, StreamManifest};

use crate::frames::{decode_png, encode_png};

pub const MAGIC: &[u8; 8] = b"VPCARC01";
pub const MANIFEST_ENTRY: &str = "manifest.json";
pub const SESSION_ENTRY: &str = "session.json";
const HEADER_LEN: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum ArchiveError {
    #[error("not a frame archive")]
    BadMagic,
    #[error("archive truncated")]
    Truncated,
    #[error("archive checksum mismatch")]
    Checksum,
    #[error("archive has no manifest")]
    NoManifest,
    #[error("archive holds no frames")]
    Empty,
    #[error("bad manifest: {0}")]
    BadManifest(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("entry {0:?} missing")]
    MissingEntry(String),
    #[error("frame {entry}: {message}")]
    Decode { entry: usize, message: String },
}

/// Accumulates frames and produces the archive bytes.
#[derive(Debug, Clone)]
pub struct ArchiveWriter {
    fps: f64,
    screen: (u32, u32),
    entries: Vec<FrameEntry>,
    blobs: Vec<Vec<u8>>,
    session: Option<serde_json::Value>,
}

impl ArchiveWriter {
    pub fn new(fps: f64, screen: (u32, u32)) -> Self {
        Self { fps, screen, entries: Vec::new(), blobs: Vec::new(), session: None }
    }

    pub fn set_session(&mut self, meta: serde_json::Value) {
        self.session = Some(meta);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, frame: &Frame) {
        let name = format!("frame_{:06}.png", self.entries.len());
        self.entries.push(FrameEntry { path: name, t_ms: frame.timestamp_ms });
        self.blobs.push(encode_png(frame));
    }

    pub fn finish(self) -> Vec<u8> {
        let manifest = StreamManifest {
            fps: self.fps,
            screen_width_px: self.screen.0,
            screen_height_px: self.screen.1,
            frames: self.entries,
        };
        let manifest_json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let session_json = self.session.map(|v| serde_json::to_vec(&v).expect("JSON values serialize"));
        let mut named: Vec<(&str, &[u8])> = vec![(MANIFEST_ENTRY, &manifest_json)];
        if let Some(s) = &session_json {
            named.push((SESSION_ENTRY, s));
        }
        named.extend(manifest.frames.iter().map(|e| e.path.as_str()).zip(self.blobs.iter().map(Vec::as_slice)));
        pack(&named)
    }
}

/// Packs named blobs into the container format.
pub fn pack(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    let mut offset = 0u64;
    for (name, data) in entries {
        body.extend_from_slice(&offset.to_be_bytes());
        body.extend_from_slice(&(data.len() as u64).to_be_bytes());
        body.extend_from_slice(&(name.len() as u16).to_be_bytes());
        body.extend_from_slice(name.as_bytes());
        offset += data.len() as u64;
    }
    for (_, data) in entries {
        body.extend_from_slice(data);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Parsed view over archive bytes.
#[derive(Debug)]
pub struct Archive<'a> {
    manifest: StreamManifest,
    entries: Vec<(&'a str, &'a [u8])>,
    index: HashMap<&'a str, usize>,
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8], ArchiveError> {
    if buf.len() < n {
        return Err(ArchiveError::Truncated);
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

impl<'a> Archive<'a> {
    pub fn parse(bytes: &'a [u8]) -> Result<Self, ArchiveError> {
        if bytes.len() < HEADER_LEN {
            return Err(if bytes.starts_with(&MAGIC[..bytes.len().min(8)]) { ArchiveError::Truncated } else { ArchiveError::BadMagic });
        }
        if &bytes[..8] != MAGIC {
            return Err(ArchiveError::BadMagic);
        }
        let count = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let crc = u32::from_be_bytes(bytes[12..16].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if crc32fast::hash(body) != crc {
            return Err(ArchiveError::Checksum);
        }
        let mut cur = body;
        let mut table = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let off = u64::from_be_bytes(take(&mut cur, 8)?.try_into().unwrap());
            let len = u64::from_be_bytes(take(&mut cur, 8)?.try_into().unwrap());
            let name_len = u16::from_be_bytes(take(&mut cur, 2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(&mut cur, name_len)?).map_err(|_| ArchiveError::Truncated)?;
            table.push((name, off, len));
        }
        let data = cur;
        let mut entries = Vec::with_capacity(table.len());
        let mut index = HashMap::new();
        for (i, (name, off, len)) in table.into_iter().enumerate() {
            let end = off.checked_add(len).ok_or(ArchiveError::Truncated)?;
            if end > data.len() as u64 {
                return Err(ArchiveError::Truncated);
            }
            entries.push((name, &data[off as usize..end as usize]));
            index.insert(name, i);
        }
        match entries.first() {
            Some((name, _)) if *name == MANIFEST_ENTRY => {}
            _ => return Err(ArchiveError::NoManifest),
        }
        let manifest: StreamManifest =
            serde_json::from_slice(entries[0].1).map_err(|e| ArchiveError::BadManifest(e.to_string()))?;
        if manifest.frames.is_empty() {
            return Err(ArchiveError::Empty);
        }
        manifest.validate()?;
        for e in &manifest.frames {
            if !index.contains_key(e.path.as_str()) {
                return Err(ArchiveError::MissingEntry(e.path.clone()));
            }
        }
        Ok(Self { manifest, entries, index })
    }

    pub fn manifest(&self) -> &StreamManifest {
        &self.manifest
    }

    pub fn session(&self) -> Option<serde_json::Value> {
        serde_json::from_slice(self.entry(SESSION_ENTRY)?).ok()
    }

    pub fn entry(&self, name: &str) -> Option<&'a [u8]> {
        self.index.get(name).map(|&i| self.entries[i].1)
    }

    pub fn frame(&self, i: usize) -> Result<Frame, ArchiveError> {
        let e = &self.manifest.frames[i];
        let bytes = self.entry(&e.path).expect("checked at parse");
        let (w, h, rgb) = decode_png(bytes).map_err(|message| ArchiveError::Decode { entry: i, message })?;
        Frame::new(i as u64, e.t_ms, w, h, rgb).map_err(|err| ArchiveError::Decode { entry: i, message: err.to_string() })
    }

    pub fn frames(&self) -> impl Iterator<Item = Result<Frame, ArchiveError>> + '_ {
        (0..self.manifest.frames.len()).map(|i| self.frame(i))
    }
}
