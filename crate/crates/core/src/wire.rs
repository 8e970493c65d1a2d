//! Node-to-node protocol: length-prefixed canonical JSON messages, the HELLO
//! handshake, per-direction sequence checks and chunked batch transfer.
//!
//! Everything here is transport-agnostic; sockets live in the std crate.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gaze::{GazeSample, InvalidReason};
use crate::session::{ItemKind, ObserverStatus, ScheduleItem, SessionPlan};

pub const PROTOCOL_VERSION: &str = "1";
pub const DEFAULT_PORT: u16 = 47113;
pub const MAX_FRAME_LEN: usize = 16 << 20;
pub const MIN_CHUNK: usize = 64 << 10;
pub const MAX_CHUNK: usize = 8 << 20;
/// Retransmit requests allowed per chunk before the transfer fails.
pub const MAX_RETRANSMITS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("incomplete frame: have {have} bytes, need {need}")]
    NeedMoreBytes { have: usize, need: usize },
    #[error("frame length {0} exceeds the 16 MiB limit")]
    Oversize(usize),
    #[error("malformed message: {0}")]
    MalformedJson(String),
    #[error("unknown message type {0:?}")]
    UnknownType(String),
    #[error("sequence went from {previous} to {got}")]
    SeqRegression { previous: u64, got: u64 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("peer speaks protocol version {0:?}")]
    VersionMismatch(String),
    #[error("expected chunk {expected}, got {got}")]
    ChunkGap { expected: u64, got: u64 },
    #[error("chunk {chunk} failed its checksum")]
    ChecksumMismatch { chunk: u64 },
    #[error("archive checksum mismatch")]
    ArchiveChecksum,
    #[error("chunk {chunk} still corrupt after {MAX_RETRANSMITS} retransmits")]
    RetransmitExhausted { chunk: u64 },
    #[error("chunk size {0} outside 64 KiB..=8 MiB")]
    ChunkSize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MsgType {
    Hello,
    PlanPush,
    CalibStart,
    CalibDone,
    StimShow,
    GazeTick,
    Status,
    BatchBegin,
    BatchChunk,
    BatchEnd,
    Result,
    Abort,
    Ack,
    Error,
}

impl MsgType {
    pub const ALL: [MsgType; 14] = [
        MsgType::Hello,
        MsgType::PlanPush,
        MsgType::CalibStart,
        MsgType::CalibDone,
        MsgType::StimShow,
        MsgType::GazeTick,
        MsgType::Status,
        MsgType::BatchBegin,
        MsgType::BatchChunk,
        MsgType::BatchEnd,
        MsgType::Result,
        MsgType::Abort,
        MsgType::Ack,
        MsgType::Error,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MsgType::Hello => "HELLO",
            MsgType::PlanPush => "PLAN_PUSH",
            MsgType::CalibStart => "CALIB_START",
            MsgType::CalibDone => "CALIB_DONE",
            MsgType::StimShow => "STIM_SHOW",
            MsgType::GazeTick => "GAZE_TICK",
            MsgType::Status => "STATUS",
            MsgType::BatchBegin => "BATCH_BEGIN",
            MsgType::BatchChunk => "BATCH_CHUNK",
            MsgType::BatchEnd => "BATCH_END",
            MsgType::Result => "RESULT",
            MsgType::Abort => "ABORT",
            MsgType::Ack => "ACK",
            MsgType::Error => "ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    /// Whether a stalled link may drop this message in favour of a newer one.
    pub fn droppable(self) -> bool {
        self == MsgType::GazeTick
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MsgType,
    pub seq: u64,
    pub t_ms: u64,
    pub payload: Value,
}

impl WireMessage {
    pub fn new<P: Serialize>(kind: MsgType, seq: u64, t_ms: u64, payload: &P) -> Self {
        let payload = serde_json::to_value(payload).expect("payload types serialize to JSON");
        Self { kind, seq, t_ms, payload }
    }

    pub fn payload_as<P: DeserializeOwned>(&self) -> Result<P, WireError> {
        P::deserialize(&self.payload).map_err(|e| WireError::MalformedJson(e.to_string()))
    }
}

/// Serializes with object keys sorted and no whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, serde_json::Error> {
    // Value maps are ordered, so a round trip through Value sorts every key.
    serde_json::to_vec(&serde_json::to_value(value)?)
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let body = canonical_json(msg).map_err(|e| WireError::MalformedJson(e.to_string()))?;
    if body.len() > MAX_FRAME_LEN {
        return Err(WireError::Oversize(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Length of the next frame in `buf`, prefix included, without parsing it.
pub fn frame_len(buf: &[u8]) -> Result<usize, WireError> {
    if buf.len() < 4 {
        return Err(WireError::NeedMoreBytes { have: buf.len(), need: 4 });
    }
    let n = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if n > MAX_FRAME_LEN {
        return Err(WireError::Oversize(n));
    }
    if buf.len() < 4 + n {
        return Err(WireError::NeedMoreBytes { have: buf.len(), need: 4 + n });
    }
    Ok(4 + n)
}

/// Decodes one frame without sequence checks.
pub fn decode_frame(buf: &[u8]) -> Result<(WireMessage, &[u8]), WireError> {
    let end = frame_len(buf)?;
    let value: Value = serde_json::from_slice(&buf[4..end]).map_err(|e| WireError::MalformedJson(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| WireError::MalformedJson("missing \"type\"".to_string()))?;
    if MsgType::parse(kind).is_none() {
        return Err(WireError::UnknownType(kind.to_string()));
    }
    let msg = WireMessage::deserialize(value).map_err(|e| WireError::MalformedJson(e.to_string()))?;
    Ok((msg, &buf[end..]))
}

/// Inbound decoder for one connection direction.
#[derive(Debug, Clone, Default)]
pub struct Decoder {
    last_seq: Option<u64>,
}

impl Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> Option<u64> {
        self.last_seq
    }

    pub fn decode<'a>(&mut self, buf: &'a [u8]) -> Result<(WireMessage, &'a [u8]), WireError> {
        let (msg, rest) = decode_frame(buf)?;
        if let Some(previous) = self.last_seq {
            if msg.seq <= previous {
                return Err(WireError::SeqRegression { previous, got: msg.seq });
            }
        }
        self.last_seq = Some(msg.seq);
        Ok((msg, rest))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Measurement,
    Management,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloPayload {
    pub version: String,
    pub role: Role,
}

impl HelloPayload {
    pub fn new(role: Role) -> Self {
        Self { version: PROTOCOL_VERSION.to_string(), role }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckPayload {
    pub ack_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub code: String,
    pub message: String,
    /// Set when the error asks for a batch chunk to be sent again.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_index: Option<u64>,
}

impl ErrorPayload {
    pub fn new(code: &str, message: &str) -> Self {
        Self { code: code.to_string(), message: message.to_string(), chunk_index: None }
    }

    pub fn retransmit(chunk: u64) -> Self {
        Self { code: "retransmit".to_string(), message: "chunk checksum mismatch".to_string(), chunk_index: Some(chunk) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeTickPayload {
    pub frame_index: u64,
    pub gaze_x: Option<f64>,
    pub valid: bool,
    pub invalid_reason: Option<InvalidReason>,
    pub bpm: Option<f64>,
    pub stimulus_pair_id: Option<String>,
}

impl GazeTickPayload {
    pub fn new(sample: &GazeSample, bpm: Option<f64>, stimulus_pair_id: Option<String>) -> Self {
        Self {
            frame_index: sample.frame_index,
            gaze_x: sample.gaze_x,
            valid: sample.valid,
            invalid_reason: sample.invalid_reason,
            bpm,
            stimulus_pair_id,
        }
    }
}

/// What the measurement screen just switched to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimShowPayload {
    pub kind: ItemKind,
    pub index: usize,
    /// Measurement-clock time of the switch.
    pub shown_at_ms: u64,
    pub duration_ms: u64,
    pub pair_id: Option<String>,
    pub left_image: Option<String>,
    pub right_image: Option<String>,
    pub image: Option<String>,
}

impl StimShowPayload {
    /// `None` for blanks, which are not announced.
    pub fn for_item(plan: &SessionPlan, item: &ScheduleItem, shown_at_ms: u64) -> Option<Self> {
        let base = Self {
            kind: item.kind,
            index: item.index,
            shown_at_ms,
            duration_ms: item.end_ms - item.start_ms,
            pair_id: None,
            left_image: None,
            right_image: None,
            image: None,
        };
        match item.kind {
            ItemKind::Blank => None,
            ItemKind::Familiarization => {
                let e = plan.familiarization.get(item.index)?;
                Some(Self { image: Some(e.image.id.clone()), ..base })
            }
            ItemKind::Pair => {
                let p = plan.test_pairs.get(item.index)?;
                Some(Self {
                    pair_id: Some(p.id.clone()),
                    left_image: Some(p.left_image.id.clone()),
                    right_image: Some(p.right_image.id.clone()),
                    ..base
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusPayload {
    pub status: ObserverStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchBeginPayload {
    pub total_bytes: u64,
    pub chunk_size: u64,
    pub chunk_count: u64,
    /// CRC-32 of the whole archive.
    pub checksum: u32,
    pub session: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchChunkPayload {
    pub chunk_index: u64,
    pub byte_count: u64,
    /// Base64 of the chunk bytes.
    pub data: String,
    pub checksum: u32,
}

impl BatchChunkPayload {
    pub fn new(chunk_index: u64, bytes: &[u8]) -> Self {
        Self { chunk_index, byte_count: bytes.len() as u64, data: B64.encode(bytes), checksum: crc32fast::hash(bytes) }
    }

    /// Decoded bytes, if they match the stated length and checksum.
    pub fn verified_bytes(&self) -> Option<Vec<u8>> {
        let bytes = B64.decode(&self.data).ok()?;
        (bytes.len() as u64 == self.byte_count && crc32fast::hash(&bytes) == self.checksum).then_some(bytes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchEndPayload {
    pub chunk_count: u64,
}

/// Splits an archive into the BATCH_BEGIN payload and its chunks.
pub fn split_archive(
    archive: &[u8],
    chunk_size: usize,
    session: Value,
) -> Result<(BatchBeginPayload, Vec<BatchChunkPayload>), WireError> {
    if !(MIN_CHUNK..=MAX_CHUNK).contains(&chunk_size) {
        return Err(WireError::ChunkSize(chunk_size));
    }
    let chunks: Vec<BatchChunkPayload> = archive
        .chunks(chunk_size)
        .enumerate()
        .map(|(i, c)| BatchChunkPayload::new(i as u64, c))
        .collect();
    let begin = BatchBeginPayload {
        total_bytes: archive.len() as u64,
        chunk_size: chunk_size as u64,
        chunk_count: chunks.len() as u64,
        checksum: crc32fast::hash(archive),
        session,
    };
    Ok((begin, chunks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChunkVerdict {
    Accepted,
    /// Already received; acknowledged again, nothing changes.
    Duplicate,
}

/// Receiving end of a batch transfer.
#[derive(Debug, Clone)]
pub struct BatchReceiver {
    begin: BatchBeginPayload,
    data: Vec<u8>,
    next: u64,
    failures: BTreeMap<u64, u32>,
}

impl BatchReceiver {
    pub fn new(begin: BatchBeginPayload) -> Self {
        Self { data: Vec::with_capacity(begin.total_bytes as usize), begin, next: 0, failures: BTreeMap::new() }
    }

    pub fn begin(&self) -> &BatchBeginPayload {
        &self.begin
    }

    pub fn received_chunks(&self) -> u64 {
        self.next
    }

    /// Total retransmit requests issued so far.
    pub fn retransmits(&self) -> u32 {
        self.failures.values().sum()
    }

    /// `ChecksumMismatch` asks the sender for the chunk again; after
    /// [`MAX_RETRANSMITS`] requests for one chunk the transfer fails.
    pub fn accept(&mut self, chunk: &BatchChunkPayload) -> Result<ChunkVerdict, WireError> {
        if chunk.chunk_index < self.next {
            return Ok(ChunkVerdict::Duplicate);
        }
        if chunk.chunk_index > self.next {
            return Err(WireError::ChunkGap { expected: self.next, got: chunk.chunk_index });
        }
        match chunk.verified_bytes() {
            Some(bytes) => {
                self.data.extend_from_slice(&bytes);
                self.next += 1;
                Ok(ChunkVerdict::Accepted)
            }
            None => {
                let n = self.failures.entry(chunk.chunk_index).or_insert(0);
                if *n >= MAX_RETRANSMITS {
                    return Err(WireError::RetransmitExhausted { chunk: chunk.chunk_index });
                }
                *n += 1;
                Err(WireError::ChecksumMismatch { chunk: chunk.chunk_index })
            }
        }
    }

    /// Reassembled archive after BATCH_END.
    pub fn finish(self, end: &BatchEndPayload) -> Result<Vec<u8>, WireError> {
        if end.chunk_count != self.begin.chunk_count || self.next != self.begin.chunk_count {
            return Err(WireError::ChunkGap { expected: self.begin.chunk_count, got: self.next });
        }
        if self.data.len() as u64 != self.begin.total_bytes || crc32fast::hash(&self.data) != self.begin.checksum {
            return Err(WireError::ArchiveChecksum);
        }
        Ok(self.data)
    }
}

/// What the link layer makes of an inbound message.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    /// Peer's HELLO accepted; reply with this ACK.
    Hello(WireMessage),
    /// ACK for one of ours.
    Acked { seq: u64, kind: Option<MsgType> },
    /// Anything else, for the node to handle and ACK.
    Message(WireMessage),
}

/// Per-connection protocol state: outbound sequence numbers, inbound
/// sequence checks, the handshake and outstanding ACKs.
#[derive(Debug, Clone)]
pub struct Link {
    role: Role,
    next_seq: u64,
    decoder: Decoder,
    peer: Option<HelloPayload>,
    hello_seq: Option<u64>,
    offset_ms: Option<i64>,
    outstanding: BTreeMap<u64, MsgType>,
    failed: Option<String>,
}

impl Link {
    pub fn new(role: Role) -> Self {
        Self {
            role,
            next_seq: 1,
            decoder: Decoder::new(),
            peer: None,
            hello_seq: None,
            offset_ms: None,
            outstanding: BTreeMap::new(),
            failed: None,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn is_ready(&self) -> bool {
        self.peer.is_some() && self.failed.is_none()
    }

    pub fn failure(&self) -> Option<&str> {
        self.failed.as_deref()
    }

    /// Peer clock minus local clock as estimated at the handshake: local
    /// receipt time of the ACK to our HELLO minus the ACK's `t_ms`. Only
    /// the node whose HELLO gets acknowledged learns it.
    pub fn offset_ms(&self) -> Option<i64> {
        self.offset_ms
    }

    /// Messages sent and not yet acknowledged, oldest first.
    pub fn outstanding(&self) -> impl Iterator<Item = (u64, MsgType)> + '_ {
        self.outstanding.iter().map(|(&s, &k)| (s, k))
    }

    pub fn hello(&mut self, t_ms: u64) -> WireMessage {
        let msg = self.message(MsgType::Hello, t_ms, &HelloPayload::new(self.role));
        self.hello_seq = Some(msg.seq);
        msg
    }

    /// Builds the next outbound message.
    pub fn message<P: Serialize>(&mut self, kind: MsgType, t_ms: u64, payload: &P) -> WireMessage {
        let seq = self.next_seq;
        self.next_seq += 1;
        if kind != MsgType::Ack {
            self.outstanding.insert(seq, kind);
        }
        WireMessage::new(kind, seq, t_ms, payload)
    }

    /// Stops waiting for an ACK, e.g. for a tick that was never sent.
    pub fn forget(&mut self, seq: u64) {
        self.outstanding.remove(&seq);
    }

    pub fn hello_seq(&self) -> Option<u64> {
        self.hello_seq
    }

    pub fn ack(&mut self, of: &WireMessage, t_ms: u64) -> WireMessage {
        self.message(MsgType::Ack, t_ms, &AckPayload { ack_seq: of.seq })
    }

    pub fn fail(&mut self, why: &str) {
        if self.failed.is_none() {
            self.failed = Some(why.to_string());
        }
    }

    /// Decodes the next frame in `buf`. Protocol violations mark the link
    /// failed; `NeedMoreBytes` does not.
    pub fn decode<'a>(&mut self, buf: &'a [u8]) -> Result<(WireMessage, &'a [u8]), WireError> {
        let r = self.decoder.decode(buf);
        if let Err(e) = &r {
            if !matches!(e, WireError::NeedMoreBytes { .. }) {
                self.fail(&e.to_string());
            }
        }
        r
    }

    /// Applies the handshake and ACK rules to a decoded message received at
    /// local time `now_ms`.
    pub fn receive(&mut self, msg: WireMessage, now_ms: u64) -> Result<Inbound, WireError> {
        if let Some(why) = &self.failed {
            return Err(WireError::Protocol(why.clone()));
        }
        let r = self.classify(msg, now_ms);
        if let Err(e) = &r {
            self.fail(&e.to_string());
        }
        r
    }

    fn classify(&mut self, msg: WireMessage, now_ms: u64) -> Result<Inbound, WireError> {
        match msg.kind {
            MsgType::Hello => {
                let hello: HelloPayload = msg.payload_as()?;
                if hello.version != PROTOCOL_VERSION {
                    return Err(WireError::VersionMismatch(hello.version));
                }
                if hello.role == self.role {
                    return Err(WireError::Protocol("both ends claim the same role".to_string()));
                }
                if self.peer.is_some() {
                    return Err(WireError::Protocol("second HELLO".to_string()));
                }
                self.peer = Some(hello);
                Ok(Inbound::Hello(self.ack(&msg, now_ms)))
            }
            _ if self.peer.is_none() => Err(WireError::Protocol(alloc::format!("{} before HELLO", msg.kind.as_str()))),
            MsgType::Ack => {
                let ack: AckPayload = msg.payload_as()?;
                let kind = self.outstanding.remove(&ack.ack_seq);
                if Some(ack.ack_seq) == self.hello_seq && self.offset_ms.is_none() {
                    self.offset_ms = Some(now_ms as i64 - msg.t_ms as i64);
                }
                Ok(Inbound::Acked { seq: ack.ack_seq, kind })
            }
            _ => Ok(Inbound::Message(msg)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn msg(kind: MsgType, seq: u64) -> WireMessage {
        WireMessage { kind, seq, t_ms: 0, payload: json!({}) }
    }

    #[test]
    fn ack_frame_layout() {
        let bytes = encode(&msg(MsgType::Ack, 1)).unwrap();
        let body = br#"{"payload":{},"seq":1,"t_ms":0,"type":"ACK"}"#;
        assert_eq!(&bytes[..4], &(body.len() as u32).to_be_bytes());
        assert_eq!(&bytes[4..], body);
    }

    #[test]
    fn canonical_sorts_nested_keys() {
        let v = json!({"b": {"z": 1, "a": [1.5, {"y": null, "c": true}]}, "a": "x"});
        assert_eq!(canonical_json(&v).unwrap(), br#"{"a":"x","b":{"a":[1.5,{"c":true,"y":null}],"z":1}}"#);
    }

    #[test]
    fn partial_and_trailing_bytes() {
        let bytes = encode(&msg(MsgType::Hello, 3)).unwrap();
        assert_eq!(decode_frame(&bytes[..2]), Err(WireError::NeedMoreBytes { have: 2, need: 4 }));
        assert!(matches!(decode_frame(&bytes[..bytes.len() - 1]), Err(WireError::NeedMoreBytes { .. })));
        let mut more = bytes.clone();
        more.extend_from_slice(&[7, 8, 9]);
        let (m, rest) = decode_frame(&more).unwrap();
        assert_eq!(m, msg(MsgType::Hello, 3));
        assert_eq!(rest, &[7, 8, 9]);
    }

    #[test]
    fn oversize_rejected_from_prefix_alone() {
        let prefix = ((MAX_FRAME_LEN + 1) as u32).to_be_bytes();
        assert_eq!(decode_frame(&prefix), Err(WireError::Oversize(MAX_FRAME_LEN + 1)));
    }

    #[test]
    fn bad_bodies() {
        let frame = |body: &[u8]| {
            let mut v = (body.len() as u32).to_be_bytes().to_vec();
            v.extend_from_slice(body);
            v
        };
        assert!(matches!(decode_frame(&frame(b"{nope")), Err(WireError::MalformedJson(_))));
        assert!(matches!(decode_frame(&frame(br#"{"seq":1}"#)), Err(WireError::MalformedJson(_))));
        assert_eq!(
            decode_frame(&frame(br#"{"type":"PING","seq":1,"t_ms":0,"payload":{}}"#)),
            Err(WireError::UnknownType("PING".into()))
        );
    }

    #[test]
    fn seq_regression() {
        let mut d = Decoder::new();
        d.decode(&encode(&msg(MsgType::Status, 5)).unwrap()).unwrap();
        let err = d.decode(&encode(&msg(MsgType::Status, 4)).unwrap()).unwrap_err();
        assert_eq!(err, WireError::SeqRegression { previous: 5, got: 4 });
    }

    #[test]
    fn type_names_round_trip() {
        for t in MsgType::ALL {
            assert_eq!(MsgType::parse(t.as_str()), Some(t));
            assert_eq!(serde_json::to_value(t).unwrap(), json!(t.as_str()));
        }
    }

    #[test]
    fn handshake_and_offset() {
        let mut meas = Link::new(Role::Measurement);
        let mut mgmt = Link::new(Role::Management);
        let h1 = meas.hello(1000);
        let h2 = mgmt.hello(50_000);
        let Inbound::Hello(ack_to_meas) = mgmt.receive(h1, 50_010).unwrap() else { panic!() };
        let Inbound::Hello(ack_to_mgmt) = meas.receive(h2, 1_012).unwrap() else { panic!() };
        assert!(meas.receive(ack_to_meas, 1_020).is_ok());
        assert_eq!(mgmt.receive(ack_to_mgmt, 50_030).unwrap(), Inbound::Acked { seq: 1, kind: Some(MsgType::Hello) });
        assert_eq!(mgmt.offset_ms(), Some(50_030 - 1_012));
        assert!(meas.is_ready() && mgmt.is_ready());
        assert_eq!(mgmt.outstanding().count(), 0);
    }

    #[test]
    fn tick_before_hello_fails_link() {
        let mut mgmt = Link::new(Role::Management);
        let err = mgmt.receive(msg(MsgType::GazeTick, 1), 0).unwrap_err();
        assert!(matches!(err, WireError::Protocol(_)));
        assert!(mgmt.failure().is_some());
        assert!(mgmt.receive(msg(MsgType::Hello, 2), 0).is_err());
    }

    #[test]
    fn version_and_role_checks() {
        let mut mgmt = Link::new(Role::Management);
        let bad = WireMessage::new(MsgType::Hello, 1, 0, &HelloPayload { version: "2".into(), role: Role::Measurement });
        assert_eq!(mgmt.receive(bad, 0), Err(WireError::VersionMismatch("2".into())));
        let mut mgmt = Link::new(Role::Management);
        let same = WireMessage::new(MsgType::Hello, 1, 0, &HelloPayload::new(Role::Management));
        assert!(mgmt.receive(same, 0).is_err());
    }

    #[test]
    fn one_mib_in_four_chunks() {
        let archive: Vec<u8> = (0..1u32 << 20).map(|i| (i.wrapping_mul(2654435761) >> 13) as u8).collect();
        let (begin, chunks) = split_archive(&archive, 256 << 10, json!({"session_id": "s"})).unwrap();
        assert_eq!(chunks.len(), 4);
        let mut rx = BatchReceiver::new(begin);
        for c in &chunks {
            assert_eq!(rx.accept(c), Ok(ChunkVerdict::Accepted));
        }
        assert_eq!(rx.accept(&chunks[1]), Ok(ChunkVerdict::Duplicate));
        assert_eq!(rx.finish(&BatchEndPayload { chunk_count: 4 }).unwrap(), archive);
    }

    #[test]
    fn corrupted_chunk_retried_then_exhausted() {
        let archive = vec![0xA5u8; 300 << 10];
        let (begin, chunks) = split_archive(&archive, MIN_CHUNK, Value::Null).unwrap();
        let mut rx = BatchReceiver::new(begin);
        let mut bad = chunks[0].clone();
        bad.checksum ^= 1;
        for _ in 0..MAX_RETRANSMITS {
            assert_eq!(rx.accept(&bad), Err(WireError::ChecksumMismatch { chunk: 0 }));
        }
        assert_eq!(rx.accept(&bad), Err(WireError::RetransmitExhausted { chunk: 0 }));
        assert_eq!(rx.accept(&chunks[2]), Err(WireError::ChunkGap { expected: 0, got: 2 }));
    }

    #[test]
    fn chunk_size_bounds() {
        assert_eq!(split_archive(&[1, 2, 3], MIN_CHUNK - 1, Value::Null).unwrap_err(), WireError::ChunkSize(MIN_CHUNK - 1));
        assert!(split_archive(&[1, 2, 3], MAX_CHUNK + 1, Value::Null).is_err());
    }
}
