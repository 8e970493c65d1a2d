//! Measurement and management node runtimes.
//!
//! Message flow after the HELLO exchange:
//!
//! ```text
//! management                      measurement
//! CALIB_START        ->
//!                    <-           CALIB_DONE (trained or preloaded net)
//! PLAN_PUSH          ->
//!                    <-           STIM_SHOW, STATUS, GAZE_TICK ...
//!                    <-           RESULT                       (live)
//!                    <-           BATCH_BEGIN, BATCH_CHUNK ..., BATCH_END (batch)
//! RESULT             ->                                        (batch)
//! ```
//! Either side may send ABORT once the plan is pushed. Every message except
//! ACK is acknowledged; a chunk failing its checksum is answered with an
//! ERROR naming the chunk instead, and the sender repeats it.

use std::io;
use std::iter::Peekable;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use vpc_core::frame::Frame;
use vpc_core::gaze::{collect_calibration, CalibPattern, EyeTracker, GazeError, GazeNet, TrainParams, TrainReport};
use vpc_core::haar::CascadeModel;
use vpc_core::pipeline::{FrameOutput, MeasurementPipeline};
use vpc_core::session::{EngineConfig, EngineEvent, ItemKind, SessionEngine, SessionError, SessionPlan, SessionResult, SessionStatus};
use vpc_core::wire::{
    split_archive, BatchBeginPayload, BatchChunkPayload, BatchEndPayload, BatchReceiver, ChunkVerdict, ErrorPayload,
    GazeTickPayload, MsgType, StatusPayload, StimShowPayload, WireError, WireMessage, MAX_RETRANSMITS,
};

use crate::archive::{Archive, ArchiveError, ArchiveWriter};
use crate::cascade_xml::{parse_cascade, CascadeXmlError};
use crate::frames::SourceError;
use crate::gateway::Gateway;
use crate::models;
use crate::store::{PatientRecord, SessionEnvelope, SessionRecord, Store, StoreError};
use crate::transport::{ConnError, Connection, Event};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const REPLY_TIMEOUT: Duration = Duration::from_secs(120);
/// How long a node waits for the next control message of the session.
const IDLE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Conn(#[from] ConnError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Gaze(#[from] GazeError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot load cascade {path}: {message}")]
    Cascade { path: String, message: String },
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
}

impl NodeError {
    /// True for failures of the link itself rather than of the session.
    pub fn is_connection(&self) -> bool {
        matches!(self, NodeError::Conn(_) | NodeError::Wire(_))
    }
}

/// Face and eye cascades.
#[derive(Debug, Clone)]
pub struct Models {
    pub face: CascadeModel,
    pub eye: CascadeModel,
}

impl Models {
    pub fn builtin() -> Self {
        Self { face: models::frontal_face().expect("shipped cascade parses"), eye: models::eye().expect("shipped cascade parses") }
    }

    /// Loads cascades from files, falling back to the shipped ones.
    pub fn load(face: Option<&Path>, eye: Option<&Path>) -> Result<Self, NodeError> {
        let read = |p: Option<&Path>, builtin: fn() -> Result<CascadeModel, CascadeXmlError>| -> Result<CascadeModel, NodeError> {
            let err = |path: &Path, message: String| NodeError::Cascade { path: path.display().to_string(), message };
            match p {
                None => Ok(builtin().expect("shipped cascade parses")),
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| err(path, e.to_string()))?;
                    parse_cascade(&text).map_err(|e| err(path, e.to_string()))
                }
            }
        };
        Ok(Self { face: read(face, models::frontal_face)?, eye: read(eye, models::eye)? })
    }

    pub fn tracker(&self) -> EyeTracker<'_> {
        EyeTracker::new(&self.face, &self.eye)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibStartPayload {
    pub params: TrainParams,
    pub pattern: CalibPattern,
}

impl Default for CalibStartPayload {
    fn default() -> Self {
        Self { params: TrainParams::default(), pattern: CalibPattern::three_sweeps() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibDonePayload {
    pub gaze_net: GazeNet,
    /// True when the node already had a trained network.
    pub preloaded: bool,
    pub samples: usize,
    pub skipped: usize,
    pub report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanPushPayload {
    pub session_id: String,
    pub patient_id: String,
    pub plan: SessionPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPayload {
    pub result: SessionResult,
    /// Per-frame outputs of a live run; empty when the receiver computed them.
    #[serde(default)]
    pub frames: Vec<FrameOutput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbortPayload {
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Process frames as they arrive and stream telemetry.
    #[default]
    Live,
    /// Record frames, transfer them after the session, process remotely.
    Batch,
}

/// Runs every frame through the measurement pipeline.
pub fn process_frames<I, E>(frames: I, models: &Models, net: &GazeNet, fps: f64) -> Result<Vec<FrameOutput>, NodeError>
where
    I: IntoIterator<Item = Result<Frame, E>>,
    NodeError: From<E>,
{
    let mut pipeline = MeasurementPipeline::new(models.tracker(), net, fps);
    let mut out = Vec::new();
    for f in frames {
        out.push(pipeline.process(&f?)?);
    }
    Ok(out)
}

/// Offline processing of a transferred archive.
pub fn process_archive(bytes: &[u8], models: &Models, net: &GazeNet) -> Result<Vec<FrameOutput>, NodeError> {
    let archive = Archive::parse(bytes)?;
    process_frames(archive.frames(), models, net, archive.manifest().fps)
}

/// How a recorded session ended on the measurement clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "end", content = "t_ms", rename_all = "snake_case")]
pub enum ReplayEnd {
    /// The schedule ran out at this instant, after the last recorded frame.
    Complete(u64),
    Aborted(u64),
    /// Unknown; the result is whatever the frames cover.
    Open,
}

impl ReplayEnd {
    /// Reads the `replay` field of batch session metadata.
    pub fn from_meta(meta: Option<&serde_json::Value>) -> Self {
        meta.and_then(|m| m.get("replay"))
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or(ReplayEnd::Open)
    }
}

/// Replays outputs through a session engine.
pub fn score_outputs(
    plan: &SessionPlan,
    outputs: &[FrameOutput],
    config: EngineConfig,
    end: ReplayEnd,
) -> Result<SessionResult, SessionError> {
    let mut engine = SessionEngine::new(plan.clone(), config)?;
    for o in outputs {
        if let ReplayEnd::Aborted(t) = end {
            if o.sample.t_ms >= t {
                break;
            }
        }
        engine.push(o);
    }
    match end {
        ReplayEnd::Complete(t) => {
            engine.tick(t);
        }
        ReplayEnd::Aborted(t) => engine.abort(t),
        ReplayEnd::Open => {}
    }
    Ok(engine.result())
}

#[derive(Debug, Clone)]
pub struct MeasureOptions {
    pub mode: Mode,
    pub fps: f64,
    pub chunk_size: usize,
    pub screen: (u32, u32),
    /// Fault injection: the first transmission of this chunk carries a bad
    /// checksum.
    pub corrupt_chunk: Option<u64>,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { mode: Mode::Live, fps: 30.0, chunk_size: 256 << 10, screen: (1920, 1080), corrupt_chunk: None }
    }
}

#[derive(Debug, Clone)]
pub struct MeasureOutcome {
    pub result: SessionResult,
    /// Live mode only.
    pub outputs: Vec<FrameOutput>,
    /// Batch mode only.
    pub archive: Option<Vec<u8>>,
    pub retransmits: u32,
    pub gaze_net: GazeNet,
}

type FrameIter<'a> = Peekable<Box<dyn Iterator<Item = Result<Frame, SourceError>> + Send + 'a>>;

/// Runs the measurement node until the session ends.
pub fn run_measurement<'a>(
    conn: &mut Connection,
    frames: Box<dyn Iterator<Item = Result<Frame, SourceError>> + Send + 'a>,
    models: &Models,
    mut net: Option<GazeNet>,
    opts: &MeasureOptions,
) -> Result<MeasureOutcome, NodeError> {
    let mut frames: FrameIter<'a> = frames.peekable();
    conn.handshake(HANDSHAKE_TIMEOUT)?;
    let push = loop {
        let msg = conn.next_message(IDLE_TIMEOUT, "CALIB_START or PLAN_PUSH")?;
        conn.ack(&msg)?;
        match msg.kind {
            MsgType::CalibStart => {
                let start: CalibStartPayload = msg.payload_as()?;
                let done = match &net {
                    Some(n) => CalibDonePayload { gaze_net: n.clone(), preloaded: true, samples: 0, skipped: 0, report: None },
                    None => match calibrate(&mut frames, models, &start) {
                        Ok(d) => d,
                        Err(e) => {
                            let _ = conn.send_error(&ErrorPayload::new("calibration", &e.to_string()));
                            return Err(e);
                        }
                    },
                };
                net = Some(done.gaze_net.clone());
                conn.send(MsgType::CalibDone, &done)?;
            }
            MsgType::PlanPush if net.is_some() => break msg.payload_as::<PlanPushPayload>()?,
            MsgType::PlanPush => {
                conn.send_error(&ErrorPayload::new("not_calibrated", "PLAN_PUSH before calibration"))?;
            }
            MsgType::Abort => return Err(SessionError::InvalidPlan("aborted before the session started".into()).into()),
            _ => return Err(NodeError::Unexpected(msg.kind.as_str())),
        }
    };
    let net = net.expect("checked above");
    let config = EngineConfig {
        patient_id: push.patient_id.clone(),
        fps: opts.fps,
        pause_on_alarm: opts.mode == Mode::Live,
        ..EngineConfig::default()
    };
    let mut engine = SessionEngine::new(push.plan.clone(), config)?;
    match opts.mode {
        Mode::Live => live_session(conn, &mut frames, models, &net, &mut engine, opts),
        Mode::Batch => batch_session(conn, &mut frames, &mut engine, &push, net, opts),
    }
}

fn calibrate(frames: &mut FrameIter<'_>, models: &Models, start: &CalibStartPayload) -> Result<CalibDonePayload, NodeError> {
    let (_, end) = start.pattern.span();
    let mut t0 = None;
    let mut err = None;
    let mut calib_frames = std::iter::from_fn(|| {
        let next = frames.peek()?;
        let t = match next {
            Ok(f) => f.timestamp_ms,
            Err(_) => {
                err = frames.next().and_then(Result::err);
                return None;
            }
        };
        let base = *t0.get_or_insert(t);
        if t - base > end {
            return None;
        }
        let f = frames.next()?.ok()?;
        let index = f.index;
        Some(f.with_position(index, t - base))
    });
    let tracker = models.tracker();
    let calib = collect_calibration(&mut calib_frames, &start.pattern, &tracker);
    drop(calib_frames);
    if let Some(e) = err {
        return Err(e.into());
    }
    let calib = calib?;
    let gaze_net = calib.train(&start.params)?;
    Ok(CalibDonePayload {
        report: gaze_net.training.clone(),
        gaze_net,
        preloaded: false,
        samples: calib.samples.len(),
        skipped: calib.skipped,
    })
}

fn announce(
    conn: &mut Connection,
    plan: &SessionPlan,
    events: &[EngineEvent],
    current_pair: &mut Option<String>,
) -> Result<(), NodeError> {
    for e in events {
        match e {
            EngineEvent::Stimulus { t_ms, item } => {
                *current_pair = (item.kind == ItemKind::Pair).then(|| plan.test_pairs[item.index].id.clone());
                if let Some(p) = StimShowPayload::for_item(plan, item, *t_ms) {
                    conn.send(MsgType::StimShow, &p)?;
                }
            }
            EngineEvent::Status { status, .. } => {
                conn.send(MsgType::Status, &StatusPayload { status: *status })?;
            }
            EngineEvent::Finished { .. } => {}
        }
    }
    Ok(())
}

/// Handles whatever arrived without waiting; true when ABORT was received.
fn poll_abort(conn: &mut Connection) -> Result<bool, NodeError> {
    while let Some(ev) = conn.recv(Duration::ZERO)? {
        if let Event::Message(m) = ev {
            conn.ack(&m)?;
            if m.kind == MsgType::Abort {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn live_session(
    conn: &mut Connection,
    frames: &mut FrameIter<'_>,
    models: &Models,
    net: &GazeNet,
    engine: &mut SessionEngine,
    opts: &MeasureOptions,
) -> Result<MeasureOutcome, NodeError> {
    let plan = engine.plan().clone();
    let mut pipeline = MeasurementPipeline::new(models.tracker(), net, opts.fps);
    let mut outputs = Vec::new();
    let mut current_pair = None;
    for frame in frames.by_ref() {
        let frame = frame?;
        let out = pipeline.process(&frame)?;
        let events = engine.push(&out);
        announce(conn, &plan, &events, &mut current_pair)?;
        if engine.is_ended() {
            break;
        }
        conn.send(MsgType::GazeTick, &GazeTickPayload::new(&out.sample, out.bpm, current_pair.clone()))?;
        outputs.push(out);
        if poll_abort(conn)? {
            engine.abort(frame.timestamp_ms);
            break;
        }
    }
    if !engine.is_ended() {
        // Frames ran out before the schedule did.
        engine.abort(outputs.last().map_or(0, |o| o.sample.t_ms));
    }
    let mut result = engine.result();
    result.gaze_trace = Some("gaze.csv".into());
    let seq = conn.send(MsgType::Result, &ResultPayload { result: result.clone(), frames: outputs.clone() })?;
    finish_wait(conn, seq)?;
    Ok(MeasureOutcome { result, outputs, archive: None, retransmits: 0, gaze_net: net.clone() })
}

// Waits for an ACK, acknowledging anything else that arrives.
fn finish_wait(conn: &mut Connection, seq: u64) -> Result<(), NodeError> {
    while let Some(m) = conn.wait_ack(seq, REPLY_TIMEOUT)? {
        conn.ack(&m)?;
    }
    Ok(())
}

fn batch_session(
    conn: &mut Connection,
    frames: &mut FrameIter<'_>,
    engine: &mut SessionEngine,
    push: &PlanPushPayload,
    net: GazeNet,
    opts: &MeasureOptions,
) -> Result<MeasureOutcome, NodeError> {
    let plan = engine.plan().clone();
    let mut writer = ArchiveWriter::new(opts.fps, opts.screen);
    let mut current_pair = None;
    let mut end = ReplayEnd::Open;
    let mut last_t = 0;
    for frame in frames.by_ref() {
        let frame = frame?;
        let events = engine.tick(frame.timestamp_ms);
        announce(conn, &plan, &events, &mut current_pair)?;
        if let Some(&EngineEvent::Finished { t_ms }) = events.last() {
            end = ReplayEnd::Complete(t_ms);
            break;
        }
        writer.push(&frame);
        last_t = frame.timestamp_ms;
        if poll_abort(conn)? {
            end = ReplayEnd::Aborted(last_t);
            break;
        }
    }
    if end == ReplayEnd::Open {
        end = ReplayEnd::Aborted(last_t);
    }
    if writer.is_empty() {
        return Err(ArchiveError::Empty.into());
    }
    let meta = json!({
        "session_id": push.session_id,
        "patient_id": push.patient_id,
        "replay": end,
    });
    writer.set_session(meta.clone());
    let archive = writer.finish();
    let (begin, chunks) = split_archive(&archive, opts.chunk_size, meta)?;
    let seq = conn.send(MsgType::BatchBegin, &begin)?;
    finish_wait(conn, seq)?;
    let mut retransmits = 0;
    for chunk in &chunks {
        let mut attempt = 0;
        loop {
            let mut c = chunk.clone();
            if attempt == 0 && opts.corrupt_chunk == Some(chunk.chunk_index) {
                c.checksum ^= 0x5A5A_5A5A;
            }
            let seq = conn.send(MsgType::BatchChunk, &c)?;
            match chunk_reply(conn, seq, chunk.chunk_index)? {
                true => break,
                false if attempt < MAX_RETRANSMITS => {
                    attempt += 1;
                    retransmits += 1;
                }
                false => return Err(WireError::RetransmitExhausted { chunk: chunk.chunk_index }.into()),
            }
        }
    }
    let seq = conn.send(MsgType::BatchEnd, &BatchEndPayload { chunk_count: chunks.len() as u64 })?;
    finish_wait(conn, seq)?;
    let msg = conn.next_message(IDLE_TIMEOUT, "RESULT")?;
    conn.ack(&msg)?;
    if msg.kind != MsgType::Result {
        return Err(NodeError::Unexpected(msg.kind.as_str()));
    }
    let r: ResultPayload = msg.payload_as()?;
    Ok(MeasureOutcome { result: r.result, outputs: Vec::new(), archive: Some(archive), retransmits, gaze_net: net })
}

// True once the chunk is acknowledged, false when the receiver asks again.
fn chunk_reply(conn: &mut Connection, seq: u64, index: u64) -> Result<bool, NodeError> {
    loop {
        match conn.wait_ack(seq, REPLY_TIMEOUT)? {
            None => return Ok(true),
            Some(m) if m.kind == MsgType::Error => {
                let p: ErrorPayload = m.payload_as()?;
                if p.chunk_index == Some(index) {
                    return Ok(false);
                }
                return Err(ConnError::Peer(p).into());
            }
            Some(m) => conn.ack(&m)?,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ManageOptions {
    pub session_id: String,
    pub patient_id: String,
    pub plan: SessionPlan,
    pub calib: CalibStartPayload,
    pub started_at_ms: u64,
    /// Test hook: send ABORT right after this many STIM_SHOWs.
    pub abort_after_stims: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ManageOutcome {
    pub result: SessionResult,
    pub outputs: Vec<FrameOutput>,
    pub envelope: Option<SessionEnvelope>,
    pub stim_shows: Vec<StimShowPayload>,
    pub ticks: usize,
    /// Tick arrival minus send time mapped to the local clock.
    pub latencies_ms: Vec<i64>,
    pub retransmit_requests: u32,
    pub archive: Option<Vec<u8>>,
    pub gaze_net: GazeNet,
}

/// Runs the management node for one session and persists it when a store
/// is given.
pub fn run_management(
    conn: &mut Connection,
    models: &Models,
    store: Option<&Store>,
    gateway: Option<&Gateway>,
    opts: &ManageOptions,
) -> Result<ManageOutcome, NodeError> {
    opts.plan.validate_structure()?;
    let publish = |m: &WireMessage| {
        if let Some(g) = gateway {
            g.publish(m);
        }
    };
    conn.handshake(HANDSHAKE_TIMEOUT)?;
    conn.send(MsgType::CalibStart, &opts.calib)?;
    let done: CalibDonePayload = loop {
        let m = conn.next_message(IDLE_TIMEOUT, "CALIB_DONE")?;
        conn.ack(&m)?;
        publish(&m);
        if m.kind == MsgType::CalibDone {
            break m.payload_as()?;
        }
    };
    let net = done.gaze_net;
    conn.send(
        MsgType::PlanPush,
        &PlanPushPayload { session_id: opts.session_id.clone(), patient_id: opts.patient_id.clone(), plan: opts.plan.clone() },
    )?;

    let mut stim_shows = Vec::new();
    let mut ticks = 0;
    let mut latencies = Vec::new();
    let mut receiver: Option<BatchReceiver> = None;
    let mut retransmit_requests = 0;
    let mut abort_sent = false;
    let (result, outputs, archive) = loop {
        if let Some(g) = gateway {
            if g.take_commands().iter().any(|c| c.get("type").and_then(|t| t.as_str()) == Some("ABORT")) && !abort_sent {
                conn.send(MsgType::Abort, &AbortPayload { reason: "operator".into() })?;
                abort_sent = true;
            }
        }
        let Some(ev) = conn.recv(Duration::from_millis(50))? else { continue };
        let Event::Message(m) = ev else { continue };
        if m.kind != MsgType::BatchChunk {
            publish(&m);
        }
        match m.kind {
            MsgType::StimShow => {
                conn.ack(&m)?;
                stim_shows.push(m.payload_as::<StimShowPayload>()?);
                if opts.abort_after_stims == Some(stim_shows.len()) && !abort_sent {
                    conn.send(MsgType::Abort, &AbortPayload { reason: "operator".into() })?;
                    abort_sent = true;
                }
            }
            MsgType::GazeTick => {
                conn.ack(&m)?;
                ticks += 1;
                if let Some(off) = conn.link().offset_ms() {
                    latencies.push(conn.now_ms() as i64 - (m.t_ms as i64 + off));
                }
            }
            MsgType::Status | MsgType::Abort => conn.ack(&m)?,
            MsgType::Result => {
                conn.ack(&m)?;
                let r: ResultPayload = m.payload_as()?;
                break (r.result, r.frames, None);
            }
            MsgType::BatchBegin => {
                conn.ack(&m)?;
                receiver = Some(BatchReceiver::new(m.payload_as::<BatchBeginPayload>()?));
            }
            MsgType::BatchChunk => {
                let rx = receiver.as_mut().ok_or(NodeError::Unexpected("BATCH_CHUNK"))?;
                let chunk: BatchChunkPayload = m.payload_as()?;
                match rx.accept(&chunk) {
                    Ok(ChunkVerdict::Accepted | ChunkVerdict::Duplicate) => conn.ack(&m)?,
                    Err(WireError::ChecksumMismatch { chunk }) => {
                        retransmit_requests += 1;
                        conn.send_error(&ErrorPayload::retransmit(chunk))?;
                    }
                    Err(e) => {
                        let _ = conn.send_error(&ErrorPayload::new("batch", &e.to_string()));
                        return Err(e.into());
                    }
                }
            }
            MsgType::BatchEnd => {
                conn.ack(&m)?;
                let rx = receiver.take().ok_or(NodeError::Unexpected("BATCH_END"))?;
                let end = ReplayEnd::from_meta(Some(&rx.begin().session));
                let bytes = rx.finish(&m.payload_as()?)?;
                let fps = Archive::parse(&bytes)?.manifest().fps;
                let outputs = process_archive(&bytes, models, &net)?;
                let config = EngineConfig { patient_id: opts.patient_id.clone(), fps, pause_on_alarm: false, ..EngineConfig::default() };
                let mut result = score_outputs(&opts.plan, &outputs, config, end)?;
                result.gaze_trace = Some("gaze.csv".into());
                let seq = conn.send(MsgType::Result, &ResultPayload { result: result.clone(), frames: Vec::new() })?;
                finish_wait(conn, seq)?;
                break (result, outputs, Some(bytes));
            }
            _ => {
                conn.ack(&m)?;
                return Err(NodeError::Unexpected(m.kind.as_str()));
            }
        }
    };

    let envelope = match store {
        Some(store) => {
            if let Err(StoreError::NotFound(_)) = store.get_patient(&opts.patient_id) {
                store.put_patient(&PatientRecord::new(&opts.patient_id, opts.started_at_ms), false)?;
            }
            Some(store.put_session(&SessionRecord {
                session_id: &opts.session_id,
                patient_id: &opts.patient_id,
                started_at_ms: opts.started_at_ms,
                plan: &opts.plan,
                result: &result,
                frames: &outputs,
                gaze_net: Some(&net),
                archive: archive.as_deref(),
            })?)
        }
        None => None,
    };
    Ok(ManageOutcome {
        result,
        outputs,
        envelope,
        stim_shows,
        ticks,
        latencies_ms: latencies,
        retransmit_requests,
        archive,
        gaze_net: net,
    })
}

/// Exit status of a finished session: 0 complete, 2 otherwise.
pub fn session_exit_code(result: &SessionResult) -> i32 {
    if result.status == SessionStatus::Complete {
        0
    } else {
        2
    }
}

impl From<io::Error> for NodeError {
    fn from(e: io::Error) -> Self {
        NodeError::Source(SourceError::Io(e))
    }
}
