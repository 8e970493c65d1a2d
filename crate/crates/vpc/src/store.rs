//! Directory-tree document store for patients and sessions.
//!
//! ```text
//! <root>/patients/<patient_id>/patient.json
//! <root>/patients/<patient_id>/sessions/<session_id>/envelope.json
//!                                                   result.json plan.json
//!                                                   gaze.csv ppg.csv
//!                                                   [gaze_net.json] [frames.vpca]
//! ```
//! Every file is written to a hidden temporary, synced and renamed into
//! place. A session's envelope is written last and is its commit point:
//! a session directory without one is an orphan of an interrupted write.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vpc_core::gaze::{GazeNet, InvalidReason};
use vpc_core::pipeline::FrameOutput;
use vpc_core::session::{SessionPlan, SessionResult, SessionStatus};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{0:?} already exists")]
    DuplicateId(String),
    #[error("{0:?} not found")]
    NotFound(String),
    #[error("no patient {0:?}")]
    UnknownPatient(String),
    #[error("{0:?} is not a valid id")]
    InvalidId(String),
    #[error("storage full: {0}")]
    StorageFull(io::Error),
    #[error("injected failure at {0:?}")]
    Injected(FailPoint),
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            StoreError::StorageFull(e)
        } else {
            StoreError::Io(e)
        }
    }
}

/// Steps of an atomic write where the fault harness can stop the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailPoint {
    /// Nothing written yet.
    BeforeWrite,
    /// Half of the temporary file written.
    PartialTemp,
    /// Temporary complete and synced, not yet renamed.
    BeforeRename,
    /// Renamed, directory not yet synced.
    AfterRename,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub label: String,
    #[serde(default)]
    pub birth_year: Option<u16>,
    #[serde(default)]
    pub notes: String,
    pub created_at_ms: u64,
}

impl PatientRecord {
    pub fn new(patient_id: &str, created_at_ms: u64) -> Self {
        Self { patient_id: patient_id.to_string(), label: patient_id.to_string(), birth_year: None, notes: String::new(), created_at_ms }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeStatus {
    Complete,
    Aborted,
}

/// Index document of a stored session. File fields are names relative to
/// the session directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEnvelope {
    pub session_id: String,
    pub patient_id: String,
    pub started_at_ms: u64,
    pub status: EnvelopeStatus,
    pub plan_hash: String,
    pub plan: String,
    pub result: String,
    pub gaze_csv: String,
    pub ppg_csv: String,
    pub gaze_net: Option<String>,
    pub archive: Option<String>,
}

impl SessionEnvelope {
    pub fn files(&self) -> Vec<&str> {
        let mut v = vec![self.plan.as_str(), self.result.as_str(), self.gaze_csv.as_str(), self.ppg_csv.as_str()];
        v.extend(self.gaze_net.as_deref());
        v.extend(self.archive.as_deref());
        v
    }
}

/// Everything `put_session` persists.
#[derive(Debug, Clone, Copy)]
pub struct SessionRecord<'a> {
    pub session_id: &'a str,
    pub patient_id: &'a str,
    pub started_at_ms: u64,
    pub plan: &'a SessionPlan,
    pub result: &'a SessionResult,
    pub frames: &'a [FrameOutput],
    pub gaze_net: Option<&'a GazeNet>,
    pub archive: Option<&'a [u8]>,
}

/// One row of `gaze.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeRow {
    pub frame_index: u64,
    pub t_ms: u64,
    pub gaze_x: Option<f64>,
    pub valid: bool,
    pub reason: Option<InvalidReason>,
    pub bpm: Option<f64>,
}

impl From<&FrameOutput> for GazeRow {
    fn from(o: &FrameOutput) -> Self {
        let s = &o.sample;
        Self { frame_index: s.frame_index, t_ms: s.t_ms, gaze_x: s.gaze_x, valid: s.valid, reason: s.invalid_reason, bpm: o.bpm }
    }
}

/// One row of `ppg.csv`: forehead channel means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpgRow {
    pub frame_index: u64,
    pub t_ms: u64,
    pub r: Option<f64>,
    pub g: Option<f64>,
    pub b: Option<f64>,
}

impl From<&FrameOutput> for PpgRow {
    fn from(o: &FrameOutput) -> Self {
        let c = o.ppg_rgb;
        Self { frame_index: o.sample.frame_index, t_ms: o.sample.t_ms, r: c.map(|c| c[0]), g: c.map(|c| c[1]), b: c.map(|c| c[2]) }
    }
}

pub fn write_csv<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to CSV");
    }
    w.into_inner().expect("writing to a Vec")
}

pub fn read_csv<R: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<R>, StoreError> {
    let corrupt = |e: csv::Error| StoreError::Corrupt { path: path.to_path_buf(), message: e.to_string() };
    let mut r = csv::Reader::from_path(path).map_err(corrupt)?;
    r.deserialize().collect::<Result<Vec<R>, _>>().map_err(corrupt)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IntegrityReport {
    /// Session directories without an envelope and leftover temporaries.
    pub orphans: Vec<PathBuf>,
    /// Files an envelope names that do not exist.
    pub missing: Vec<PathBuf>,
}

impl IntegrityReport {
    pub fn is_clean(&self) -> bool {
        self.orphans.is_empty() && self.missing.is_empty()
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    fault: Option<(usize, FailPoint)>,
    writes: AtomicUsize,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_id(id: &str) -> Result<(), StoreError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn is_temp(name: &str) -> bool {
    name.starts_with('.') && name.ends_with(".tmp")
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(StoreError::NotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("store documents serialize");
    out.push(b'\n');
    out
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("patients"))?;
        Ok(Self { root, fault: None, writes: AtomicUsize::new(0) })
    }

    /// Makes the `nth` atomic write (counting from 0) stop at `point`.
    pub fn with_fault(mut self, nth: usize, point: FailPoint) -> Self {
        self.fault = Some((nth, point));
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn patient_dir(&self, id: &str) -> PathBuf {
        self.root.join("patients").join(id)
    }

    pub fn session_dir(&self, patient_id: &str, session_id: &str) -> PathBuf {
        self.patient_dir(patient_id).join("sessions").join(session_id)
    }

    fn fail_at(&self, n: usize, point: FailPoint) -> Result<(), StoreError> {
        match self.fault {
            Some((nth, p)) if nth == n && p == point => Err(StoreError::Injected(point)),
            _ => Ok(()),
        }
    }

    /// Temp file, fsync, rename, fsync of the directory.
    fn atomic_write(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let n = self.writes.fetch_add(1, Ordering::SeqCst);
        let dir = path.parent().expect("store paths have a parent");
        let name = path.file_name().expect("store paths name a file").to_string_lossy();
        let tmp = dir.join(format!(".{name}.tmp"));
        self.fail_at(n, FailPoint::BeforeWrite)?;
        let mut f = File::create(&tmp)?;
        if self.fail_at(n, FailPoint::PartialTemp).is_err() {
            f.write_all(&bytes[..bytes.len() / 2])?;
            return Err(StoreError::Injected(FailPoint::PartialTemp));
        }
        f.write_all(bytes)?;
        f.sync_all()?;
        drop(f);
        self.fail_at(n, FailPoint::BeforeRename)?;
        fs::rename(&tmp, path)?;
        self.fail_at(n, FailPoint::AfterRename)?;
        sync_dir(dir)?;
        Ok(())
    }

    /// Stores a patient. An existing id is replaced only with `update`.
    pub fn put_patient(&self, record: &PatientRecord, update: bool) -> Result<(), StoreError> {
        check_id(&record.patient_id)?;
        let dir = self.patient_dir(&record.patient_id);
        let path = dir.join("patient.json");
        if path.exists() && !update {
            return Err(StoreError::DuplicateId(record.patient_id.clone()));
        }
        fs::create_dir_all(&dir)?;
        self.atomic_write(&path, &to_json(record))
    }

    pub fn get_patient(&self, id: &str) -> Result<PatientRecord, StoreError> {
        check_id(id)?;
        read_json(&self.patient_dir(id).join("patient.json")).map_err(|e| match e {
            StoreError::NotFound(_) => StoreError::NotFound(id.to_string()),
            e => e,
        })
    }

    /// All patients, oldest first.
    pub fn list_patients(&self) -> Result<Vec<PatientRecord>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(self.root.join("patients"))? {
            let path = entry?.path().join("patient.json");
            if path.exists() {
                out.push(read_json::<PatientRecord>(&path)?);
            }
        }
        out.sort_by(|a, b| (a.created_at_ms, &a.patient_id).cmp(&(b.created_at_ms, &b.patient_id)));
        Ok(out)
    }

    /// Writes a session's artifacts and then its envelope.
    pub fn put_session(&self, rec: &SessionRecord<'_>) -> Result<SessionEnvelope, StoreError> {
        check_id(rec.session_id)?;
        check_id(rec.patient_id)?;
        if !self.patient_dir(rec.patient_id).join("patient.json").exists() {
            return Err(StoreError::UnknownPatient(rec.patient_id.to_string()));
        }
        let dir = self.session_dir(rec.patient_id, rec.session_id);
        if dir.join("envelope.json").exists() {
            return Err(StoreError::DuplicateId(rec.session_id.to_string()));
        }
        fs::create_dir_all(&dir)?;
        let env = SessionEnvelope {
            session_id: rec.session_id.to_string(),
            patient_id: rec.patient_id.to_string(),
            started_at_ms: rec.started_at_ms,
            status: match rec.result.status {
                SessionStatus::Complete => EnvelopeStatus::Complete,
                SessionStatus::Aborted | SessionStatus::Incomplete => EnvelopeStatus::Aborted,
            },
            plan_hash: rec.plan.hash(),
            plan: "plan.json".into(),
            result: "result.json".into(),
            gaze_csv: "gaze.csv".into(),
            ppg_csv: "ppg.csv".into(),
            gaze_net: rec.gaze_net.map(|_| "gaze_net.json".into()),
            archive: rec.archive.map(|_| "frames.vpca".into()),
        };
        self.atomic_write(&dir.join(&env.plan), &to_json(rec.plan))?;
        self.atomic_write(&dir.join(&env.gaze_csv), &write_csv(rec.frames.iter().map(GazeRow::from)))?;
        self.atomic_write(&dir.join(&env.ppg_csv), &write_csv(rec.frames.iter().map(PpgRow::from)))?;
        if let Some(net) = rec.gaze_net {
            self.atomic_write(&dir.join("gaze_net.json"), &to_json(net))?;
        }
        if let Some(bytes) = rec.archive {
            self.atomic_write(&dir.join("frames.vpca"), bytes)?;
        }
        self.atomic_write(&dir.join(&env.result), &to_json(rec.result))?;
        self.atomic_write(&dir.join("envelope.json"), &to_json(&env))?;
        Ok(env)
    }

    pub fn get_envelope(&self, patient_id: &str, session_id: &str) -> Result<SessionEnvelope, StoreError> {
        check_id(patient_id)?;
        check_id(session_id)?;
        read_json(&self.session_dir(patient_id, session_id).join("envelope.json")).map_err(|e| match e {
            StoreError::NotFound(_) => StoreError::NotFound(session_id.to_string()),
            e => e,
        })
    }

    pub fn get_session(&self, patient_id: &str, session_id: &str) -> Result<(SessionEnvelope, SessionResult), StoreError> {
        let env = self.get_envelope(patient_id, session_id)?;
        let result = read_json(&self.session_dir(patient_id, session_id).join(&env.result))?;
        Ok((env, result))
    }

    /// Raw bytes of one of a session's files.
    pub fn read_artifact(&self, env: &SessionEnvelope, name: &str) -> Result<Vec<u8>, StoreError> {
        Ok(fs::read(self.session_dir(&env.patient_id, &env.session_id).join(name))?)
    }

    pub fn gaze_rows(&self, env: &SessionEnvelope) -> Result<Vec<GazeRow>, StoreError> {
        read_csv(&self.session_dir(&env.patient_id, &env.session_id).join(&env.gaze_csv))
    }

    pub fn ppg_rows(&self, env: &SessionEnvelope) -> Result<Vec<PpgRow>, StoreError> {
        read_csv(&self.session_dir(&env.patient_id, &env.session_id).join(&env.ppg_csv))
    }

    /// Committed sessions of a patient ordered by start time.
    pub fn query_sessions(&self, patient_id: &str) -> Result<Vec<SessionEnvelope>, StoreError> {
        check_id(patient_id)?;
        if !self.patient_dir(patient_id).join("patient.json").exists() {
            return Err(StoreError::UnknownPatient(patient_id.to_string()));
        }
        let dir = self.patient_dir(patient_id).join("sessions");
        let mut out = Vec::new();
        if dir.exists() {
            for entry in fs::read_dir(dir)? {
                let path = entry?.path().join("envelope.json");
                if path.exists() {
                    out.push(read_json::<SessionEnvelope>(&path)?);
                }
            }
        }
        out.sort_by(|a, b| (a.started_at_ms, &a.session_id).cmp(&(b.started_at_ms, &b.session_id)));
        Ok(out)
    }

    /// Finds uncommitted sessions, leftover temporaries and files that
    /// envelopes reference but that are gone.
    pub fn integrity_check(&self) -> Result<IntegrityReport, StoreError> {
        let mut report = IntegrityReport::default();
        let temps = |dir: &Path, report: &mut IntegrityReport| -> io::Result<()> {
            for e in fs::read_dir(dir)? {
                let e = e?;
                if is_temp(&e.file_name().to_string_lossy()) {
                    report.orphans.push(e.path());
                }
            }
            Ok(())
        };
        for p in fs::read_dir(self.root.join("patients"))? {
            let pdir = p?.path();
            if !pdir.is_dir() {
                continue;
            }
            temps(&pdir, &mut report)?;
            let sdir = pdir.join("sessions");
            if !sdir.is_dir() {
                continue;
            }
            for s in fs::read_dir(&sdir)? {
                let dir = s?.path();
                let env_path = dir.join("envelope.json");
                if !env_path.exists() {
                    report.orphans.push(dir);
                    continue;
                }
                temps(&dir, &mut report)?;
                let env: SessionEnvelope = read_json(&env_path)?;
                for f in env.files() {
                    if !dir.join(f).exists() {
                        report.missing.push(dir.join(f));
                    }
                }
            }
        }
        report.orphans.sort();
        report.missing.sort();
        Ok(report)
    }

    /// Deletes what `integrity_check` reports as orphans.
    pub fn remove_orphans(&self) -> Result<usize, StoreError> {
        let report = self.integrity_check()?;
        for p in &report.orphans {
            if p.is_dir() {
                fs::remove_dir_all(p)?;
            } else {
                fs::remove_file(p)?;
            }
        }
        Ok(report.orphans.len())
    }
}
