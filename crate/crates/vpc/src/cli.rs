//! Command line: `measure`, `manage`, `calibrate` and `process-batch`.
//!
//! Exit codes: 0 success, 1 startup or configuration error, 2 session
//! aborted or data error, 3 connection failure.

use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use vpc_core::gaze::{
    assess_accuracy, collect_calibration, extract_patch, generate_click_points, AccuracyReport, CalibPattern, GazeError,
    GazeNet, TrainParams, REPORTED_OPERATING_POINT,
};
use vpc_core::session::{build_plan_with, EngineConfig, ImageRef, ImageRole, PlanTiming, SessionPlan};
use vpc_core::synth::render_frame;
use vpc_core::wire::{Role, DEFAULT_PORT};

use crate::archive::Archive;
use crate::frames::FrameInput;
use crate::gateway::Gateway;
use crate::nodes::{
    process_archive, run_management, run_measurement, score_outputs, session_exit_code, CalibStartPayload, ManageOptions,
    MeasureOptions, Mode, Models, NodeError, ReplayEnd,
};
use crate::store::{write_csv, GazeRow, PpgRow, Store};
use crate::transport::{connect_tcp, Clock, Connection, Endpoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STARTUP: i32 = 1;
pub const EXIT_SESSION: i32 = 2;
pub const EXIT_CONNECTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vpc", version, about = "Eye-tracking visual paired comparison test nodes")]
pub struct Cli {
    /// JSON configuration; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Node to run when no subcommand is given.
    #[arg(long, value_enum)]
    pub role: Option<RoleArg>,
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RoleArg {
    Measurement,
    Management,
}

/// Flags shared by the subcommands. Each also has a config file key of the
/// same name with underscores.
#[derive(Debug, Default, Clone, Args)]
pub struct Common {
    /// Management address to connect to (measurement).
    #[arg(long, global = true)]
    pub connect: Option<String>,
    /// Address to accept the measurement node on (management).
    #[arg(long, global = true)]
    pub listen: Option<String>,
    /// Frame manifest or synthetic scene JSON.
    #[arg(long, global = true)]
    pub frames: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Store root; defaults to $VPC_STORE_ROOT, then ./vpc-store.
    #[arg(long, global = true)]
    pub store: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Click points in the accuracy assessment.
    #[arg(long, global = true)]
    pub points: Option<usize>,
    /// Disable the browser gateway.
    #[arg(long, global = true)]
    pub no_ui: bool,
    /// Gateway address.
    #[arg(long, global = true)]
    pub ui_listen: Option<String>,
    /// Static UI assets served by the gateway.
    #[arg(long, global = true)]
    pub ui_dir: Option<PathBuf>,
    /// Trained network JSON; skips calibration on the measurement node.
    #[arg(long, global = true)]
    pub gaze_net: Option<PathBuf>,
    #[arg(long, global = true)]
    pub face_cascade: Option<PathBuf>,
    #[arg(long, global = true)]
    pub eye_cascade: Option<PathBuf>,
    #[arg(long, global = true)]
    pub patient: Option<String>,
    #[arg(long, global = true)]
    pub session: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the measurement node.
    Measure,
    /// Run the management node for one session.
    Manage,
    /// Calibrate on a sweep and assess accuracy on click points.
    Calibrate,
    /// Process a transferred frame archive offline.
    ProcessBatch {
        #[arg(long)]
        archive: PathBuf,
        /// Session plan JSON; when given the session is scored too.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
}

/// Configuration file contents. Relative paths resolve against the file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub role: Option<RoleArg>,
    pub listen: Option<String>,
    pub connect: Option<String>,
    pub frames: Option<PathBuf>,
    pub mode: Option<Mode>,
    pub store: Option<PathBuf>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub no_ui: Option<bool>,
    pub ui_listen: Option<String>,
    pub ui_dir: Option<PathBuf>,
    pub gaze_net: Option<PathBuf>,
    pub face_cascade: Option<PathBuf>,
    pub eye_cascade: Option<PathBuf>,
    pub patient: Option<String>,
    pub session: Option<String>,
    pub out: Option<PathBuf>,
    pub screen_width_px: Option<u32>,
    pub screen_height_px: Option<u32>,
    pub fps: Option<f64>,
    pub chunk_size: Option<usize>,
    pub train: Option<TrainParams>,
    pub timing: Option<PlanTiming>,
    /// Image files; ids are the file stems.
    pub familiar_images: Option<Vec<String>>,
    pub novel_images: Option<Vec<String>>,
}

impl NodeConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut c: NodeConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.frames, &mut c.store, &mut c.ui_dir, &mut c.gaze_net, &mut c.face_cascade, &mut c.eye_cascade, &mut c.out]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    /// Applies command-line flags on top.
    pub fn merge(mut self, f: &Common) -> Self {
        fn pick<T: Clone>(flag: &Option<T>, conf: &mut Option<T>) {
            if flag.is_some() {
                *conf = flag.clone();
            }
        }
        pick(&f.connect, &mut self.connect);
        pick(&f.listen, &mut self.listen);
        pick(&f.frames, &mut self.frames);
        pick(&f.mode, &mut self.mode);
        pick(&f.store, &mut self.store);
        pick(&f.seed, &mut self.seed);
        pick(&f.points, &mut self.points);
        pick(&f.ui_listen, &mut self.ui_listen);
        pick(&f.ui_dir, &mut self.ui_dir);
        pick(&f.gaze_net, &mut self.gaze_net);
        pick(&f.face_cascade, &mut self.face_cascade);
        pick(&f.eye_cascade, &mut self.eye_cascade);
        pick(&f.patient, &mut self.patient);
        pick(&f.session, &mut self.session);
        pick(&f.out, &mut self.out);
        if f.no_ui {
            self.no_ui = Some(true);
        }
        self
    }

    fn models(&self) -> Result<Models, NodeError> {
        Models::load(self.face_cascade.as_deref(), self.eye_cascade.as_deref())
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn store_root(&self) -> PathBuf {
        self.store
            .clone()
            .or_else(|| std::env::var_os("VPC_STORE_ROOT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("vpc-store"))
    }

    fn pools(&self) -> (Vec<ImageRef>, Vec<ImageRef>) {
        let refs = |files: &Option<Vec<String>>, prefix: &str, n: usize, role| match files {
            Some(list) => list
                .iter()
                .map(|p| {
                    let id = Path::new(p).file_stem().map_or(p.clone(), |s| s.to_string_lossy().into_owned());
                    ImageRef::new(id, p.clone(), role)
                })
                .collect(),
            None => (1..=n).map(|i| ImageRef::new(format!("{prefix}-{i:02}"), format!("images/{prefix}-{i:02}.png"), role)).collect(),
        };
        (refs(&self.familiar_images, "familiar", 12, ImageRole::Familiar), refs(&self.novel_images, "novel", 24, ImageRole::Novel))
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("vpc: {msg}");
    code
}

fn node_exit(e: &NodeError) -> i32 {
    match e {
        NodeError::Cascade { .. } => EXIT_STARTUP,
        e if e.is_connection() => EXIT_CONNECTION,
        _ => EXIT_SESSION,
    }
}

/// Parses arguments and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_STARTUP } else { EXIT_OK };
        }
    };
    let config = match &cli.config {
        Some(p) => match NodeConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(EXIT_STARTUP, e),
        },
        None => NodeConfig::default(),
    };
    let role = cli.role.or(config.role);
    let config = config.merge(&cli.common);
    match (&cli.command, role) {
        (Some(Command::Measure), _) | (None, Some(RoleArg::Measurement)) => measure(&config),
        (Some(Command::Manage), _) | (None, Some(RoleArg::Management)) => manage(&config),
        (Some(Command::Calibrate), _) => calibrate(&config),
        (Some(Command::ProcessBatch { archive, plan }), _) => process_batch(&config, archive, plan.as_deref()),
        (None, None) => fail(EXIT_STARTUP, "no subcommand or --role given"),
    }
}

fn load_net(path: &Path) -> Result<GazeNet, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn measure(c: &NodeConfig) -> i32 {
    let models = match c.models() {
        Ok(m) => m,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let Some(frames_path) = &c.frames else { return fail(EXIT_STARTUP, "measure needs --frames") };
    let input = match FrameInput::load(frames_path) {
        Ok(i) => i,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let net = match &c.gaze_net {
        Some(p) => match load_net(p) {
            Ok(n) => Some(n),
            Err(e) => return fail(EXIT_STARTUP, e),
        },
        None => None,
    };
    let frames = match input.frames() {
        Ok(f) => f,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let addr = c.connect.clone().unwrap_or_else(|| format!("127.0.0.1:{DEFAULT_PORT}"));
    let stream = match connect_tcp(&addr, Duration::from_secs(30)).and_then(Endpoint::tcp) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONNECTION, format!("cannot connect to {addr}: {e}")),
    };
    let mut conn = Connection::new(Role::Measurement, stream, Clock::new());
    let opts = MeasureOptions {
        mode: c.mode.unwrap_or_default(),
        fps: input.fps(),
        chunk_size: c.chunk_size.unwrap_or(256 << 10),
        screen: (c.screen_width_px.unwrap_or(input.screen().0), c.screen_height_px.unwrap_or(input.screen().1)),
        corrupt_chunk: None,
    };
    let outcome = run_measurement(&mut conn, frames, &models, net, &opts);
    conn.close();
    match outcome {
        Ok(o) => {
            println!(
                "{}",
                json!({"status": o.result.status, "novelty_preference": o.result.novelty_preference, "retransmits": o.retransmits})
            );
            session_exit_code(&o.result)
        }
        Err(e) => fail(node_exit(&e), e),
    }
}

fn manage(c: &NodeConfig) -> i32 {
    let models = match c.models() {
        Ok(m) => m,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let store = match Store::open(c.store_root()) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_STARTUP, format!("cannot open store: {e}")),
    };
    let (familiar, novel) = c.pools();
    let plan = match build_plan_with(&familiar, &novel, c.seed(), &c.timing.unwrap_or_default()) {
        Ok(p) => p,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let listen = c.listen.clone().unwrap_or_else(|| format!("0.0.0.0:{DEFAULT_PORT}"));
    let listener = match TcpListener::bind(&listen) {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            return fail(EXIT_STARTUP, format!("address {listen} is already in use"))
        }
        Err(e) => return fail(EXIT_STARTUP, format!("cannot listen on {listen}: {e}")),
    };
    let gateway = if c.no_ui.unwrap_or(false) {
        None
    } else {
        let ui = c.ui_listen.clone().unwrap_or_else(|| "127.0.0.1:8080".into());
        match Gateway::start(&ui, c.ui_dir.clone()) {
            Ok(g) => {
                eprintln!("vpc: UI gateway on http://{}/ (socket at /ws)", g.local_addr());
                Some(g)
            }
            Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
                return fail(EXIT_STARTUP, format!("UI address {ui} is already in use"))
            }
            Err(e) => return fail(EXIT_STARTUP, format!("cannot start UI gateway on {ui}: {e}")),
        }
    };
    eprintln!("vpc: waiting for the measurement node on {listen}");
    let stream = match listener.accept().and_then(|(s, _)| Endpoint::tcp(s)) {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONNECTION, e),
    };
    let started = now_ms();
    let opts = ManageOptions {
        session_id: c.session.clone().unwrap_or_else(|| format!("s{started}")),
        patient_id: c.patient.clone().unwrap_or_else(|| "anonymous".into()),
        plan,
        calib: CalibStartPayload { params: c.train.unwrap_or_default(), pattern: CalibPattern::three_sweeps() },
        started_at_ms: started,
        abort_after_stims: None,
    };
    let mut conn = Connection::new(Role::Management, stream, Clock::new());
    let outcome = run_management(&mut conn, &models, Some(&store), gateway.as_ref(), &opts);
    conn.close();
    match outcome {
        Ok(o) => {
            let env = o.envelope.as_ref().expect("store given");
            println!(
                "{}",
                json!({
                    "patient_id": env.patient_id,
                    "session_id": env.session_id,
                    "status": env.status,
                    "novelty_preference": o.result.novelty_preference,
                    "healthy_reference": o.result.healthy_reference,
                    "stim_shows": o.stim_shows.len(),
                    "ticks": o.ticks,
                })
            );
            session_exit_code(&o.result)
        }
        Err(e) => fail(node_exit(&e), e),
    }
}

/// Camera frames tried per click point.
pub const CLICK_FRAMES: usize = 3;

/// Calibration on the scene's first pattern span and the click-point
/// assessment. Click frames are rendered from the same scene, so the
/// assessment needs a synthetic scene.
pub fn calibrate_scene(
    input: &FrameInput,
    models: &Models,
    params: &TrainParams,
    points: usize,
    seed: u64,
) -> Result<(GazeNet, Option<AccuracyReport>), NodeError> {
    let pattern = CalibPattern::three_sweeps();
    let (_, end) = pattern.span();
    let tracker = models.tracker();
    let mut err = None;
    let frames = input.frames()?.map_while(|f| match f {
        Ok(f) => Some(f),
        Err(e) => {
            err = Some(e);
            None
        }
    });
    let calib = collect_calibration(frames.take_while(|f| f.timestamp_ms <= end), &pattern, &tracker);
    if let Some(e) = err {
        return Err(e.into());
    }
    let net = calib?.train(params)?;
    let FrameInput::Synthetic(src) = input else { return Ok((net, None)) };
    let clicks = generate_click_points(points, seed)?;
    let mut predictions = Vec::with_capacity(clicks.len());
    for (i, &(x, _)) in clicks.iter().enumerate() {
        let mut spec = src.spec.clone();
        spec.gaze_track = vec![(0, x)];
        // The click is read from the first of the following camera frames
        // that shows the eye; if none does it counts as a boundary guess.
        let mut p = 0.5;
        for k in 0..CLICK_FRAMES {
            spec.seed = src.spec.seed.wrapping_add(1 + (i * CLICK_FRAMES + k) as u64);
            let frame = render_frame(&spec, (i * CLICK_FRAMES + k) as u64, 0);
            if let Ok(eye) = tracker.observe(&frame).designated_eye() {
                p = net.predict_patch(&extract_patch(&frame, eye)?)?;
                break;
            }
        }
        predictions.push(p);
    }
    Ok((net, Some(assess_accuracy(&clicks, &predictions)?)))
}

#[derive(serde::Serialize)]
struct AccuracyRow {
    point: usize,
    true_x: f64,
    predicted_x: f64,
    abs_error: f64,
}

/// Per-point table of an accuracy report.
pub fn accuracy_csv(report: &AccuracyReport) -> Vec<u8> {
    write_csv(report.per_point.iter().enumerate().map(|(point, &(true_x, predicted_x))| AccuracyRow {
        point,
        true_x,
        predicted_x,
        abs_error: (predicted_x - true_x).abs(),
    }))
}

fn calibrate(c: &NodeConfig) -> i32 {
    let models = match c.models() {
        Ok(m) => m,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let Some(frames_path) = &c.frames else { return fail(EXIT_STARTUP, "calibrate needs --frames") };
    let input = match FrameInput::load(frames_path) {
        Ok(i) => i,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let points = c.points.unwrap_or(100);
    if points == 0 || points % 2 != 0 {
        return fail(EXIT_STARTUP, "--points must be a positive even number");
    }
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (net, report) = match calibrate_scene(&input, &models, &c.train.unwrap_or_default(), points, c.seed()) {
        Ok(r) => r,
        Err(NodeError::Gaze(e @ GazeError::InsufficientSamples { .. })) => return fail(EXIT_SESSION, e),
        Err(e) => return fail(node_exit(&e), e),
    };
    let written = fs::create_dir_all(&out)
        .and_then(|_| fs::write(out.join("gaze_net.json"), serde_json::to_vec(&net).expect("net serializes")))
        .and_then(|_| match &report {
            Some(r) => {
                fs::write(out.join("accuracy.json"), serde_json::to_vec_pretty(r).expect("report serializes"))?;
                fs::write(out.join("accuracy.csv"), accuracy_csv(r))
            }
            None => Ok(()),
        });
    if let Err(e) = written {
        return fail(EXIT_STARTUP, format!("cannot write to {}: {e}", out.display()));
    }
    match report {
        Some(r) => println!(
            "{}",
            json!({
                "n_points": r.n_points,
                "mean_abs_error_pct": r.mean_abs_error_pct,
                "lr_discrimination_pct": r.lr_discrimination_pct,
                "reported": REPORTED_OPERATING_POINT,
            })
        ),
        None => eprintln!("vpc: recorded frames carry no click ground truth; network written without an accuracy report"),
    }
    EXIT_OK
}

fn process_batch(c: &NodeConfig, archive: &Path, plan: Option<&Path>) -> i32 {
    let models = match c.models() {
        Ok(m) => m,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let Some(net_path) = &c.gaze_net else { return fail(EXIT_STARTUP, "process-batch needs --gaze-net") };
    let net = match load_net(net_path) {
        Ok(n) => n,
        Err(e) => return fail(EXIT_STARTUP, e),
    };
    let plan: Option<SessionPlan> = match plan {
        Some(p) => {
            let parsed = fs::read_to_string(p).map_err(|e| e.to_string()).and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()));
            match parsed {
                Ok(plan) => Some(plan),
                Err(e) => return fail(EXIT_STARTUP, format!("{}: {e}", p.display())),
            }
        }
        None => None,
    };
    let bytes = match fs::read(archive) {
        Ok(b) => b,
        Err(e) => return fail(EXIT_STARTUP, format!("{}: {e}", archive.display())),
    };
    let (fps, end) = match Archive::parse(&bytes) {
        Ok(a) => (a.manifest().fps, ReplayEnd::from_meta(a.session().as_ref())),
        Err(e) => return fail(EXIT_SESSION, format!("{}: {e}", archive.display())),
    };
    let outputs = match process_archive(&bytes, &models, &net) {
        Ok(o) => o,
        Err(e) => return fail(EXIT_SESSION, e),
    };
    let out = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut files = vec![
        ("gaze.csv", write_csv(outputs.iter().map(GazeRow::from))),
        ("ppg.csv", write_csv(outputs.iter().map(PpgRow::from))),
    ];
    let mut summary = json!({"frames": outputs.len()});
    if let Some(plan) = plan {
        let config = EngineConfig { fps, pause_on_alarm: false, ..EngineConfig::default() };
        match score_outputs(&plan, &outputs, config, end) {
            Ok(r) => {
                summary["status"] = json!(r.status);
                summary["novelty_preference"] = json!(r.novelty_preference);
                files.push(("result.json", serde_json::to_vec_pretty(&r).expect("result serializes")));
            }
            Err(e) => return fail(EXIT_SESSION, e),
        }
    }
    let written = fs::create_dir_all(&out).and_then(|_| files.iter().try_for_each(|(name, b)| fs::write(out.join(name), b)));
    if let Err(e) = written {
        return fail(EXIT_STARTUP, format!("cannot write to {}: {e}", out.display()));
    }
    println!("{summary}");
    EXIT_OK
}
