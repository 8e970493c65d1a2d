use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

use serde_json::{json, Value};
use vpc::archive::ArchiveWriter;
use vpc::cli::{EXIT_CONNECTION, EXIT_OK, EXIT_SESSION, EXIT_STARTUP};
use vpc::frames::write_png;
use vpc::store::{EnvelopeStatus, Store};
use vpc_core::frame::{Frame, FrameEntry, StreamManifest};
use vpc_core::gaze::GazeNet;
use vpc_core::session::SessionStatus;
use vpc_core::synth::{render_frame, SyntheticSceneSpec};

fn vpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vpc")).args(args).env_remove("VPC_STORE_ROOT").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Self { dir: tempfile::tempdir().unwrap() };
        fs::write(f.path("net.json"), serde_json::to_vec(&GazeNet::standard(5)).unwrap()).unwrap();
        fs::write(
            f.path("scene.json"),
            json!({
                "gaze_track": [[0, 0.35], [3000, 0.35]],
                "face_box_norm": {"x": 0.3, "y": 0.2, "w": 0.4, "h": 0.6},
                "noise_sigma": 0.008,
                "seed": 3,
            })
            .to_string(),
        )
        .unwrap();
        fs::write(
            f.path("manage.json"),
            json!({"timing": {"familiarization_ms": 50, "pair_ms": 60, "test_total_ms": 1400}, "seed": 11}).to_string(),
        )
        .unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn measurement_and_management_complete_a_session_over_tcp() {
    let f = Fixture::new();
    let port = free_port();
    let listen = format!("127.0.0.1:{port}");
    // Holding the UI address proves --no-ui never tries to bind it.
    let ui = TcpListener::bind("127.0.0.1:0").unwrap();
    let ui_addr = ui.local_addr().unwrap().to_string();
    let store = f.path("store");
    let manage = {
        let args: Vec<String> = [
            "manage", "--config", s(&f.path("manage.json")), "--listen", &listen, "--no-ui", "--ui-listen", &ui_addr,
            "--store", s(&store), "--patient", "p-7", "--session", "visit.1",
        ]
        .iter()
        .map(|a| a.to_string())
        .collect();
        thread::spawn(move || Command::new(env!("CARGO_BIN_EXE_vpc")).args(&args).output().unwrap())
    };
    let measure = vpc(&["measure", "--connect", &listen, "--frames", s(&f.path("scene.json")), "--gaze-net", s(&f.path("net.json"))]);
    let manage = manage.join().unwrap();
    assert_eq!(code(&measure), EXIT_OK, "{}", String::from_utf8_lossy(&measure.stderr));
    assert_eq!(code(&manage), EXIT_OK, "{}", String::from_utf8_lossy(&manage.stderr));

    let summary = stdout_json(&manage);
    assert_eq!(summary["status"], "complete");
    assert_eq!(summary["stim_shows"], 30);
    assert_eq!(stdout_json(&measure)["novelty_preference"], summary["novelty_preference"]);

    let store = Store::open(&store).unwrap();
    let (env, result) = store.get_session("p-7", "visit.1").unwrap();
    assert_eq!(env.status, EnvelopeStatus::Complete);
    assert_eq!(result.status, SessionStatus::Complete);
    assert_eq!(result.pairs.len(), 18);
    assert!(store.integrity_check().unwrap().is_clean());
    drop(ui);
}

#[test]
fn occupied_ui_address_is_a_startup_error() {
    let f = Fixture::new();
    let ui = TcpListener::bind("127.0.0.1:0").unwrap();
    let o = vpc(&[
        "manage", "--listen", &format!("127.0.0.1:{}", free_port()), "--ui-listen", &ui.local_addr().unwrap().to_string(),
        "--store", s(&f.path("store")),
    ]);
    assert_eq!(code(&o), EXIT_STARTUP);
    assert!(String::from_utf8_lossy(&o.stderr).contains("already in use"));
}

#[test]
fn occupied_management_port_is_a_startup_error() {
    let f = Fixture::new();
    let held = TcpListener::bind("127.0.0.1:0").unwrap();
    let o = vpc(&["manage", "--listen", &held.local_addr().unwrap().to_string(), "--no-ui", "--store", s(&f.path("store"))]);
    assert_eq!(code(&o), EXIT_STARTUP);
}

#[test]
fn configuration_errors_exit_with_one() {
    let f = Fixture::new();
    let scene = f.path("scene.json");
    let missing = f.path("nope.xml");
    for args in [
        vec!["measure", "--frames", s(&scene), "--face-cascade", s(&missing)],
        vec!["calibrate", "--frames", s(&scene), "--eye-cascade", s(&missing)],
        vec!["calibrate", "--frames", s(&scene), "--points", "3"],
        vec!["calibrate", "--frames", s(&scene), "--points", "0"],
        vec!["measure"],
        vec!["measure", "--frames", s(&missing)],
        vec!["--no-such-flag"],
        vec![],
    ] {
        assert_eq!(code(&vpc(&args)), EXIT_STARTUP, "{args:?}");
    }
    fs::write(f.path("bad.json"), r#"{"lisen": "x"}"#).unwrap();
    assert_eq!(code(&vpc(&["manage", "--config", s(&f.path("bad.json"))])), EXIT_STARTUP);
    fs::write(f.path("broken.xml"), "<opencv_storage><cascade>").unwrap();
    let o = vpc(&["measure", "--frames", s(&scene), "--face-cascade", s(&f.path("broken.xml"))]);
    assert_eq!(code(&o), EXIT_STARTUP);
}

#[test]
fn unreachable_management_is_a_connection_error() {
    let f = Fixture::new();
    let o = vpc(&[
        "measure", "--connect", &format!("127.0.0.1:{}", free_port()), "--frames", s(&f.path("scene.json")),
        "--gaze-net", s(&f.path("net.json")),
    ]);
    assert_eq!(code(&o), EXIT_CONNECTION);
}

#[test]
fn calibration_without_a_visible_face_has_too_few_samples() {
    let f = Fixture::new();
    let blank = Frame::new(0, 0, 64, 48, vec![128; 64 * 48 * 3]).unwrap();
    let frames: Vec<FrameEntry> = (0..30)
        .map(|i| {
            let name = format!("b{i}.png");
            write_png(&f.path(&name), &blank).unwrap();
            FrameEntry { path: name, t_ms: i * 100 / 3 }
        })
        .collect();
    let m = StreamManifest { fps: 30.0, screen_width_px: 1920, screen_height_px: 1080, frames };
    fs::write(f.path("blank.json"), serde_json::to_vec(&m).unwrap()).unwrap();
    let o = vpc(&["calibrate", "--frames", s(&f.path("blank.json")), "--out", s(&f.path("out"))]);
    assert_eq!(code(&o), EXIT_SESSION, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!f.path("out/gaze_net.json").exists());
}

fn archive(spec: &SyntheticSceneSpec, n: u64) -> Vec<u8> {
    let mut w = ArchiveWriter::new(30.0, (1920, 1080));
    for i in 0..n {
        w.push(&render_frame(spec, i, i * 100 / 3));
    }
    w.finish()
}

#[test]
fn process_batch_writes_per_frame_tables() {
    let f = Fixture::new();
    let mut spec = SyntheticSceneSpec::centered(0.5);
    spec.pulse_hz = Some(1.1);
    fs::write(f.path("a.vpcarc"), archive(&spec, 12)).unwrap();
    let o = vpc(&["process-batch", "--archive", s(&f.path("a.vpcarc")), "--gaze-net", s(&f.path("net.json")), "--out", s(&f.path("out"))]);
    assert_eq!(code(&o), EXIT_OK, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["frames"], 12);
    let gaze = fs::read_to_string(f.path("out/gaze.csv")).unwrap();
    assert_eq!(gaze.lines().count(), 13);
    assert!(f.path("out/ppg.csv").exists());
}

#[test]
fn damaged_archives_are_data_errors() {
    let f = Fixture::new();
    let net = f.path("net.json");
    let mut bytes = archive(&SyntheticSceneSpec::centered(0.5), 3);
    let mid = bytes.len() / 2;
    bytes[mid] ^= 1;
    fs::write(f.path("corrupt.vpcarc"), &bytes).unwrap();
    fs::write(f.path("empty.vpcarc"), b"").unwrap();
    for name in ["corrupt.vpcarc", "empty.vpcarc"] {
        let o = vpc(&["process-batch", "--archive", s(&f.path(name)), "--gaze-net", s(&net), "--out", s(&f.path("out"))]);
        assert_eq!(code(&o), EXIT_SESSION, "{name}");
    }
    let o = vpc(&["process-batch", "--archive", s(&f.path("absent.vpcarc")), "--gaze-net", s(&net)]);
    assert_eq!(code(&o), EXIT_STARTUP);
}
