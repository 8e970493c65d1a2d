#![allow(dead_code)]

use std::thread;

use vpc::nodes::{
    run_management, run_measurement, CalibStartPayload, ManageOptions, ManageOutcome, MeasureOptions, MeasureOutcome,
    Models, NodeError,
};
use vpc::store::Store;
use vpc::transport::{loopback, Clock, Connection};
use vpc_core::gaze::GazeNet;
use vpc_core::session::{build_plan_with, ImageRef, ImageRole, PlanTiming, SessionPlan};
use vpc_core::synth::{render_synthetic, SyntheticSceneSpec};
use vpc_core::wire::Role;

pub fn pools() -> (Vec<ImageRef>, Vec<ImageRef>) {
    (
        (0..12).map(|i| ImageRef::new(format!("f{i:02}"), format!("f{i:02}.png"), ImageRole::Familiar)).collect(),
        (0..24).map(|i| ImageRef::new(format!("n{i:02}"), format!("n{i:02}.png"), ImageRole::Novel)).collect(),
    )
}

/// Test-phase-only plan with `n` pairs of `pair_ms` and no blanks.
pub fn pairs_only_plan(n: usize, pair_ms: u64, seed: u64) -> SessionPlan {
    let (f, nv) = pools();
    let timing = PlanTiming { familiarization_ms: 100, pair_ms, test_total_ms: 18 * pair_ms };
    let mut plan = build_plan_with(&f, &nv, seed, &timing).unwrap();
    plan.familiarization.clear();
    plan.test_pairs.truncate(n);
    plan
}

pub fn scene(duration_ms: u64, gaze: f64) -> Vec<(u64, f64)> {
    vec![(0, gaze), (duration_ms, gaze)]
}

pub fn spec(gaze: f64, pulse_hz: Option<f64>, seed: u64) -> SyntheticSceneSpec {
    let mut s = SyntheticSceneSpec::centered(gaze);
    s.pulse_hz = pulse_hz;
    s.noise_sigma = 2.0 / 255.0;
    s.seed = seed;
    s
}

pub struct Run {
    pub manage: Result<ManageOutcome, NodeError>,
    pub measure: Result<MeasureOutcome, NodeError>,
}

/// Runs both nodes over the in-memory transport.
pub fn run_pair(
    spec: &SyntheticSceneSpec,
    duration_ms: u64,
    net: GazeNet,
    opts: MeasureOptions,
    manage: ManageOptions,
    store: Option<&Store>,
) -> Run {
    let (a, b) = loopback();
    let clock = Clock::new();
    let spec = spec.clone();
    let measure = thread::spawn(move || {
        let models = Models::builtin();
        let frames = render_synthetic(&spec, opts.fps, duration_ms).unwrap().map(Ok);
        let mut conn = Connection::new(Role::Measurement, a, clock);
        let r = run_measurement(&mut conn, Box::new(frames), &models, Some(net), &opts);
        conn.close();
        r
    });
    let models = Models::builtin();
    let mut conn = Connection::new(Role::Management, b, clock);
    let manage = run_management(&mut conn, &models, store, None, &manage);
    conn.close();
    Run { manage, measure: measure.join().unwrap() }
}

pub fn manage_opts(plan: SessionPlan) -> ManageOptions {
    ManageOptions {
        session_id: "s1".into(),
        patient_id: "p1".into(),
        plan,
        calib: CalibStartPayload::default(),
        started_at_ms: 1_000,
        abort_after_stims: None,
    }
}
