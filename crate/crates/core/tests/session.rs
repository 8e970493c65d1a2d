use proptest::prelude::*;
use vpc_core::frame::nominal_timestamp_ms;
use vpc_core::gaze::{GazeSample, InvalidReason};
use vpc_core::pipeline::FrameOutput;
use vpc_core::session::{
    build_plan, observer_guard, run_session, EngineConfig, ImageRef, ImageRole, ItemKind, ObserverState, PairKind,
    SessionEngine, SessionError, SessionPlan, SessionStatus, ALARM_AFTER_INVALID, RECOVER_AFTER_VALID,
};

const FPS: f64 = 30.0;

fn pools() -> (Vec<ImageRef>, Vec<ImageRef>) {
    let fam = (1..=12).map(|i| ImageRef::new(format!("familiar-{i:02}"), format!("images/familiar-{i:02}.png"), ImageRole::Familiar)).collect();
    let nov = (1..=24).map(|i| ImageRef::new(format!("novel-{i:02}"), format!("images/novel-{i:02}.png"), ImageRole::Novel)).collect();
    (fam, nov)
}

fn plan(seed: u64) -> SessionPlan {
    let (f, n) = pools();
    build_plan(&f, &n, seed).unwrap()
}

fn output(k: u64, x: Option<f64>) -> FrameOutput {
    let t = nominal_timestamp_ms(k, FPS);
    let sample = match x {
        Some(x) => GazeSample::valid(k, t, x),
        None => GazeSample::invalid(k, t, InvalidReason::NoFace),
    };
    FrameOutput { sample, bpm: None, ppg_rgb: None, face: None, pulse: None }
}

/// Gaze that looks at the novel image for the first `novel_share` of every
/// pair and at the familiar one for the rest; centred elsewhere.
fn scripted_gaze(plan: &SessionPlan, novel_share: f64, t_ms: u64) -> f64 {
    let Some(item) = plan.schedule().into_iter().find(|i| i.start_ms <= t_ms && t_ms < i.end_ms) else {
        return 0.5;
    };
    if item.kind != ItemKind::Pair {
        return 0.5;
    }
    let frac = (t_ms - item.start_ms) as f64 / (item.end_ms - item.start_ms) as f64;
    let (novel, known) = match plan.test_pairs[item.index].kind {
        PairKind::KnownRight => (0.2, 0.8),
        PairKind::KnownLeft => (0.8, 0.2),
        PairKind::BothNew => (0.2, 0.8),
    };
    if frac < novel_share {
        novel
    } else {
        known
    }
}

#[test]
fn protocol_timing() {
    let p = plan(42);
    assert_eq!(p.familiarization.len(), 12);
    assert!(p.familiarization.iter().all(|e| e.duration_ms == 15_000));
    assert_eq!(p.familiarization_ms(), 180_000);
    assert_eq!(p.test_pairs.len(), 18);
    assert_eq!(p.test_ms(), 240_000);
    assert_eq!(p.kind_counts(), (6, 6, 6));
    let right = p.test_pairs.iter().filter(|q| q.right_image.role == ImageRole::Familiar).count();
    let left = p.test_pairs.iter().filter(|q| q.left_image.role == ImageRole::Familiar).count();
    assert_eq!((left, right), (6, 6));
    p.validate_protocol().unwrap();
}

#[test]
fn scripted_seventy_thirty_split() {
    let p = plan(3);
    let total = p.total_ms();
    let frames = (0..)
        .map(|k| (k, nominal_timestamp_ms(k, FPS)))
        .take_while(|&(_, t)| t <= total + 100)
        .map(|(k, t)| output(k, Some(scripted_gaze(&p, 0.7, t))));
    let result = run_session(p.clone(), frames, EngineConfig::default()).unwrap();
    assert_eq!(result.status, SessionStatus::Complete);
    let pref = result.novelty_preference.unwrap();
    assert!((pref - 0.70).abs() <= 0.02, "novelty preference {pref}");
    assert_eq!(result.pairs.len(), 18);
    for pair in result.pairs.iter().filter(|r| r.kind != PairKind::BothNew) {
        let f = pair.novelty_fraction.unwrap();
        assert!((f - 0.7).abs() <= 0.02, "{}: {f}", pair.pair_id);
    }
    assert_eq!(result.healthy_reference, 0.70);
}

#[test]
fn hold_stretches_the_display_but_not_the_item() {
    let p = plan(5);
    let pair_start = p.schedule().into_iter().find(|i| i.kind == ItemKind::Pair).unwrap();
    let mut engine = SessionEngine::new(p.clone(), EngineConfig::default()).unwrap();
    let mut k = 0u64;
    // Invalid frames for two seconds in the middle of the first pair.
    let hole = (pair_start.start_ms + 4000, pair_start.start_ms + 6000);
    while !engine.is_ended() {
        let t = nominal_timestamp_ms(k, FPS);
        let x = if t >= hole.0 && t < hole.1 { None } else { Some(0.3) };
        engine.push(&output(k, x));
        k += 1;
        assert!(k < 20_000, "session never ended");
    }
    let result = engine.result();
    assert_eq!(result.status, SessionStatus::Complete);
    assert_eq!(result.alarms.len(), 1);
    let ended = result.ended_ms.unwrap();
    assert!(ended > p.total_ms() + 1000, "held session ended at {ended}");
    for (item, segs) in engine.schedule().iter().zip(engine.display_segments()) {
        let shown: u64 = segs.iter().map(|s| s.1 - s.0).sum();
        assert_eq!(shown, item.end_ms - item.start_ms, "{item:?}");
    }
}

#[test]
fn stream_ending_early_is_reported() {
    let p = plan(1);
    let frames = (0..300).map(|k| output(k, Some(0.4)));
    assert!(matches!(run_session(p, frames, EngineConfig::default()), Err(SessionError::StreamEnded { .. })));
}

#[test]
fn abort_keeps_partial_scores() {
    let p = plan(2);
    let mut engine = SessionEngine::new(p.clone(), EngineConfig::default()).unwrap();
    let stop = p.familiarization_ms() + 60_000;
    for k in 0.. {
        let t = nominal_timestamp_ms(k, FPS);
        if t > stop {
            break;
        }
        engine.push(&output(k, Some(scripted_gaze(&p, 0.7, t))));
    }
    engine.abort(stop);
    let r = engine.result();
    assert_eq!(r.status, SessionStatus::Aborted);
    assert!(!r.pairs.is_empty() && r.pairs.len() < 18);
    assert_eq!(r.ended_ms, Some(stop));
}

proptest! {
    #[test]
    fn every_seed_gives_a_valid_protocol(seed in any::<u64>()) {
        let p = plan(seed);
        p.validate_protocol().unwrap();
        prop_assert_eq!(p.total_ms(), 420_000);
        let sched = p.schedule();
        prop_assert_eq!(sched[0].start_ms, 0);
        prop_assert!(sched.windows(2).all(|w| w[0].end_ms == w[1].start_ms));
        prop_assert_eq!(sched.last().unwrap().end_ms, 420_000);
        let blanks: Vec<u64> = p.test_pairs.iter().map(|q| q.lead_blank_ms).collect();
        prop_assert!(blanks.iter().all(|&b| b == 333 || b == 334));

        let mut pairs = p.test_pairs.clone();
        pairs.sort_by(|a, b| a.id.cmp(&b.id));
        let mut reference = plan(0).test_pairs;
        reference.sort_by(|a, b| a.id.cmp(&b.id));
        for (a, b) in pairs.iter().zip(&reference) {
            prop_assert_eq!((&a.left_image, &a.right_image, a.kind), (&b.left_image, &b.right_image, b.kind));
        }
    }

    #[test]
    fn plan_hash_survives_json(seed in any::<u64>()) {
        let p = plan(seed);
        let back: SessionPlan = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back.hash(), p.hash());
        prop_assert_eq!(p.hash(), plan(seed).hash());
    }

    #[test]
    fn guard_transitions_obey_the_hysteresis(pattern in proptest::collection::vec(any::<bool>(), 0..400)) {
        let samples: Vec<GazeSample> = pattern
            .iter()
            .enumerate()
            .map(|(k, &v)| if v { GazeSample::valid(k as u64, k as u64 * 33, 0.5) } else { GazeSample::invalid(k as u64, k as u64 * 33, InvalidReason::EyesNotFound) })
            .collect();
        let changes = observer_guard(&samples);
        let mut expect = ObserverState::Ok;
        for c in &changes {
            prop_assert_ne!(c.state, expect);
            expect = c.state;
            let k = (c.since_ms / 33) as usize;
            let (need, valid) = match c.state {
                ObserverState::AlarmStandby => (ALARM_AFTER_INVALID, false),
                ObserverState::Ok => (RECOVER_AFTER_VALID, true),
            };
            let run = pattern[..=k].iter().rev().take_while(|&&v| v == valid).count();
            prop_assert!(run >= need as usize);
            prop_assert_eq!(c.reason.is_some(), c.state == ObserverState::AlarmStandby);
        }
        let longest_invalid = pattern.split(|&v| v).map(<[bool]>::len).max().unwrap_or(0);
        if longest_invalid < ALARM_AFTER_INVALID as usize {
            prop_assert!(changes.is_empty());
        }
    }

    #[test]
    fn short_dropouts_never_alarm(gaps in proptest::collection::vec(1usize..10, 1..20)) {
        let mut pattern = Vec::new();
        for g in gaps {
            pattern.extend(std::iter::repeat_n(true, 3));
            pattern.extend(std::iter::repeat_n(false, g));
        }
        let samples: Vec<GazeSample> = pattern
            .iter()
            .enumerate()
            .map(|(k, &v)| if v { GazeSample::valid(k as u64, k as u64 * 33, 0.5) } else { GazeSample::invalid(k as u64, k as u64 * 33, InvalidReason::NoFace) })
            .collect();
        prop_assert!(observer_guard(&samples).is_empty());
    }
}
