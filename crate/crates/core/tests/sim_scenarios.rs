use std::sync::OnceLock;

use acousto_core::coordinator::CoordinatorEvent;
use acousto_core::probe::DEFAULT_EMBED_DIM;
use acousto_core::sim::{
    bundled_scenario, default_sim_config, run_scenario, train_reference_probe, trajectory_csv,
    ConfidenceMode, DelaySpec, EntityKind, GestureInput, Scenario, SimResult, World,
};
use acousto_core::telemetry::{decompose, latency_csv, switching_accuracy, trials_csv};
use acousto_core::{Embedding, GestureClass, LinearProbe, Modality};

fn probe() -> &'static LinearProbe {
    static PROBE: OnceLock<LinearProbe> = OnceLock::new();
    PROBE.get_or_init(|| train_reference_probe(DEFAULT_EMBED_DIM, 0).unwrap())
}

fn bundled(name: &str) -> Scenario {
    Scenario::from_toml_str(bundled_scenario(name).unwrap()).unwrap()
}

fn run(s: &Scenario) -> SimResult {
    run_scenario(s, &default_sim_config(), probe()).unwrap()
}

fn clean(mut s: Scenario) -> Scenario {
    for b in &mut s.gesture_block {
        b.mode = ConfidenceMode::Clean;
    }
    s
}

#[test]
fn zero_delay_stages_collapse_to_inference() {
    let mut s = clean(bundled("table1"));
    s.delays.inference = DelaySpec::fixed(0.2);
    let r = run(&s);
    assert_eq!(r.latency.len(), 90);
    for rec in &r.latency {
        let b = decompose(rec).unwrap();
        assert_eq!(b.stage_a_s, 0.0);
        assert_eq!(b.stage_c_s, 0.0);
        assert_eq!(b.total_s, b.stage_b_s);
        assert_eq!(b.stage_b_s, 0.2);
    }
}

#[test]
fn clean_trials_switch_reliably() {
    let r = run(&clean(bundled("table1")));
    let table = switching_accuracy(&r.trials);
    assert_eq!(table.overall.trials, 90);
    for c in GestureClass::ALL {
        assert_eq!(table.row(c).trials, 30);
    }
    assert!(
        table.overall.fraction().unwrap() >= 0.95,
        "{}",
        table.render_text()
    );
}

#[test]
fn runs_are_bitwise_reproducible() {
    let s = bundled("table1");
    let (a, b) = (run(&s), run(&s));
    assert_eq!(latency_csv(&a.latency), latency_csv(&b.latency));
    assert_eq!(trials_csv(&a.trials), trials_csv(&b.trials));
    assert_eq!(trajectory_csv(&a.trajectory), trajectory_csv(&b.trajectory));
    let mut other = s.clone();
    other.seed += 1;
    assert_ne!(trials_csv(&run(&other).trials), trials_csv(&a.trials));
}

#[test]
fn chunk_loss_never_stalls_the_pipeline() {
    let mut s = clean(bundled("table1"));
    s.chunk_drop_prob = 0.3;
    let r = run(&s);
    assert_eq!(r.trials.len(), 90);
    assert!(r.dropped_chunks > 0);
    let observed = r.trials.iter().filter(|t| t.observed.is_some()).count();
    assert!(observed > 45, "only {observed} trials observed");

    s.chunk_drop_prob = 1.0;
    let r = run(&s);
    assert_eq!(r.trials.len(), 90);
    assert!(r.trials.iter().all(|t| t.observed.is_none() && !t.correct));
    assert!(r.latency.is_empty());
}

#[test]
fn crossing_robots_keep_their_distance() {
    let cfg = default_sim_config();
    let r = run(&bundled("crossing"));
    let min = r.min_separation.unwrap();
    assert!(min >= cfg.follow.safe_radius - 0.05, "min separation {min}");
    let end = r.trajectory.last().unwrap().t_us;
    for row in r
        .trajectory
        .iter()
        .filter(|row| row.t_us == end && row.kind == EntityKind::Robot)
    {
        let d = row.user_distance.unwrap();
        assert!(
            (d - cfg.follow.target_distance).abs() <= cfg.follow.dead_band,
            "robot {} at {d}",
            row.id
        );
    }
}

#[test]
fn robot_speed_stays_within_limit() {
    let cfg = default_sim_config();
    for name in ["crossing", "follow", "dropout"] {
        let r = run(&bundled(name));
        for row in r.trajectory.iter().filter(|r| r.kind == EntityKind::Robot) {
            assert!(
                row.v_linear.abs() <= cfg.follow.v_max + 1e-9,
                "{name}: {row:?}"
            );
        }
    }
}

#[test]
fn follow_converges_and_settles() {
    let cfg = default_sim_config();
    let r = run(&bundled("follow"));
    let rows: Vec<_> = r
        .trajectory
        .iter()
        .filter(|row| row.kind == EntityKind::Robot && row.id == 1)
        .collect();
    assert!((rows[0].user_distance.unwrap() - 3.0).abs() < 1e-9);
    let inside = |d: f64| (d - cfg.follow.target_distance).abs() <= cfg.follow.dead_band;
    let settled = rows
        .iter()
        .position(|row| {
            rows[rows.iter().position(|x| x.t_us == row.t_us).unwrap()..]
                .iter()
                .all(|x| inside(x.user_distance.unwrap()))
        })
        .map(|i| rows[i].t_us)
        .unwrap();
    assert!(settled <= 15_000_000, "settled at {settled} us");
}

#[test]
fn pose_dropout_stops_only_the_lost_robot() {
    let r = run(&bundled("dropout"));
    assert_eq!(r.safe_stops.len(), 1);
    let (robot, at) = r.safe_stops[0];
    assert_eq!(robot, 2);
    assert!(
        at >= 5_000_000 && at - 5_000_000 <= 300_000,
        "safe stop at {at}"
    );
    let moving_1 = r
        .trajectory
        .iter()
        .filter(|row| row.kind == EntityKind::Robot && row.id == 1)
        .filter(|row| row.t_us > 5_500_000 && row.t_us < 8_000_000)
        .all(|row| row.v_linear > 0.0);
    assert!(moving_1);
}

fn interactive() -> World {
    let mut w = World::new(
        bundled("interactive"),
        default_sim_config(),
        probe().clone(),
    )
    .unwrap();
    w.collect_events(true);
    w.run_until(500_000).unwrap();
    w.drain_events();
    w
}

fn transitions(events: &[CoordinatorEvent]) -> Vec<(u16, Modality)> {
    events
        .iter()
        .filter_map(|e| match e {
            CoordinatorEvent::Command {
                robot_id, payload, ..
            } => Some((*robot_id, *payload)),
            _ => None,
        })
        .collect()
}

#[test]
fn injected_palm_switches_paired_robot() {
    let mut w = interactive();
    w.inject(2, GestureInput::Class(GestureClass::Palm))
        .unwrap();
    w.run_until(w.now_us() + 1_000_000).unwrap();
    assert_eq!(transitions(&w.drain_events()), vec![(2, Modality::Haptics)]);
    let robot = w.robots().find(|r| r.robot_id == 2).unwrap();
    assert_eq!(robot.modality, Modality::Haptics);
    assert!(w
        .inject(9, GestureInput::Class(GestureClass::Palm))
        .is_err());
}

#[test]
fn far_embedding_is_rejected_without_switching() {
    let mut w = interactive();
    // Equidistant from every class mean, so only the biases separate classes.
    let e = Embedding::new(vec![0.0; DEFAULT_EMBED_DIM], DEFAULT_EMBED_DIM).unwrap();
    w.inject(1, GestureInput::Embedding(e)).unwrap();
    w.run_until(w.now_us() + 1_000_000).unwrap();
    let events = w.drain_events();
    assert!(transitions(&events).is_empty());
    let confidences: Vec<f64> = events
        .iter()
        .filter_map(|e| match e {
            CoordinatorEvent::Classification { confidence, .. } => Some(*confidence),
            _ => None,
        })
        .collect();
    assert_eq!(confidences.len(), 3);
    assert!(confidences.iter().all(|&c| c < 0.6), "{confidences:?}");
}

#[test]
fn conflicting_rapid_injections_switch_at_most_once() {
    let mut w = interactive();
    w.inject(1, GestureInput::Class(GestureClass::Palm))
        .unwrap();
    w.inject(1, GestureInput::Class(GestureClass::Fist))
        .unwrap();
    w.run_until(w.now_us() + 1_500_000).unwrap();
    assert!(transitions(&w.drain_events()).len() <= 1);
}
