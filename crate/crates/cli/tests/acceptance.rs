//! Acceptance suite. Each criterion prints one PASS/FAIL line with its
//! runtime and bound; the test fails if any criterion fails.
//!
//! Lines are written straight to stderr so they appear even when the test
//! harness captures output.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use acousto_core::coordinator::{map_gesture_to_modality, Gate, GateDecision};
use acousto_core::embeddings::{generate_synthetic_dataset, SyntheticDatasetSpec};
use acousto_core::probe::{
    adamw_step, train, AdamW, AdamWState, Embedding, GestureClass, LabeledDataset, LinearProbe,
    TrainConfig,
};
use acousto_core::sim::default_sim_config;
use acousto_core::telemetry::{aggregate, decompose, LatencyRecord};
use acousto_core::wire::{
    chunk_frame, AckMessage, CommandBody, CommandMessage, Datagram, FrameMessage, PoseMessage,
    Reassembler, ReassemblyConfig, MAX_CHUNK_PAYLOAD,
};
use acousto_core::Modality;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, u64, Box<dyn FnOnce() -> Check + 'a>);

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_acousto"))
}

fn acousto(args: &[&str]) -> Result<String, String> {
    let out = bin()
        .args(args)
        .output()
        .map_err(|e| format!("spawn failed: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "`acousto {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn last_val_accuracy(history: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(history).map_err(|e| e.to_string())?;
    let last = text.lines().last().ok_or("empty history")?;
    last.split(',')
        .nth(3)
        .ok_or("short row")?
        .parse()
        .map_err(|e| format!("{e}"))
}

// 1 ---------------------------------------------------------------------

fn initial_loss() -> Check {
    let ln3 = 3f64.ln();
    let mut datasets = Vec::new();
    for (n, dim, noise, seed) in [
        (15, 512, 0.9, 0),
        (790, 512, 0.35, 1),
        (30, 8, 5.0, 2),
        (9, 3, 0.0, 3),
    ] {
        datasets.push(
            generate_synthetic_dataset(&SyntheticDatasetSpec::orthogonal(n, dim, noise, seed))
                .map_err(|e| e.to_string())?,
        );
    }
    // Arbitrary embeddings with large, uncentred values.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let samples = (0..40)
        .map(|i| {
            let v: Vec<f64> = (0..16).map(|_| rng.random_range(-50.0..50.0)).collect();
            (Embedding::new(v, 16).unwrap(), GestureClass::ALL[i % 3])
        })
        .collect();
    datasets.push(LabeledDataset::new(samples, "uniform").map_err(|e| e.to_string())?);

    let mut worst: f64 = 0.0;
    for ds in &datasets {
        let cfg = TrainConfig {
            embed_dim: ds.dim(),
            epochs: 1,
            ..TrainConfig::default()
        };
        let (_, history) = train(ds, &cfg).map_err(|e| e.to_string())?;
        let l0 = history.records[0].train_loss;
        worst = worst.max((l0 - ln3).abs());
        ensure((l0 - ln3).abs() <= 0.02, || {
            format!("epoch-0 loss {l0} on {} samples", ds.len())
        })?;
    }
    Ok(format!(
        "{} datasets, max |loss0 - ln 3| = {worst:.2e}",
        datasets.len()
    ))
}

// 2 ---------------------------------------------------------------------

const SCALING_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// gen-data + train for both sizes and all seeds, writing into `dir`.
fn scaling_runs(dir: &Path) -> Result<BTreeMap<usize, Vec<f64>>, String> {
    let mut acc = BTreeMap::new();
    for (n, noise) in [(15usize, "0.9"), (790, "0.35")] {
        for seed in SCALING_SEEDS {
            let run = dir.join(format!("n{n}_s{seed}"));
            let data = run.join("data.csv");
            let s = seed.to_string();
            let ns = n.to_string();
            acousto(&[
                "gen-data",
                "--n",
                &ns,
                "--noise-std",
                noise,
                "--seed",
                &s,
                "--out",
                p(&data),
            ])?;
            acousto(&[
                "train",
                "--data",
                p(&data),
                "--seed",
                &s,
                "--out",
                p(&run.join("probe.acpb")),
            ])?;
            acc.entry(n)
                .or_insert_with(Vec::new)
                .push(last_val_accuracy(&run.join("history.csv"))?);
        }
    }
    Ok(acc)
}

fn scaling(dir: &Path) -> Check {
    let acc = scaling_runs(dir)?;
    let mean = |n: usize| acc[&n].iter().sum::<f64>() / acc[&n].len() as f64;
    let (small, large) = (mean(15), mean(790));
    let detail = format!("mean val accuracy n=15 {small:.3}, n=790 {large:.3}");
    ensure(large >= 0.95, || format!("{detail}: n=790 below 0.95"))?;
    ensure(small <= large - 0.10, || {
        format!("{detail}: gap below 10 pp")
    })?;
    Ok(detail)
}

// 3 ---------------------------------------------------------------------

fn optimizer_oracle() -> Check {
    // First step: m_hat = g, v_hat = g^2, so
    // p1 = p0 - lr * wd * p0 - lr * g / (|g| + eps).
    let fixtures = [
        (0.5, 0.2, AdamW::default()),
        (-1.25, -3.0, AdamW::default()),
        (
            2.0,
            1e-6,
            AdamW {
                learning_rate: 0.1,
                weight_decay: 0.0,
                ..AdamW::default()
            },
        ),
        (
            0.0,
            4.0,
            AdamW {
                learning_rate: 0.01,
                weight_decay: 0.5,
                beta1: 0.5,
                beta2: 0.9,
                eps: 1e-3,
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    for (p0, g, opt) in fixtures {
        let mut params = [p0];
        let mut state = AdamWState::new(1);
        adamw_step(&mut params, &[g], &mut state, &opt).map_err(|e| e.to_string())?;
        let expected = p0
            - opt.learning_rate * opt.weight_decay * p0
            - opt.learning_rate * g / (g.abs() + opt.eps);
        worst = worst.max((params[0] - expected).abs());
        ensure((params[0] - expected).abs() <= 1e-12, || {
            format!("p0 {p0} g {g}: {} vs {expected}", params[0])
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for inst in 0..100 {
        let dim = rng.random_range(2..7);
        let batch_len = rng.random_range(1..5);
        let params: Vec<f64> = (0..3 * dim + 3)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let probe = LinearProbe::from_parts(
            dim,
            GestureClass::default_names(),
            params[..3 * dim].to_vec(),
            params[3 * dim..].to_vec(),
        )
        .map_err(|e| e.to_string())?;
        let embeddings: Vec<Embedding> = (0..batch_len)
            .map(|_| {
                Embedding::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(), dim)
                    .unwrap()
            })
            .collect();
        let labels: Vec<usize> = (0..batch_len).map(|_| rng.random_range(0..3)).collect();
        let batch: Vec<(&Embedding, usize)> =
            embeddings.iter().zip(labels.iter().copied()).collect();
        let (_, grad) = probe.loss_and_grad(&batch).map_err(|e| e.to_string())?;
        let loss_at = |ps: &[f64]| -> f64 {
            let pr = LinearProbe::from_parts(
                dim,
                GestureClass::default_names(),
                ps[..3 * dim].to_vec(),
                ps[3 * dim..].to_vec(),
            )
            .unwrap();
            pr.loss_and_grad(&batch).unwrap().0
        };
        for i in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus[i] += h;
            minus[i] -= h;
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst_rel = worst_rel.max(rel);
            ensure(rel <= 1e-4, || {
                format!(
                    "instance {inst} param {i}: analytic {} numeric {numeric}",
                    grad[i]
                )
            })?;
        }
    }
    Ok(format!("first-step max error {worst:.1e}; gradient max relative error {worst_rel:.1e} over 100 instances"))
}

// 4 ---------------------------------------------------------------------

fn table1(dir: &Path) -> Check {
    let noisy = dir.join("noisy");
    let clean = dir.join("clean");
    acousto(&[
        "sim",
        "--scenario",
        "table1",
        "--seeds",
        "20",
        "--out",
        p(&noisy),
    ])?;
    acousto(&[
        "sim",
        "--scenario",
        "table1",
        "--seeds",
        "20",
        "--clean",
        "--out",
        p(&clean),
    ])?;
    let summary = read_json(&noisy.join("summary.json"))?;
    let m = &summary["mean_accuracy"];
    let pct = |k: &str| {
        m[k].as_f64()
            .map(|v| v * 100.0)
            .ok_or_else(|| format!("missing {k}"))
    };
    let per_class = [("thumbs_up", 83.3), ("fist", 86.7), ("palm", 96.7)];
    let mut parts = Vec::new();
    for (k, target) in per_class {
        let v = pct(k)?;
        parts.push(format!("{k} {v:.1}"));
        ensure((v - target).abs() <= 5.0, || {
            format!("{k} {v:.1}% vs {target}% +/- 5")
        })?;
    }
    let overall = pct("overall")?;
    ensure((overall - 87.8).abs() <= 4.0, || {
        format!("overall {overall:.1}% vs 87.8% +/- 4")
    })?;
    let trials = summary["runs"][0]["report"]["accuracy"]["rows"]
        .as_array()
        .map(|rows| {
            rows.iter()
                .map(|r| r["trials"].as_u64().unwrap_or(0))
                .collect::<Vec<_>>()
        })
        .unwrap_or_default();
    ensure(trials == vec![30, 30, 30], || {
        format!("trials per class {trials:?}")
    })?;
    let clean_overall = read_json(&clean.join("summary.json"))?["mean_accuracy"]["overall"]
        .as_f64()
        .ok_or("missing clean overall")?
        * 100.0;
    ensure(clean_overall >= 95.0, || {
        format!("clean overall {clean_overall:.1}%")
    })?;
    Ok(format!(
        "20 seeds: {}, overall {overall:.1}%; clean overall {clean_overall:.1}%",
        parts.join(", ")
    ))
}

// 5 ---------------------------------------------------------------------

fn latency(dir: &Path) -> Check {
    acousto(&["sim", "--scenario", "latency50", "--out", p(dir)])?;
    let s = read_json(&dir.join("summary.json"))?;
    let report = &s["report"];
    let total = &report["latency"]["total"];
    let mean = total["mean"].as_f64().ok_or("missing mean")?;
    let std = total["std"].as_f64().ok_or("missing std")?;
    let complete = report["latency"]["complete"]
        .as_u64()
        .ok_or("missing count")?;
    let under = report["fraction_total_under_5s"]
        .as_f64()
        .ok_or("missing fraction")?;
    ensure(complete == 50, || format!("{complete} complete records"))?;
    ensure((mean - 3.95).abs() <= 0.25, || {
        format!("total mean {mean:.3} s")
    })?;
    ensure((0.2..=0.7).contains(&std), || {
        format!("total std {std:.3} s")
    })?;
    ensure(under >= 0.9, || format!("under 5 s {under:.2}"))?;

    // Constructed fixtures: 3.30 / 0.20 / 0.45 s stages, then 50 records at
    // 3.95 +/- 0.43 s alternating.
    let mut r = LatencyRecord::new(0, 1, 1);
    r.t_capture_us = Some(10_000_000);
    r.t_frame_complete_us = Some(13_300_000);
    r.t_infer_start_us = Some(13_310_000);
    r.t_infer_end_us = Some(13_510_000);
    r.t_cmd_sent_us = Some(13_520_000);
    r.t_ack_us = Some(13_970_000);
    let b = decompose(&r).map_err(|e| e.to_string())?;
    let exact = |a: f64, e: f64| (a - e).abs() <= 1e-9;
    ensure(
        exact(b.stage_a_s, 3.3)
            && exact(b.stage_b_s, 0.2)
            && exact(b.stage_c_s, 0.45)
            && exact(b.total_s, 3.97),
        || format!("decompose {b:?}"),
    )?;
    let records: Vec<LatencyRecord> = (0..50)
        .map(|i| {
            let total_us: u64 = if i % 2 == 0 { 4_380_000 } else { 3_520_000 };
            let mut r = LatencyRecord::new(i, 1, 1);
            r.t_capture_us = Some(0);
            r.t_frame_complete_us = Some(total_us - 650_000);
            r.t_infer_start_us = Some(total_us - 650_000);
            r.t_infer_end_us = Some(total_us - 450_000);
            r.t_cmd_sent_us = Some(total_us - 450_000);
            r.t_ack_us = Some(total_us);
            r
        })
        .collect();
    let agg = aggregate(&records).map_err(|e| e.to_string())?;
    ensure(
        exact(agg.total.mean, 3.95) && exact(agg.total.std, 0.43),
        || format!("aggregate mean {} std {}", agg.total.mean, agg.total.std),
    )?;
    ensure(
        exact(agg.stage_b.mean, 0.2)
            && exact(agg.stage_c.mean, 0.45)
            && exact(agg.stage_b.std, 0.0),
        || "aggregate stage B/C".to_string(),
    )?;
    Ok(format!(
        "total {mean:.3} +/- {std:.3} s, {:.0}% under 5 s; fixtures exact",
        under * 100.0
    ))
}

// 6 ---------------------------------------------------------------------

fn random_datagram(rng: &mut ChaCha8Rng) -> Datagram {
    match rng.random_range(0..4) {
        0 => {
            let chunk_count = rng.random_range(1..=u16::MAX);
            let len = rng.random_range(1..=MAX_CHUNK_PAYLOAD);
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            Datagram::Frame(FrameMessage {
                camera_id: rng.random(),
                frame_seq: rng.random(),
                capture_ts_us: rng.random(),
                chunk_idx: rng.random_range(0..chunk_count),
                chunk_count,
                payload,
            })
        }
        1 => {
            let q: [f32; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = q.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-3);
            let q = if n < 0.1 {
                [1.0, 0.0, 0.0, 0.0]
            } else {
                q.map(|v| v / n)
            };
            Datagram::Pose(PoseMessage {
                marker_id: rng.random(),
                ts_us: rng.random(),
                position: std::array::from_fn(|_| rng.random_range(-1e4..1e4)),
                orientation: q,
            })
        }
        2 => Datagram::Command(CommandMessage {
            robot_id: rng.random(),
            cmd_seq: rng.random(),
            ts_us: rng.random(),
            body: if rng.random() {
                CommandBody::Modality(Modality::ALL[rng.random_range(0..4)])
            } else {
                CommandBody::Velocity {
                    v_linear: rng.random_range(-10.0..10.0),
                    v_angular: rng.random_range(-10.0..10.0),
                }
            },
        }),
        _ => Datagram::Ack(AckMessage {
            robot_id: rng.random(),
            cmd_seq: rng.random(),
            ts_us: rng.random(),
        }),
    }
}

fn wire_robustness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    for _ in 0..100_000 {
        let d = random_datagram(&mut rng);
        match d.encode().and_then(|b| Datagram::decode(&b)) {
            Ok(back) if back == d => {}
            _ => failures += 1,
        }
    }
    ensure(failures == 0, || format!("{failures} round-trip failures"))?;

    let mut crashes = 0;
    let mut accepted = 0;
    let magics = [0xAC01u16, 0xAC02, 0xAC03, 0xAC04];
    for i in 0..100_000 {
        let len = rng.random_range(0..64);
        let mut buf = vec![0u8; len];
        rng.fill_bytes(&mut buf);
        // Half the inputs carry a real magic so decoding goes past the header.
        if i % 2 == 0 && len >= 2 {
            buf[..2].copy_from_slice(&magics[i % 4 / 2 * 2 + (i / 2) % 2].to_le_bytes());
            if len >= 3 {
                buf[2] = 1;
            }
        }
        match catch_unwind(|| Datagram::decode(&buf)) {
            Ok(Ok(_)) => accepted += 1,
            Ok(Err(_)) => {}
            Err(_) => crashes += 1,
        }
    }
    ensure(crashes == 0, || format!("{crashes} decoder panics"))?;

    // Chunks of each frame are duplicated, shuffled and 30% lost; frames are
    // delivered one after another.
    let mut r = Reassembler::new(ReassemblyConfig::default());
    let mut emitted = HashSet::new();
    let (mut expected_complete, mut got_complete) = (0, 0);
    let frames = 2_000u32;
    for seq in 0..frames {
        let len = rng.random_range(1..6_000);
        let mut payload = vec![0u8; len];
        rng.fill_bytes(&mut payload);
        let chunks = chunk_frame(
            3,
            seq,
            seq as u64,
            &payload,
            rng.random_range(64..=MAX_CHUNK_PAYLOAD),
        )
        .map_err(|e| e.to_string())?;
        let mut delivered = Vec::new();
        let mut covered = HashSet::new();
        for c in &chunks {
            if rng.random::<f64>() < 0.3 {
                continue;
            }
            covered.insert(c.chunk_idx);
            delivered.push(c.clone());
            if rng.random::<f64>() < 0.3 {
                delivered.push(c.clone());
            }
        }
        delivered.shuffle(&mut rng);
        let complete = covered.len() == chunks.len();
        expected_complete += complete as usize;
        let mut out = Vec::new();
        for c in delivered {
            let wire = Datagram::Frame(c).encode().map_err(|e| e.to_string())?;
            let Ok(Datagram::Frame(c)) = Datagram::decode(&wire) else {
                return Err("frame did not survive the codec".into());
            };
            out.extend(r.push(c, seq as u64 * 1_000));
        }
        ensure(out.len() == complete as usize, || {
            format!("frame {seq}: {} emissions, complete={complete}", out.len())
        })?;
        for f in out {
            ensure(f.payload == payload, || {
                format!("frame {seq} payload corrupted")
            })?;
            ensure(emitted.insert((f.camera_id, f.frame_seq)), || {
                format!("frame {seq} emitted twice")
            })?;
            got_complete += 1;
        }
    }
    ensure(got_complete == expected_complete, || {
        "completion count".into()
    })?;
    Ok(format!(
        "1e5 round trips ok; 1e5 random inputs, 0 panics ({accepted} accepted); {got_complete}/{frames} frames complete under 30% loss, each emitted once"
    ))
}

// 7 ---------------------------------------------------------------------

struct TrajRow {
    t: f64,
    kind: String,
    id: u16,
    user_distance: Option<f64>,
}

fn read_trajectory(path: &Path) -> Result<Vec<TrajRow>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            Ok(TrajRow {
                t: f[0].parse().map_err(|e| format!("{e}"))?,
                kind: f[1].to_string(),
                id: f[2].parse().map_err(|e| format!("{e}"))?,
                user_distance: f.get(9).and_then(|v| v.parse().ok()),
            })
        })
        .collect()
}

fn control(dir: &Path) -> Check {
    let follow = default_sim_config().follow;
    for s in ["crossing", "follow", "dropout"] {
        acousto(&["sim", "--scenario", s, "--out", p(&dir.join(s))])?;
    }
    let crossing = read_json(&dir.join("crossing/summary.json"))?;
    let min_sep = crossing["min_separation_m"]
        .as_f64()
        .ok_or("missing min separation")?;
    ensure(min_sep >= follow.safe_radius - 0.05, || {
        format!("crossing min separation {min_sep:.3} m")
    })?;

    let rows = read_trajectory(&dir.join("follow/trajectory.csv"))?;
    let band = |d: f64| (d - follow.target_distance).abs() <= follow.dead_band;
    let robot1: Vec<&TrajRow> = rows
        .iter()
        .filter(|r| r.kind == "robot" && r.id == 1)
        .collect();
    let start = robot1
        .first()
        .and_then(|r| r.user_distance)
        .ok_or("no follow rows")?;
    ensure((start - 3.0).abs() < 1e-6, || {
        format!("follow starts {start} m away")
    })?;
    let settled = robot1
        .iter()
        .filter(|r| r.t >= 15.0)
        .all(|r| r.user_distance.is_some_and(band));
    let first_in = robot1
        .iter()
        .find(|r| r.user_distance.is_some_and(band))
        .map(|r| r.t);
    ensure(settled, || {
        format!("robot 1 outside the band after 15 s (first inside at {first_in:?})")
    })?;

    let dropout = read_json(&dir.join("dropout/summary.json"))?;
    let stops = dropout["safe_stops"]
        .as_array()
        .ok_or("missing safe stops")?;
    let stop2 = stops
        .iter()
        .filter(|s| s["robot_id"] == 2)
        .filter_map(|s| s["t_s"].as_f64())
        .find(|&t| t >= 5.0)
        .ok_or("robot 2 never safe-stopped")?;
    let delay_ms = (stop2 - 5.0) * 1e3;
    ensure(delay_ms <= 300.0 + 1e-6, || {
        format!("safe stop {delay_ms:.0} ms after dropout")
    })?;
    ensure(stops.iter().all(|s| s["robot_id"] != 1), || {
        "robot 1 safe-stopped".into()
    })?;
    Ok(format!(
        "crossing min separation {min_sep:.3} m (limit {:.2}); follow inside band from {:.1} s; safe stop {delay_ms:.0} ms after dropout",
        follow.safe_radius - 0.05,
        first_in.unwrap_or(f64::NAN)
    ))
}

// 8 ---------------------------------------------------------------------

fn gate_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let threshold = 0.6;
    for debounce in [1u32, 2, 3, 5] {
        let mut gate = Gate::new();
        let mut transitions_in_streak = 0;
        let mut prev: Option<GestureClass> = None;
        for step in 0..10_000 {
            // Sticky streams so confident streaks of several frames occur.
            let class = match prev {
                Some(c) if rng.random::<f64>() < 0.7 => c,
                _ => GestureClass::ALL[rng.random_range(0..3)],
            };
            let confidence = if rng.random::<f64>() < 0.3 {
                rng.random_range(0.0..threshold)
            } else {
                rng.random_range(threshold..1.0)
            };
            let before = gate.active_modality;
            let confident = confidence >= threshold;
            if !confident || prev != Some(class) {
                transitions_in_streak = 0;
            }
            prev = confident.then_some(class);
            let d = gate.observe(class, confidence, threshold, debounce);
            if !confident {
                ensure(
                    gate.active_modality == before && d == GateDecision::Rejected,
                    || format!("debounce {debounce} step {step}: low confidence changed state"),
                )?;
                continue;
            }
            if d.transition().is_some() {
                transitions_in_streak += 1;
                ensure(transitions_in_streak <= 1, || {
                    format!("debounce {debounce} step {step}: second transition in a streak")
                })?;
            }
            if debounce == 1 {
                ensure(
                    gate.active_modality == map_gesture_to_modality(class),
                    || format!("step {step}: debounce 1 did not switch immediately"),
                )?;
                ensure(
                    d.transition().is_some() == (before != gate.active_modality),
                    || "transition flag".into(),
                )?;
            }
        }
    }
    Ok("10^4 random steps for debounce 1, 2, 3, 5: no low-confidence change, at most one transition per streak, immediate switching at debounce 1".into())
}

// 9 ---------------------------------------------------------------------

/// Every file under `dir`, relative path to bytes. History files have the
/// wall-clock `epoch_seconds` column blanked.
fn snapshot(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let mut bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
            if path.file_name().is_some_and(|n| n == "history.csv") {
                let text = String::from_utf8(bytes).map_err(|e| e.to_string())?;
                bytes = text
                    .lines()
                    .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string() + "\n")
                    .collect::<String>()
                    .into_bytes();
            }
            out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), bytes);
        }
    }
    Ok(out)
}

fn determinism(first: &Path, second: &Path) -> Check {
    scaling_runs(&second.join("scaling"))?;
    acousto(&[
        "sim",
        "--scenario",
        "table1",
        "--seeds",
        "20",
        "--out",
        p(&second.join("table1/noisy")),
    ])?;
    acousto(&[
        "sim",
        "--scenario",
        "table1",
        "--seeds",
        "20",
        "--clean",
        "--out",
        p(&second.join("table1/clean")),
    ])?;
    acousto(&[
        "sim",
        "--scenario",
        "latency50",
        "--out",
        p(&second.join("latency")),
    ])?;
    let mut compared = 0;
    let mut csvs = 0;
    for sub in ["scaling", "table1", "latency"] {
        let a = snapshot(&first.join(sub))?;
        let b = snapshot(&second.join(sub))?;
        ensure(a.keys().eq(b.keys()), || {
            format!("{sub}: different file sets")
        })?;
        for (path, bytes) in &a {
            ensure(b[path] == *bytes, || {
                format!("{sub}/{} differs between runs", path.display())
            })?;
            compared += 1;
            csvs += path.extension().is_some_and(|e| e == "csv") as usize;
        }
    }
    Ok(format!(
        "{compared} files ({csvs} CSV) byte-identical across repeated runs of criteria 2, 4, 5"
    ))
}

#[test]
fn acceptance_criteria() {
    let work = tempfile::tempdir().unwrap();
    let first = work.path().join("first");
    let second = work.path().join("second");
    let criteria: Vec<Criterion> = vec![
        (1, "initial loss equals ln 3", 5, Box::new(initial_loss)),
        (
            2,
            "scaling experiment",
            60,
            Box::new(|| scaling(&first.join("scaling"))),
        ),
        (
            3,
            "optimizer and gradient oracles",
            5,
            Box::new(optimizer_oracle),
        ),
        (
            4,
            "switching accuracy",
            30,
            Box::new(|| table1(&first.join("table1"))),
        ),
        (
            5,
            "latency reproduction",
            10,
            Box::new(|| latency(&first.join("latency"))),
        ),
        (6, "wire robustness", 60, Box::new(wire_robustness)),
        (
            7,
            "control properties",
            10,
            Box::new(|| control(&first.join("control"))),
        ),
        (8, "gate properties", 5, Box::new(gate_properties)),
        (
            9,
            "determinism",
            120,
            Box::new(|| determinism(&first, &second)),
        ),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr().lock();
    for (n, name, bound_s, check) in criteria {
        let started = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = started.elapsed();
        let result = match result {
            Ok(detail) if elapsed > Duration::from_secs(bound_s) => Err(format!(
                "{detail}; runtime {:.1} s exceeds {bound_s} s",
                elapsed.as_secs_f64()
            )),
            r => r,
        };
        let (status, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(e) => ("FAIL", e.as_str()),
        };
        let _ = writeln!(
            err,
            "criterion {n} {status} [{:.2} s / {bound_s} s] {name}: {detail}",
            elapsed.as_secs_f64()
        );
        if result.is_err() {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
