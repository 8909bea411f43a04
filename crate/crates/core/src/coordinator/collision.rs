use std::collections::BTreeMap;

use super::follow::{FollowParams, PlanarPose};

const CLOSING_EPS: f64 = 1e-9;

fn predict(pose: &PlanarPose, (v, w): (f64, f64), horizon: f64) -> (f64, f64) {
    let yaw = pose.yaw + w * horizon;
    (
        pose.x + v * yaw.cos() * horizon,
        pose.y + v * yaw.sin() * horizon,
    )
}

/// A pair conflicts when its predicted separation is below the safe radius
/// and smaller than it is now. Pairs already inside the radius but moving
/// apart are left alone so they can separate.
fn conflicts(
    a: (&PlanarPose, (f64, f64)),
    b: (&PlanarPose, (f64, f64)),
    p: &FollowParams,
    horizon: f64,
) -> bool {
    let now = a.0.distance(b.0);
    let (ax, ay) = predict(a.0, a.1, horizon);
    let (bx, by) = predict(b.0, b.1, horizon);
    let next = (bx - ax).hypot(by - ay);
    next < p.safe_radius && next < now - CLOSING_EPS
}

/// Priority stop: in every conflicting pair the higher id loses its linear
/// velocity, repeated until no conflict involves a moving higher-id robot.
/// If a lower-id robot still closes on a stopped one it is stopped too.
/// Angular velocities are never changed. Robots without a pose are passed
/// through untouched.
pub fn avoid_collisions(
    proposed: &BTreeMap<u16, (f64, f64)>,
    poses: &BTreeMap<u16, PlanarPose>,
    p: &FollowParams,
    horizon: f64,
) -> BTreeMap<u16, (f64, f64)> {
    let mut out = proposed.clone();
    let ids: Vec<u16> = out
        .keys()
        .copied()
        .filter(|id| poses.contains_key(id))
        .collect();
    let pairs: Vec<(u16, u16)> = ids
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| ids[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let conflicting = |out: &BTreeMap<u16, (f64, f64)>, a: u16, b: u16| {
        conflicts((&poses[&a], out[&a]), (&poses[&b], out[&b]), p, horizon)
    };

    loop {
        let mut changed = false;
        for &(lo, hi) in &pairs {
            if out[&hi].0 != 0.0 && conflicting(&out, lo, hi) {
                out.get_mut(&hi).unwrap().0 = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    loop {
        let mut changed = false;
        for &(lo, hi) in &pairs {
            if out[&lo].0 != 0.0 && conflicting(&out, lo, hi) {
                out.get_mut(&lo).unwrap().0 = 0.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    out
}

/// Deadlock breaker for robots that [`avoid_collisions`] has kept from
/// moving for a while. Each blocked robot's higher-id blockers back off
/// along their heading (whichever direction opens the gap), and the blocked
/// robot gets its proposed command back if that no longer conflicts with
/// anyone. Blockers with a lower id than the blocked robot are never moved.
pub fn yield_to_blocked(
    commanded: &BTreeMap<u16, (f64, f64)>,
    proposed: &BTreeMap<u16, (f64, f64)>,
    poses: &BTreeMap<u16, PlanarPose>,
    blocked: &[u16],
    p: &FollowParams,
    horizon: f64,
) -> BTreeMap<u16, (f64, f64)> {
    let mut out = commanded.clone();
    let back_off = p.v_max / 2.0;
    let mut sorted = blocked.to_vec();
    sorted.sort_unstable();
    for lo in sorted {
        let (Some(&want), Some(lo_pose)) = (proposed.get(&lo), poses.get(&lo)) else {
            continue;
        };
        let blockers: Vec<u16> = out
            .keys()
            .copied()
            .filter(|&b| b != lo && poses.contains_key(&b))
            .filter(|b| conflicts((lo_pose, want), (&poses[b], out[b]), p, horizon))
            .collect();
        if blockers.iter().any(|&b| b < lo) {
            continue;
        }
        for hi in blockers {
            let pose = &poses[&hi];
            let w = out[&hi].1;
            let separation = |v: f64| {
                let (ax, ay) = predict(lo_pose, want, horizon);
                let (bx, by) = predict(pose, (v, w), horizon);
                (bx - ax).hypot(by - ay)
            };
            let v = if separation(back_off) >= separation(-back_off) {
                back_off
            } else {
                -back_off
            };
            let clear = out.iter().all(|(&other, &cmd)| {
                other == hi
                    || other == lo
                    || !poses.contains_key(&other)
                    || !conflicts((pose, (v, w)), (&poses[&other], cmd), p, horizon)
            });
            if clear {
                out.insert(hi, (v, w));
            }
        }
        let free = out.iter().all(|(&other, &cmd)| {
            other == lo
                || !poses.contains_key(&other)
                || !conflicts((lo_pose, want), (&poses[&other], cmd), p, horizon)
        });
        if free {
            out.insert(lo, want);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn maps(
        entries: &[(u16, PlanarPose, (f64, f64))],
    ) -> (BTreeMap<u16, (f64, f64)>, BTreeMap<u16, PlanarPose>) {
        (
            entries.iter().map(|(id, _, v)| (*id, *v)).collect(),
            entries.iter().map(|(id, pose, _)| (*id, *pose)).collect(),
        )
    }

    #[test]
    fn distant_robots_are_unchanged() {
        let (cmd, poses) = maps(&[
            (1, PlanarPose::new(0.0, 0.0, 0.0), (0.1, 0.2)),
            (2, PlanarPose::new(5.0, 0.0, PI), (0.1, -0.2)),
        ]);
        assert_eq!(
            avoid_collisions(&cmd, &poses, &FollowParams::default(), 0.1),
            cmd
        );
    }

    #[test]
    fn higher_id_stops_when_approaching_head_on() {
        let (cmd, poses) = maps(&[
            (1, PlanarPose::new(0.0, 0.0, 0.0), (0.3, 0.1)),
            (2, PlanarPose::new(0.7, 0.0, PI), (0.3, -0.4)),
        ]);
        let out = avoid_collisions(&cmd, &poses, &FollowParams::default(), 0.1);
        assert_eq!(out[&2], (0.0, -0.4));
        // Robot 1 still closes on the stopped robot, so it is held as well.
        assert_eq!(out[&1], (0.0, 0.1));
    }

    #[test]
    fn lower_id_moving_away_keeps_going() {
        let (cmd, poses) = maps(&[
            (1, PlanarPose::new(0.7, 0.0, 0.0), (0.2, 0.0)),
            (2, PlanarPose::new(0.0, 0.0, 0.0), (0.5, 0.0)),
        ]);
        let out = avoid_collisions(&cmd, &poses, &FollowParams::default(), 0.1);
        assert_eq!(out[&1], (0.2, 0.0));
        assert_eq!(out[&2], (0.0, 0.0));
    }

    #[test]
    fn three_in_a_line_only_lowest_moves() {
        // All heading +x, the trailing robots faster than the leader.
        let (cmd, poses) = maps(&[
            (1, PlanarPose::new(0.7, 0.0, 0.0), (0.1, 0.0)),
            (2, PlanarPose::new(0.35, 0.0, 0.0), (0.3, 0.0)),
            (3, PlanarPose::new(0.0, 0.0, 0.0), (0.5, 0.0)),
        ]);
        let p = FollowParams::default();
        for (a, b) in [(1, 2), (1, 3), (2, 3)] {
            assert!(conflicts(
                (&poses[&a], cmd[&a]),
                (&poses[&b], cmd[&b]),
                &p,
                0.1
            ));
        }
        let out = avoid_collisions(&cmd, &poses, &p, 0.1);
        assert_eq!(out[&1], (0.1, 0.0));
        assert_eq!(out[&2].0, 0.0);
        assert_eq!(out[&3].0, 0.0);
    }

    #[test]
    fn blocked_lower_id_gets_way_after_yield() {
        // Crossing deadlock: robot 1 heads +x past robot 2, which faces +y.
        let (proposed, mut poses) = maps(&[
            (1, PlanarPose::new(-0.56, 0.0, 0.0), (0.5, 0.0)),
            (2, PlanarPose::new(0.0, -0.58, PI / 2.0), (0.5, 0.0)),
        ]);
        let p = FollowParams::default();
        let held = avoid_collisions(&proposed, &poses, &p, 0.1);
        assert_eq!((held[&1].0, held[&2].0), (0.0, 0.0));
        let mut freed_after = None;
        for step in 0..20 {
            let held = avoid_collisions(&proposed, &poses, &p, 0.1);
            let out = yield_to_blocked(&held, &proposed, &poses, &[1], &p, 0.1);
            assert_eq!(out[&2].0, -p.v_max / 2.0);
            if out[&1] == (0.5, 0.0) {
                assert!(!conflicts(
                    (&poses[&1], out[&1]),
                    (&poses[&2], out[&2]),
                    &p,
                    0.1
                ));
                freed_after = Some(step);
                break;
            }
            for (id, pose) in poses.iter_mut() {
                let (x, y) = predict(pose, out[id], 0.05);
                *pose = PlanarPose::new(x, y, pose.yaw);
            }
        }
        assert!(freed_after.is_some());
    }

    #[test]
    fn yield_never_moves_a_lower_id_blocker() {
        let (proposed, poses) = maps(&[
            (1, PlanarPose::new(0.6, 0.0, PI), (0.0, 0.0)),
            (2, PlanarPose::new(0.0, 0.0, 0.0), (0.5, 0.0)),
        ]);
        let p = FollowParams::default();
        let held = avoid_collisions(&proposed, &poses, &p, 0.1);
        assert_eq!(
            yield_to_blocked(&held, &proposed, &poses, &[2], &p, 0.1),
            held
        );
    }

    #[test]
    fn separating_pair_inside_radius_is_free() {
        let (cmd, poses) = maps(&[
            (1, PlanarPose::new(0.0, 0.0, PI), (0.3, 0.0)),
            (2, PlanarPose::new(0.5, 0.0, 0.0), (0.3, 0.0)),
        ]);
        assert_eq!(
            avoid_collisions(&cmd, &poses, &FollowParams::default(), 0.1),
            cmd
        );
    }
}
