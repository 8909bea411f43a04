use serde::Serialize;

use crate::coordinator::PlanarPose;
use crate::wire::Modality;

/// Unicycle robot with a linear acceleration limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimRobot {
    pub robot_id: u16,
    pub marker_id: u16,
    pub pose: PlanarPose,
    pub v_linear: f64,
    pub v_angular: f64,
    /// m/s^2; `f64::INFINITY` applies commands instantly.
    pub max_accel: f64,
    pub modality: Modality,
}

impl SimRobot {
    pub fn new(robot_id: u16, marker_id: u16, pose: PlanarPose, max_accel: f64) -> Self {
        SimRobot {
            robot_id,
            marker_id,
            pose,
            v_linear: 0.0,
            v_angular: 0.0,
            max_accel,
            modality: Modality::Idle,
        }
    }
}

/// Advances one step: the linear speed moves toward the command by at most
/// `max_accel * dt`, the angular speed is applied directly, then heading
/// is integrated before position.
pub fn step_robot(r: &SimRobot, cmd: (f64, f64), dt: f64) -> SimRobot {
    debug_assert!(dt > 0.0);
    let max_dv = r.max_accel * dt;
    let v = r.v_linear + (cmd.0 - r.v_linear).clamp(-max_dv, max_dv);
    let w = cmd.1;
    let yaw = r.pose.yaw + w * dt;
    SimRobot {
        pose: PlanarPose {
            x: r.pose.x + v * yaw.cos() * dt,
            y: r.pose.y + v * yaw.sin() * dt,
            yaw,
        },
        v_linear: v,
        v_angular: w,
        ..*r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn robot() -> SimRobot {
        SimRobot::new(1, 1, PlanarPose::new(0.0, 0.0, 0.0), f64::INFINITY)
    }

    #[test]
    fn zero_command_keeps_pose() {
        let r = robot();
        assert_eq!(step_robot(&r, (0.0, 0.0), 0.1).pose, r.pose);
    }

    #[test]
    fn straight_line() {
        let r = step_robot(&robot(), (1.0, 0.0), 0.1);
        assert!((r.pose.x - 0.1).abs() < 1e-15);
        assert_eq!(r.pose.y, 0.0);
    }

    #[test]
    fn pure_rotation() {
        let r = step_robot(&robot(), (0.0, PI), 0.5);
        assert!((r.pose.yaw - PI / 2.0).abs() < 1e-15);
        assert_eq!((r.pose.x, r.pose.y), (0.0, 0.0));
    }

    #[test]
    fn acceleration_is_limited() {
        let r = SimRobot {
            max_accel: 4.0,
            ..robot()
        };
        let r = step_robot(&r, (0.5, 0.0), 0.01);
        assert!((r.v_linear - 0.04).abs() < 1e-12);
        let mut r = r;
        for _ in 0..20 {
            r = step_robot(&r, (0.5, 0.0), 0.01);
        }
        assert_eq!(r.v_linear, 0.5);
    }
}
