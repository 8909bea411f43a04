use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::wire::PoseMessage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowParams {
    pub target_distance: f64,
    pub dead_band: f64,
    pub k_linear: f64,
    pub k_angular: f64,
    pub v_max: f64,
    pub w_max: f64,
    pub safe_radius: f64,
}

impl Default for FollowParams {
    fn default() -> Self {
        FollowParams {
            target_distance: 1.0,
            dead_band: 0.05,
            k_linear: 0.8,
            k_angular: 1.5,
            v_max: 0.5,
            w_max: 1.2,
            safe_radius: 0.8,
        }
    }
}

impl FollowParams {
    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("target_distance", self.target_distance),
            ("dead_band", self.dead_band),
            ("k_linear", self.k_linear),
            ("k_angular", self.k_angular),
            ("v_max", self.v_max),
            ("w_max", self.w_max),
            ("safe_radius", self.safe_radius),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("follow.{name} must be positive, got {v}"));
            }
        }
        if self.dead_band >= self.target_distance {
            return Err("follow.dead_band must be smaller than follow.target_distance".into());
        }
        Ok(())
    }
}

/// Position and heading in the horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        PlanarPose { x, y, yaw }
    }

    pub fn distance(&self, other: &PlanarPose) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

impl From<&PoseMessage> for PlanarPose {
    fn from(p: &PoseMessage) -> Self {
        PlanarPose {
            x: f64::from(p.position[0]),
            y: f64::from(p.position[1]),
            yaw: p.yaw(),
        }
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Proportional planar follow law. Returns `(v_linear, v_angular)`.
pub fn follow_control(robot: &PlanarPose, user: &PlanarPose, p: &FollowParams) -> (f64, f64) {
    let dx = user.x - robot.x;
    let dy = user.y - robot.y;
    let d = dx.hypot(dy);
    if !(d >= 1e-6) {
        return (0.0, 0.0);
    }
    let theta = wrap_angle(dy.atan2(dx) - robot.yaw);
    let v_angular = (p.k_angular * theta).clamp(-p.w_max, p.w_max);
    let err = d - p.target_distance;
    let v_linear = if err.abs() <= p.dead_band {
        0.0
    } else {
        (p.k_linear * err).clamp(-p.v_max, p.v_max) * theta.cos().max(0.0)
    };
    (v_linear, v_angular)
}
