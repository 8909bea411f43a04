use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::coordinator::CoordinatorConfig;
use crate::probe::GestureClass;

/// Normal distribution truncated at zero, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelaySpec {
    pub mean: f64,
    #[serde(default)]
    pub std: f64,
}

impl DelaySpec {
    pub const ZERO: DelaySpec = DelaySpec {
        mean: 0.0,
        std: 0.0,
    };

    pub fn fixed(seconds: f64) -> Self {
        DelaySpec {
            mean: seconds,
            std: 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<(), SimError> {
        if !(self.mean.is_finite() && self.std.is_finite() && self.mean >= 0.0 && self.std >= 0.0) {
            return Err(SimError::Scenario(format!(
                "delays.{name} needs finite non-negative mean and std"
            )));
        }
        Ok(())
    }

    /// Rejection-samples until the draw is non-negative, in microseconds.
    pub fn sample_us<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.std == 0.0 {
            return (self.mean * 1e6).round() as u64;
        }
        let normal = Normal::new(self.mean, self.std).expect("validated");
        for _ in 0..1000 {
            let v = normal.sample(rng);
            if v >= 0.0 {
                return (v * 1e6).round() as u64;
            }
        }
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Delays {
    /// Capture plus transmission, sampled once per gesture.
    pub capture: DelaySpec,
    /// Inference duration, sampled per frame.
    pub inference: DelaySpec,
    /// Modality command transmission up to the robot's ack, per command.
    pub command: DelaySpec,
    /// Velocity command transmission.
    pub velocity: DelaySpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlipProb {
    pub thumbs_up: f64,
    pub fist: f64,
    pub palm: f64,
}

impl Default for FlipProb {
    fn default() -> Self {
        FlipProb {
            thumbs_up: 0.0,
            fist: 0.0,
            palm: 0.0,
        }
    }
}

impl FlipProb {
    pub fn get(&self, class: GestureClass) -> f64 {
        match class {
            GestureClass::ThumbsUp => self.thumbs_up,
            GestureClass::Fist => self.fist,
            GestureClass::Palm => self.palm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Probability that a noisy gesture is presented as one of the other
    /// two classes, chosen uniformly.
    pub flip_prob: FlipProb,
    /// Embedding noise level in the synthetic dataset's units.
    pub embed_noise_std: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            flip_prob: FlipProb::default(),
            embed_noise_std: 0.35,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    #[default]
    Clean,
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureEvent {
    pub time_s: f64,
    pub camera_id: u16,
    pub class: GestureClass,
    #[serde(default)]
    pub mode: ConfidenceMode,
}

/// `count` gestures every `period_s`, cycling through `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureBlock {
    pub camera_id: u16,
    pub start_s: f64,
    pub period_s: f64,
    pub count: u32,
    pub classes: Vec<GestureClass>,
    #[serde(default)]
    pub mode: ConfidenceMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub robot_id: u16,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub yaw: f64,
    #[serde(default = "default_max_accel")]
    pub max_accel: f64,
}

fn default_max_accel() -> f64 {
    4.0
}

/// Piecewise-linear user path; `waypoints` are `[time_s, x, y]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPath {
    pub marker_id: u16,
    pub waypoints: Vec<[f64; 3]>,
}

impl UserPath {
    pub fn position_at(&self, t: f64) -> (f64, f64) {
        let w = &self.waypoints;
        if t <= w[0][0] {
            return (w[0][1], w[0][2]);
        }
        for pair in w.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if t <= b[0] {
                let span = b[0] - a[0];
                let f = if span > 0.0 { (t - a[0]) / span } else { 1.0 };
                return (a[1] + f * (b[1] - a[1]), a[2] + f * (b[2] - a[2]));
            }
        }
        let last = w[w.len() - 1];
        (last[1], last[2])
    }
}

/// Tracking outage for one marker over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDropout {
    pub marker_id: u16,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Defaults to the last scheduled event plus the trial window and one
    /// second of slack. Absent and empty means open-ended (interactive use).
    #[serde(default)]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_frames")]
    pub frames_per_gesture: u32,
    #[serde(default = "default_frame_interval")]
    pub frame_interval_s: f64,
    #[serde(default = "default_window")]
    pub trial_window_s: f64,
    #[serde(default = "default_physics_dt")]
    pub physics_dt_s: f64,
    #[serde(default = "default_pose_period")]
    pub pose_period_s: f64,
    #[serde(default = "default_trajectory_interval")]
    pub trajectory_interval_s: f64,
    #[serde(default)]
    pub chunk_drop_prob: f64,
    #[serde(default)]
    pub delays: Delays,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub robot: Vec<RobotSpec>,
    #[serde(default)]
    pub user: Vec<UserPath>,
    #[serde(default)]
    pub gesture: Vec<GestureEvent>,
    #[serde(default)]
    pub gesture_block: Vec<GestureBlock>,
    #[serde(default)]
    pub pose_dropout: Vec<PoseDropout>,
}

fn default_frames() -> u32 {
    3
}
fn default_frame_interval() -> f64 {
    0.1
}
fn default_window() -> f64 {
    2.0
}
fn default_physics_dt() -> f64 {
    0.01
}
fn default_pose_period() -> f64 {
    0.02
}
fn default_trajectory_interval() -> f64 {
    0.1
}

/// One scripted gesture after block expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub trial_id: u64,
    pub time_us: u64,
    pub camera_id: u16,
    pub class: GestureClass,
    pub mode: ConfidenceMode,
}

pub(crate) fn secs_to_us(s: f64) -> u64 {
    (s * 1e6).round() as u64
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Gestures from `gesture` and `gesture_block`, ordered by time then
    /// camera, with trial ids in that order.
    pub fn trials(&self) -> Vec<TrialSpec> {
        let mut raw: Vec<(u64, u16, GestureClass, ConfidenceMode)> = self
            .gesture
            .iter()
            .map(|g| (secs_to_us(g.time_s), g.camera_id, g.class, g.mode))
            .collect();
        for b in &self.gesture_block {
            for i in 0..b.count {
                let t = b.start_s + f64::from(i) * b.period_s;
                let class = b.classes[i as usize % b.classes.len()];
                raw.push((secs_to_us(t), b.camera_id, class, b.mode));
            }
        }
        raw.sort_by_key(|r| (r.0, r.1));
        raw.into_iter()
            .enumerate()
            .map(|(i, (time_us, camera_id, class, mode))| TrialSpec {
                trial_id: i as u64,
                time_us,
                camera_id,
                class,
                mode,
            })
            .collect()
    }

    pub fn last_event_s(&self) -> f64 {
        let gestures = self.trials().last().map_or(0.0, |t| t.time_us as f64 / 1e6);
        let last_frame =
            gestures + f64::from(self.frames_per_gesture.saturating_sub(1)) * self.frame_interval_s;
        let waypoints = self
            .user
            .iter()
            .filter_map(|u| u.waypoints.last().map(|w| w[0]))
            .fold(0.0, f64::max);
        let dropouts = self
            .pose_dropout
            .iter()
            .map(|d| d.end_s)
            .fold(0.0, f64::max);
        last_frame.max(waypoints).max(dropouts)
    }

    /// Simulated span in seconds, or `None` when open-ended.
    pub fn effective_duration_s(&self) -> Option<f64> {
        if let Some(d) = self.duration_s {
            return Some(d);
        }
        let has_events = !self.gesture.is_empty()
            || !self.gesture_block.is_empty()
            || !self.pose_dropout.is_empty()
            || self.user.iter().any(|u| u.waypoints.len() > 1);
        has_events.then(|| {
            self.last_event_s()
                + self.delays.capture.mean
                + 4.0 * self.delays.capture.std
                + self.trial_window_s
                + 1.0
        })
    }

    pub fn validate(&self, config: &CoordinatorConfig) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Scenario(m));
        let positive = [
            ("frame_interval_s", self.frame_interval_s),
            ("trial_window_s", self.trial_window_s),
            ("physics_dt_s", self.physics_dt_s),
            ("pose_period_s", self.pose_period_s),
            ("trajectory_interval_s", self.trajectory_interval_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.frames_per_gesture == 0 {
            return bad("frames_per_gesture must be at least 1".into());
        }
        let dt = secs_to_us(self.physics_dt_s);
        for (name, period) in [
            ("pose_period_s", secs_to_us(self.pose_period_s)),
            ("tick period", config.tick_period_us()),
            (
                "trajectory_interval_s",
                secs_to_us(self.trajectory_interval_s),
            ),
        ] {
            if dt == 0 || period % dt != 0 {
                return bad(format!("{name} must be a multiple of physics_dt_s"));
            }
        }
        if !(0.0..=1.0).contains(&self.chunk_drop_prob) {
            return bad("chunk_drop_prob must lie in [0, 1]".into());
        }
        for c in GestureClass::ALL {
            if !(0.0..=1.0).contains(&self.noise.flip_prob.get(c)) {
                return bad(format!("flip probability for {c} must lie in [0, 1]"));
            }
        }
        if !(self.noise.embed_noise_std.is_finite() && self.noise.embed_noise_std >= 0.0) {
            return bad("noise.embed_noise_std must be non-negative".into());
        }
        let d = &self.delays;
        d.capture.validate("capture")?;
        d.inference.validate("inference")?;
        d.command.validate("command")?;
        d.velocity.validate("velocity")?;

        let cameras: BTreeSet<u16> = config.pairing.iter().map(|p| p.camera_id).collect();
        let robots: BTreeSet<u16> = config.pairing.iter().map(|p| p.robot_id).collect();
        let markers: BTreeSet<u16> = config
            .pairing
            .iter()
            .flat_map(|p| [p.user_marker_id, p.robot_marker()])
            .collect();
        for g in &self.gesture {
            if !(g.time_s.is_finite() && g.time_s >= 0.0) {
                return bad(format!("gesture time {} must be non-negative", g.time_s));
            }
        }
        for b in &self.gesture_block {
            if b.classes.is_empty() {
                return bad("gesture_block.classes must not be empty".into());
            }
            if !(b.start_s >= 0.0 && b.period_s > 0.0) {
                return bad("gesture_block needs start_s >= 0 and period_s > 0".into());
            }
        }
        let gesture_cams = self
            .gesture
            .iter()
            .map(|g| g.camera_id)
            .chain(self.gesture_block.iter().map(|b| b.camera_id));
        for cam in gesture_cams {
            if !cameras.contains(&cam) {
                return bad(format!("camera {cam} is not paired in the config"));
            }
        }
        let mut seen = BTreeSet::new();
        for r in &self.robot {
            if !robots.contains(&r.robot_id) {
                return bad(format!("robot {} is not paired in the config", r.robot_id));
            }
            if !seen.insert(r.robot_id) {
                return bad(format!("robot {} is listed twice", r.robot_id));
            }
            if !(r.x.is_finite() && r.y.is_finite() && r.yaw.is_finite() && r.max_accel > 0.0) {
                return bad(format!(
                    "robot {} needs a finite pose and positive max_accel",
                    r.robot_id
                ));
            }
        }
        for u in &self.user {
            if !markers.contains(&u.marker_id) {
                return bad(format!(
                    "user marker {} is not paired in the config",
                    u.marker_id
                ));
            }
            if u.waypoints.is_empty() {
                return bad(format!("user {} has no waypoints", u.marker_id));
            }
            if u.waypoints.windows(2).any(|w| w[1][0] < w[0][0])
                || u.waypoints.iter().flatten().any(|v| !v.is_finite())
            {
                return bad(format!(
                    "user {} waypoints must be finite with non-decreasing times",
                    u.marker_id
                ));
            }
        }
        for dr in &self.pose_dropout {
            if !markers.contains(&dr.marker_id) {
                return bad(format!(
                    "dropout marker {} is not paired in the config",
                    dr.marker_id
                ));
            }
            if !(dr.start_s >= 0.0 && dr.end_s >= dr.start_s) {
                return bad("pose_dropout needs 0 <= start_s <= end_s".into());
            }
        }
        if let Some(d) = self.duration_s {
            if !(d.is_finite() && d > 0.0) {
                return bad("duration_s must be positive".into());
            }
            if d < self.last_event_s() {
                return bad(format!(
                    "duration_s {d} ends before the last scripted event at {}",
                    self.last_event_s()
                ));
            }
        }
        Ok(())
    }
}
