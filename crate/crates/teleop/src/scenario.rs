//! Scenario scripts: a robot model, a controller configuration and a timeline
//! of master-device events.

use std::path::{Path, PathBuf};

use gl_teleop_core::controller::{ImuPair, TeleopMode};
use gl_teleop_core::hand::HandCalibration;
use gl_teleop_core::kinematics::{JointVector, Pose};
use gl_teleop_core::math::{cos, log, sqrt};
use gl_teleop_core::nalgebra::Vector3;
use gl_teleop_core::rotation::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    default_hand_calibration, parse_hand_calibration, parse_toml, read_text, ControllerConfig,
    FormatError, RobotModel,
};
use crate::station::Decoupling;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{context}: {field}: {message}")]
    Field {
        context: String,
        field: String,
        message: String,
    },
}

pub type Result<T, E = ScenarioError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointKey {
    pub t: f64,
    pub joints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseKey {
    pub t: f64,
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default = "identity")]
    pub orientation: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImuKey {
    pub t: f64,
    pub forearm: [f64; 4],
    pub hand: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExoskeletonKey {
    pub t: f64,
    pub encoders: [f64; 6],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PedalMode {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedalEvent {
    pub t: f64,
    pub mode: PedalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperEvent {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joints: Option<Vec<f64>>,
    /// meters
    #[serde(default = "default_position_tolerance")]
    pub position_tolerance: f64,
    /// radians
    #[serde(default = "default_angle_tolerance")]
    pub angle_tolerance: f64,
    /// radians, for joint waypoints
    #[serde(default = "default_joint_tolerance")]
    pub joint_tolerance: f64,
}

fn default_position_tolerance() -> f64 {
    1e-3
}
fn default_angle_tolerance() -> f64 {
    1e-2
}
fn default_joint_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub seed: u64,
    /// Standard deviation of the stylus position noise per axis, meters.
    pub sigma: f64,
}

fn identity() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn default_operator_speed() -> f64 {
    0.8
}

/// Scenario file. Paths are relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_calibration: Option<String>,
    #[serde(default)]
    pub mode: Decoupling,
    /// seconds
    pub duration: f64,
    /// Fastest the operator moves a replica joint toward its keyframe, rad/s.
    #[serde(default = "default_operator_speed")]
    pub operator_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub replica: Vec<JointKey>,
    #[serde(default)]
    pub stylus: Vec<PoseKey>,
    #[serde(default)]
    pub imu: Vec<ImuKey>,
    #[serde(default)]
    pub exoskeleton: Vec<ExoskeletonKey>,
    #[serde(default)]
    pub pedal: Vec<PedalEvent>,
    #[serde(default)]
    pub gripper: Vec<GripperEvent>,
    #[serde(default)]
    pub waypoint: Vec<Waypoint>,
}

/// A scenario with every referenced file read into memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub script: ScenarioFile,
    pub model: String,
    #[serde(default)]
    pub config: Option<String>,
    #[serde(default)]
    pub hand_calibration: Option<String>,
}

/// Parsed and validated pieces of a scenario.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: RobotModel,
    pub config: ControllerConfig,
    pub hand: HandCalibration,
}

impl Scenario {
    /// Reads a scenario file and the files it references. `model` and
    /// `config` override the paths given in the file.
    pub fn load(path: &Path, model: Option<&Path>, config: Option<&Path>) -> Result<Self> {
        let context = path.display().to_string();
        let script: ScenarioFile = parse_toml(&read_text(path)?, &context)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let rel = |p: &str| -> PathBuf { dir.join(p) };
        let model_path = model.map(Path::to_path_buf).unwrap_or_else(|| rel(&script.model));
        let config_path = config
            .map(Path::to_path_buf)
            .or_else(|| script.config.as_deref().map(rel));
        let hand_path = script.hand_calibration.as_deref().map(rel);
        let scenario = Scenario {
            model: read_text(&model_path)?,
            config: config_path.as_deref().map(read_text).transpose()?,
            hand_calibration: hand_path.as_deref().map(read_text).transpose()?,
            script,
        };
        scenario.resolve()?;
        Ok(scenario)
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let name = &self.script.name;
        let model = RobotModel::parse(&self.model, &format!("{name}: model"))?;
        let config = match &self.config {
            Some(text) => ControllerConfig::parse(text, &format!("{name}: config"))?,
            None => ControllerConfig::default(),
        };
        let hand = match &self.hand_calibration {
            Some(text) => parse_hand_calibration(text, &format!("{name}: hand calibration"))?,
            None => default_hand_calibration(),
        };
        self.script.validate(&model)?;
        Ok(Resolved {
            model,
            config,
            hand,
        })
    }
}

impl ScenarioFile {
    fn field_error(&self, field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
        ScenarioError::Field {
            context: self.name.clone(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn replica_dof(&self, model: &RobotModel) -> usize {
        match self.mode {
            Decoupling::Temporal => model.chain.dof(),
            Decoupling::Spatial => model.chain.dof().saturating_sub(3),
        }
    }

    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(self.field_error("duration", "must be a finite non-negative number"));
        }
        if !(self.operator_speed.is_finite() && self.operator_speed > 0.0) {
            return Err(self.field_error("operator_speed", "must be positive"));
        }
        if let Some(n) = self.noise {
            if !(n.sigma.is_finite() && n.sigma >= 0.0) {
                return Err(self.field_error("noise.sigma", "must be non-negative"));
            }
        }
        let times: [(&str, Vec<f64>); 7] = [
            ("replica", self.replica.iter().map(|k| k.t).collect()),
            ("stylus", self.stylus.iter().map(|k| k.t).collect()),
            ("imu", self.imu.iter().map(|k| k.t).collect()),
            ("exoskeleton", self.exoskeleton.iter().map(|k| k.t).collect()),
            ("pedal", self.pedal.iter().map(|k| k.t).collect()),
            ("gripper", self.gripper.iter().map(|k| k.t).collect()),
            ("waypoint", self.waypoint.iter().map(|k| k.t).collect()),
        ];
        for (name, ts) in &times {
            for (i, t) in ts.iter().enumerate() {
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(self.field_error(format!("{name}[{i}].t"), "must be finite and non-negative"));
                }
                if i > 0 && *t < ts[i - 1] {
                    return Err(self.field_error(format!("{name}[{i}].t"), "timestamps must be non-decreasing"));
                }
            }
        }
        match self.mode {
            Decoupling::Temporal => {
                if !self.imu.is_empty() {
                    return Err(self.field_error("imu", "IMU events need spatial mode"));
                }
            }
            Decoupling::Spatial => {
                if !self.stylus.is_empty() || !self.pedal.is_empty() {
                    return Err(self.field_error("stylus/pedal", "stylus and pedal events need temporal mode"));
                }
                if model.chain.dof() <= 3 {
                    return Err(self.field_error("mode", "spatial mode needs more than three joints"));
                }
            }
        }
        let n = self.replica_dof(model);
        for (i, k) in self.replica.iter().enumerate() {
            if k.joints.len() != n {
                return Err(self.field_error(
                    format!("replica[{i}].joints"),
                    format!("expected {n} values, got {}", k.joints.len()),
                ));
            }
            if k.joints.iter().any(|v| !v.is_finite()) {
                return Err(self.field_error(format!("replica[{i}].joints"), "non-finite value"));
            }
        }
        for (i, k) in self.stylus.iter().enumerate() {
            quat(k.orientation).map_err(|e| self.field_error(format!("stylus[{i}].orientation"), e.to_string()))?;
            if k.position.iter().any(|v| !v.is_finite()) {
                return Err(self.field_error(format!("stylus[{i}].position"), "non-finite value"));
            }
        }
        for (i, k) in self.imu.iter().enumerate() {
            quat(k.forearm).map_err(|e| self.field_error(format!("imu[{i}].forearm"), e.to_string()))?;
            quat(k.hand).map_err(|e| self.field_error(format!("imu[{i}].hand"), e.to_string()))?;
        }
        for (i, k) in self.exoskeleton.iter().enumerate() {
            if k.encoders.iter().any(|v| !v.is_finite()) {
                return Err(self.field_error(format!("exoskeleton[{i}].encoders"), "non-finite value"));
            }
        }
        for (i, g) in self.gripper.iter().enumerate() {
            if !(0.0..=1.0).contains(&g.value) {
                return Err(self.field_error(format!("gripper[{i}].value"), "must be in [0, 1]"));
            }
        }
        for (i, w) in self.waypoint.iter().enumerate() {
            let field = |f: &str| format!("waypoint[{i}].{f}");
            match (&w.position, &w.joints) {
                (None, None) => return Err(self.field_error(field("position"), "give a position or joints")),
                (Some(_), Some(_)) => return Err(self.field_error(field("joints"), "give a position or joints, not both")),
                _ => {}
            }
            if w.orientation.is_some() && w.position.is_none() {
                return Err(self.field_error(field("orientation"), "needs a position"));
            }
            if let Some(q) = w.orientation {
                quat(q).map_err(|e| self.field_error(field("orientation"), e.to_string()))?;
            }
            if let Some(j) = &w.joints {
                if j.len() != model.chain.dof() {
                    return Err(self.field_error(
                        field("joints"),
                        format!("expected {} values, got {}", model.chain.dof(), j.len()),
                    ));
                }
            }
            let tols = [w.position_tolerance, w.angle_tolerance, w.joint_tolerance];
            if tols.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(self.field_error(field("tolerance"), "tolerances must be positive"));
            }
        }
        Ok(())
    }

    /// Replica keyframe target at `t`, linear between keys.
    pub fn replica_at(&self, t: f64) -> Option<JointVector> {
        let (a, b, s) = bracket(&self.replica, |k| k.t, t)?;
        Some(JointVector(
            a.joints.iter().zip(&b.joints).map(|(x, y)| lerp(*x, *y, s)).collect(),
        ))
    }

    /// Noise-free stylus pose at `t`: linear position, normalized linear
    /// quaternion blend.
    pub fn stylus_at(&self, t: f64) -> Pose {
        match bracket(&self.stylus, |k| k.t, t) {
            None => Pose::IDENTITY,
            Some((a, b, s)) => {
                let position = Vector3::from(a.position).lerp(&Vector3::from(b.position), s);
                Pose::new(position, nlerp(a.orientation, b.orientation, s))
            }
        }
    }

    pub fn imus_at(&self, t: f64) -> Option<ImuPair> {
        let (a, b, s) = bracket(&self.imu, |k| k.t, t)?;
        Some(ImuPair {
            forearm: nlerp(a.forearm, b.forearm, s).to_rotation_matrix(),
            hand: nlerp(a.hand, b.hand, s).to_rotation_matrix(),
        })
    }

    pub fn exoskeleton_at(&self, t: f64) -> Option<[f64; 6]> {
        let (a, b, s) = bracket(&self.exoskeleton, |k| k.t, t)?;
        Some(std::array::from_fn(|i| lerp(a.encoders[i], b.encoders[i], s)))
    }

    /// Pedal state: the last event at or before `t`, Global before any.
    pub fn pedal_at(&self, t: f64) -> TeleopMode {
        match self.pedal.iter().rev().find(|e| e.t <= t).map(|e| e.mode) {
            Some(PedalMode::Local) => TeleopMode::Local,
            _ => TeleopMode::Global,
        }
    }

    pub fn gripper_at(&self, t: f64) -> Option<f64> {
        self.gripper.iter().rev().find(|e| e.t <= t).map(|e| e.value)
    }
}

fn quat(q: [f64; 4]) -> gl_teleop_core::Result<UnitQuaternion> {
    UnitQuaternion::new(q[0], q[1], q[2], q[3])
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    if s == 0.0 {
        a
    } else if s == 1.0 {
        b
    } else {
        a + (b - a) * s
    }
}

fn nlerp(a: [f64; 4], b: [f64; 4], s: f64) -> UnitQuaternion {
    // Keys were validated, so normalization cannot fail.
    let qa = quat(a).unwrap_or(UnitQuaternion::IDENTITY);
    let qb = quat(b).unwrap_or(UnitQuaternion::IDENTITY);
    if s == 0.0 {
        return qa;
    }
    if s == 1.0 {
        return qb;
    }
    let (pa, mut pb) = (qa.to_array(), qb.to_array());
    let dot: f64 = pa.iter().zip(&pb).map(|(x, y)| x * y).sum();
    if dot < 0.0 {
        pb = pb.map(|v| -v);
    }
    let m: [f64; 4] = std::array::from_fn(|i| lerp(pa[i], pb[i], s));
    UnitQuaternion::new(m[0], m[1], m[2], m[3]).unwrap_or(qa)
}

/// Keys around `t` and the blend factor. Holds the first key before the
/// timeline and the last one after it; with repeated timestamps the later
/// key wins.
fn bracket<K>(keys: &[K], time: impl Fn(&K) -> f64, t: f64) -> Option<(&K, &K, f64)> {
    let first = keys.first()?;
    let last = keys.last()?;
    if t <= time(first) {
        // Several keys may share the first timestamp.
        let k = keys.iter().rev().find(|k| time(k) <= t).unwrap_or(first);
        return Some((k, k, 0.0));
    }
    if t >= time(last) {
        return Some((last, last, 0.0));
    }
    let i = keys.iter().rposition(|k| time(k) <= t)?;
    let (a, b) = (&keys[i], &keys[i + 1]);
    let s = (t - time(a)) / (time(b) - time(a));
    Some((a, b, s))
}

/// Gaussian noise from ChaCha8 seeded with `seed_from_u64`.
///
/// Each sample takes two uniforms `u1, u2` in [0, 1) built from the top 53
/// bits of successive `u64` outputs, and returns the Box–Muller cosine branch
/// `sigma · sqrt(−2 ln(1 − u1)) · cos(2π u2)`. `ln` and `cos` come from libm.
#[derive(Debug, Clone)]
pub struct GaussianNoise {
    rng: ChaCha8Rng,
    sigma: f64,
}

impl GaussianNoise {
    pub fn new(seed: u64, sigma: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            sigma,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.random::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        self.sigma * sqrt(-2.0 * log(1.0 - u1)) * cos(std::f64::consts::TAU * u2)
    }

    pub fn vector(&mut self) -> Vector3<f64> {
        let x = self.sample();
        let y = self.sample();
        let z = self.sample();
        Vector3::new(x, y, z)
    }
}
