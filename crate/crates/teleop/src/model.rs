//! TOML file formats: robot models, controller configuration and hand
//! calibration.
//!
//! Quaternions are written `[w, x, y, z]`, positions in meters, angles in
//! radians.

use std::path::Path;

use gl_teleop_core::controller::{ScalingFactors, TemporalConfig};
use gl_teleop_core::hand::{HandCalibration, DEFAULT_THUMB_TILT, ENCODER_COUNT};
use gl_teleop_core::kinematics::{IkConfig, Joint, JointLimits, JointVector, KinematicChain, Pose};
use gl_teleop_core::nalgebra::Vector3;
use gl_teleop_core::rotation::{EulerConvention, UnitQuaternion};
use gl_teleop_core::sim::SafetyConfig;
use serde::{Deserialize, Serialize};

/// Version written by this crate and the only one it reads.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("{context}: unsupported model_version {found}, expected {MODEL_VERSION}")]
    Version { context: String, found: u32 },
    #[error("{context}: {source}")]
    Invalid {
        context: String,
        source: gl_teleop_core::Error,
    },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, context: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| FormatError::Parse {
        context: context.to_string(),
        message: e.to_string(),
    })
}

fn invalid(context: &str) -> impl FnOnce(gl_teleop_core::Error) -> FormatError + '_ {
    move |source| FormatError::Invalid {
        context: context.to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default = "identity_quat")]
    pub orientation: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            orientation: identity_quat(),
        }
    }
}

impl PoseSpec {
    pub fn to_pose(&self) -> gl_teleop_core::Result<Pose> {
        let [w, x, y, z] = self.orientation;
        Ok(Pose::new(
            Vector3::from(self.position),
            UnitQuaternion::new(w, x, y, z)?,
        ))
    }

    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            position: pose.position.into(),
            orientation: pose.orientation.to_array(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EndEffector {
    #[default]
    Gripper,
    Hand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    /// Fixed transform from the previous joint frame.
    #[serde(default)]
    pub origin: PoseSpec,
    pub axis: [f64; 3],
    /// `[min, max]`, radians.
    pub limits: [f64; 2],
    /// rad/s
    pub velocity_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySpec {
    #[serde(default = "default_tracking_limit")]
    pub tracking_error_limit: f64,
    #[serde(default = "default_box_min")]
    pub workspace_min: [f64; 3],
    #[serde(default = "default_box_max")]
    pub workspace_max: [f64; 3],
}

fn default_tracking_limit() -> f64 {
    0.5
}
fn default_box_min() -> [f64; 3] {
    [-2.0; 3]
}
fn default_box_max() -> [f64; 3] {
    [2.0; 3]
}

impl Default for SafetySpec {
    fn default() -> Self {
        Self {
            tracking_error_limit: default_tracking_limit(),
            workspace_min: default_box_min(),
            workspace_max: default_box_max(),
        }
    }
}

/// Robot model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModelFile {
    pub model_version: u32,
    pub name: String,
    #[serde(default)]
    pub end_effector: EndEffector,
    /// Initial joints; zero (clamped into the limits) when absent.
    #[serde(default)]
    pub home: Option<Vec<f64>>,
    #[serde(default)]
    pub ee_offset: PoseSpec,
    #[serde(default)]
    pub safety: SafetySpec,
    pub joints: Vec<JointSpec>,
}

/// A loaded, validated robot model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub chain: KinematicChain,
    pub home: JointVector,
    pub safety: SafetyConfig,
    pub end_effector: EndEffector,
}

impl RobotModelFile {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let file: Self = parse_toml(text, context)?;
        if file.model_version != MODEL_VERSION {
            return Err(FormatError::Version {
                context: context.to_string(),
                found: file.model_version,
            });
        }
        Ok(file)
    }

    pub fn build(&self, context: &str) -> Result<RobotModel> {
        let joints = self
            .joints
            .iter()
            .map(|j| {
                Ok(Joint {
                    name: j.name.clone(),
                    origin: j.origin.to_pose().map_err(invalid(context))?,
                    axis: Vector3::from(j.axis),
                    limits: JointLimits::new(j.limits[0], j.limits[1]),
                    velocity_limit: j.velocity_limit,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ee = self.ee_offset.to_pose().map_err(invalid(context))?;
        let chain = KinematicChain::new(self.name.clone(), joints, ee).map_err(invalid(context))?;
        let home = match &self.home {
            Some(h) => JointVector(h.clone()),
            None => chain.home(),
        };
        chain.check_len(&home).map_err(invalid(context))?;
        if !chain.within_limits(&home) {
            return Err(FormatError::Invalid {
                context: context.to_string(),
                source: gl_teleop_core::Error::InvalidModel("home pose violates joint limits".into()),
            });
        }
        let safety = SafetyConfig {
            tracking_error_limit: self.safety.tracking_error_limit,
            workspace_min: Vector3::from(self.safety.workspace_min),
            workspace_max: Vector3::from(self.safety.workspace_max),
            velocity_limits: chain.velocity_limits().collect(),
        };
        safety.validate(chain.dof()).map_err(invalid(context))?;
        Ok(RobotModel {
            chain,
            home,
            safety,
            end_effector: self.end_effector,
        })
    }
}

impl RobotModel {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        RobotModelFile::parse(text, context)?.build(context)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IkSpec {
    #[serde(default = "IkSpec::damping")]
    pub damping: f64,
    #[serde(default = "IkSpec::max_iters")]
    pub max_iters: usize,
    #[serde(default = "IkSpec::pos_tol")]
    pub pos_tol: f64,
    #[serde(default = "IkSpec::ang_tol")]
    pub ang_tol: f64,
    #[serde(default = "IkSpec::max_step")]
    pub max_step: f64,
}

impl IkSpec {
    fn damping() -> f64 {
        IkConfig::default().damping
    }
    fn max_iters() -> usize {
        IkConfig::default().max_iters
    }
    fn pos_tol() -> f64 {
        IkConfig::default().pos_tol
    }
    fn ang_tol() -> f64 {
        IkConfig::default().ang_tol
    }
    fn max_step() -> f64 {
        IkConfig::default().max_step
    }

    pub fn to_config(&self) -> IkConfig {
        IkConfig {
            damping: self.damping,
            max_iters: self.max_iters,
            pos_tol: self.pos_tol,
            ang_tol: self.ang_tol,
            max_step: self.max_step,
        }
    }
}

impl Default for IkSpec {
    fn default() -> Self {
        let c = IkConfig::default();
        Self {
            damping: c.damping,
            max_iters: c.max_iters,
            pos_tol: c.pos_tol,
            ang_tol: c.ang_tol,
            max_step: c.max_step,
        }
    }
}

/// Controller configuration file. Every field has a default, so an empty
/// file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfigFile {
    pub alpha_l: f64,
    pub alpha_r: f64,
    /// Master-to-slave frame alignment, `[w, x, y, z]`.
    pub alignment: [f64; 4],
    /// `"xyz"` or `"xyx"`.
    pub euler: String,
    /// rad/s
    pub mirror_velocity_limit: f64,
    /// rad
    pub mirror_tolerance: f64,
    /// Control loop rate, Hz.
    pub rate_hz: f64,
    /// Slew rate of gripper and hand channels, 1/s.
    pub channel_rate: f64,
    pub ik: IkSpec,
}

impl Default for ControllerConfigFile {
    fn default() -> Self {
        let t = TemporalConfig::default();
        Self {
            alpha_l: 1.0,
            alpha_r: 1.0,
            alignment: identity_quat(),
            euler: "xyz".into(),
            mirror_velocity_limit: t.mirror_velocity_limit,
            mirror_tolerance: t.mirror_tolerance,
            rate_hz: 100.0,
            channel_rate: 2.0,
            ik: IkSpec::default(),
        }
    }
}

/// Validated controller configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub temporal: TemporalConfig,
    pub euler: EulerConvention,
    pub rate_hz: f64,
    pub channel_rate: f64,
    pub ik: IkConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfigFile::default()
            .build("default")
            .expect("default controller config is valid")
    }
}

impl ControllerConfigFile {
    pub fn build(&self, context: &str) -> Result<ControllerConfig> {
        let scaling = ScalingFactors::new(self.alpha_l, self.alpha_r).map_err(invalid(context))?;
        let [w, x, y, z] = self.alignment;
        let alignment = UnitQuaternion::new(w, x, y, z).map_err(invalid(context))?;
        let euler: EulerConvention = self.euler.parse().map_err(invalid(context))?;
        let temporal = TemporalConfig {
            scaling,
            alignment,
            mirror_velocity_limit: self.mirror_velocity_limit,
            mirror_tolerance: self.mirror_tolerance,
            ..TemporalConfig::default()
        };
        temporal.validate().map_err(invalid(context))?;
        let bad = |msg: &str| FormatError::Invalid {
            context: context.to_string(),
            source: gl_teleop_core::Error::InvalidConfig(msg.into()),
        };
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(bad("rate_hz must be positive"));
        }
        if !(self.channel_rate.is_finite() && self.channel_rate > 0.0) {
            return Err(bad("channel_rate must be positive"));
        }
        let ik = self.ik.to_config();
        let ik_ok = ik.damping >= 0.0
            && ik.max_iters > 0
            && ik.pos_tol > 0.0
            && ik.ang_tol > 0.0
            && ik.max_step > 0.0;
        if !ik_ok {
            return Err(bad("ik settings must be positive"));
        }
        Ok(ControllerConfig {
            temporal,
            euler,
            rate_hz: self.rate_hz,
            channel_rate: self.channel_rate,
            ik,
        })
    }
}

impl ControllerConfig {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        parse_toml::<ControllerConfigFile>(text, context)?.build(context)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }
}

/// Hand calibration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandCalibrationFile {
    pub open: [f64; ENCODER_COUNT],
    pub closed: [f64; ENCODER_COUNT],
    #[serde(default = "thumb_links")]
    pub thumb_links: [f64; 2],
    #[serde(default = "index_links")]
    pub index_links: [f64; 2],
    #[serde(default = "thumb_tilt")]
    pub thumb_tilt: f64,
}

fn thumb_links() -> [f64; 2] {
    [0.045, 0.035]
}
fn index_links() -> [f64; 2] {
    [0.045, 0.030]
}
fn thumb_tilt() -> f64 {
    DEFAULT_THUMB_TILT
}

impl HandCalibrationFile {
    pub fn from_calibration(c: &HandCalibration) -> Self {
        Self {
            open: c.open,
            closed: c.closed,
            thumb_links: c.thumb_links,
            index_links: c.index_links,
            thumb_tilt: c.thumb_tilt,
        }
    }

    pub fn build(&self, context: &str) -> Result<HandCalibration> {
        let calib = HandCalibration {
            open: self.open,
            closed: self.closed,
            thumb_links: self.thumb_links,
            index_links: self.index_links,
            thumb_tilt: self.thumb_tilt,
        };
        calib.validate().map_err(invalid(context))?;
        Ok(calib)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("calibration serializes")
    }
}

pub fn parse_hand_calibration(text: &str, context: &str) -> Result<HandCalibration> {
    parse_toml::<HandCalibrationFile>(text, context)?.build(context)
}

pub fn load_hand_calibration(path: &Path) -> Result<HandCalibration> {
    parse_hand_calibration(&read_text(path)?, &path.display().to_string())
}

pub fn default_hand_calibration() -> HandCalibration {
    HandCalibration::new([0.0, 0.0, 0.0, 0.0, 0.0, -0.3], [1.2, 1.3, 1.2, 1.4, 1.3, 0.3])
        .expect("default calibration is valid")
}
