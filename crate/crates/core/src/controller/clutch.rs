//! Clutched, scaled stylus-to-end-effector mapping.

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::rotation::{scaled_displacement, AxisAngle, UnitQuaternion};

/// Linear (`alpha_l`) and rotational (`alpha_r`) motion scaling, both in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFactors {
    alpha_l: f64,
    alpha_r: f64,
}

impl ScalingFactors {
    pub const UNIT: ScalingFactors = ScalingFactors {
        alpha_l: 1.0,
        alpha_r: 1.0,
    };

    pub fn new(alpha_l: f64, alpha_r: f64) -> Result<Self> {
        for (name, value) in [("alpha_l", alpha_l), ("alpha_r", alpha_r)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(Error::ScalingOutOfRange { name, value });
            }
        }
        Ok(Self { alpha_l, alpha_r })
    }

    pub fn alpha_l(&self) -> f64 {
        self.alpha_l
    }

    pub fn alpha_r(&self) -> f64 {
        self.alpha_r
    }
}

impl Default for ScalingFactors {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Stylus origin and slave end-effector pose captured when local control engages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClutchAnchor {
    pub p0: nalgebra::Vector3<f64>,
    pub q0: UnitQuaternion,
    pub ee_anchor: Pose,
}

pub fn engage_local(haptic: &Pose, slave_ee: &Pose) -> ClutchAnchor {
    ClutchAnchor {
        p0: haptic.position,
        q0: haptic.orientation,
        ee_anchor: *slave_ee,
    }
}

/// Cartesian end-effector target for the current stylus pose.
///
/// Position: `ee_anchor.position + alpha_l · A(p − p0)`. Orientation:
/// `ee_anchor.orientation ⊗ exp(A v, alpha_r θ)` where `(v, θ)` is the stylus
/// rotation since engage, `A` is the fixed master-to-slave alignment, and the
/// increment is applied in the end-effector body frame. The map depends only
/// on the anchor, never on the slave's current pose, so re-evaluating it every
/// tick does not accumulate drift.
pub fn local_target(
    anchor: &ClutchAnchor,
    haptic: &Pose,
    scale: &ScalingFactors,
    alignment: &UnitQuaternion,
) -> Result<Pose> {
    if !haptic.is_finite() {
        return Err(Error::NonFinite("haptic pose"));
    }
    let offset = alignment.rotate(&(haptic.position - anchor.p0)) * scale.alpha_l;
    let increment = scaled_displacement(&anchor.q0, &haptic.orientation, scale.alpha_r)?;
    let increment = AxisAngle {
        axis: alignment.rotate(&increment.axis),
        angle: increment.angle,
    };
    Ok(Pose {
        position: anchor.ee_anchor.position + offset,
        orientation: anchor
            .ee_anchor
            .orientation
            .compose(&UnitQuaternion::from_axis_angle(&increment)),
    })
}
