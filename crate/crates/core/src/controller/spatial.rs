//! Spatial decoupling: proximal joints from a replica, wrist joints from two IMUs.

use alloc::vec::Vec;

use crate::command::SlaveCommand;
use crate::error::{Error, Result};
use crate::hand::HandTarget;
use crate::kinematics::{JointVector, KinematicChain};
use crate::rotation::{extract_euler, EulerConvention, EulerTriple, RotationMatrix};

/// Number of distal joints driven by the wrist mapping.
pub const WRIST_JOINTS: usize = 3;

/// IMU orientations recorded once when the session starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuCalibration {
    /// Forearm home orientation.
    pub forearm_home: RotationMatrix,
    /// Hand home orientation.
    pub hand_home: RotationMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuPair {
    pub forearm: RotationMatrix,
    pub hand: RotationMatrix,
}

/// Wrist rotation `R₁⁻¹ · R₁ⁱ · (R₂ⁱ)⁻¹ · R₂` from home and current IMU
/// orientations (forearm = 1, hand = 2).
pub fn wrist_rotation(calib: &ImuCalibration, now: &ImuPair) -> RotationMatrix {
    let forearm = now.forearm.inverse() * calib.forearm_home;
    let hand = calib.hand_home.inverse() * now.hand;
    forearm * hand
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialOutput {
    pub arm: SlaveCommand,
    pub hand: Option<SlaveCommand>,
    /// Joint indices that were clamped to the chain limits this tick.
    pub clamped: Vec<usize>,
    pub wrist: EulerTriple,
}

impl SpatialOutput {
    pub fn commands(&self) -> Vec<SlaveCommand> {
        let mut out = Vec::with_capacity(2);
        out.push(self.arm.clone());
        out.extend(self.hand.clone());
        out
    }
}

#[derive(Debug, Clone)]
pub struct SpatialController {
    chain: KinematicChain,
    calibration: ImuCalibration,
    convention: EulerConvention,
}

impl SpatialController {
    pub fn new(
        chain: KinematicChain,
        calibration: ImuCalibration,
        convention: EulerConvention,
    ) -> Result<Self> {
        if chain.dof() <= WRIST_JOINTS {
            return Err(Error::InvalidModel(alloc::format!(
                "spatial decoupling needs more than {WRIST_JOINTS} joints, chain has {}",
                chain.dof()
            )));
        }
        Ok(Self {
            chain,
            calibration,
            convention,
        })
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn calibration(&self) -> &ImuCalibration {
        &self.calibration
    }

    /// Records new home orientations.
    pub fn recalibrate(&mut self, calibration: ImuCalibration) {
        self.calibration = calibration;
    }

    /// Number of joints the replica provides.
    pub fn replica_dof(&self) -> usize {
        self.chain.dof() - WRIST_JOINTS
    }

    /// Joint command covering every joint: replica values for the proximal
    /// joints and wrist Euler angles for the last three, clamped to limits.
    pub fn step(
        &self,
        replica: &JointVector,
        imus: &ImuPair,
        hand: Option<HandTarget>,
    ) -> Result<SpatialOutput> {
        if replica.len() != self.replica_dof() {
            return Err(Error::DofMismatch {
                expected: self.replica_dof(),
                actual: replica.len(),
            });
        }
        if !replica.is_finite() {
            return Err(Error::NonFinite("replica joints"));
        }
        let wrist = extract_euler(&wrist_rotation(&self.calibration, imus), self.convention);
        let mut joints = Vec::with_capacity(self.chain.dof());
        joints.extend_from_slice(replica);
        joints.extend_from_slice(&wrist.angles());

        let mut clamped = Vec::new();
        for (i, (value, joint)) in joints.iter_mut().zip(self.chain.joints()).enumerate() {
            let limited = joint.limits.clamp(*value);
            if limited != *value {
                clamped.push(i);
                *value = limited;
            }
        }
        Ok(SpatialOutput {
            arm: SlaveCommand::JointTarget(JointVector(joints)),
            hand: hand.map(SlaveCommand::HandTarget),
            clamped,
            wrist,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{Joint, JointLimits, Pose};
    use core::f64::consts::{FRAC_PI_2, PI};
    use nalgebra::Vector3;

    fn chain7() -> KinematicChain {
        let axes = [
            Vector3::z(),
            Vector3::y(),
            Vector3::z(),
            Vector3::y(),
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
        ];
        let joints = axes
            .iter()
            .enumerate()
            .map(|(i, axis)| Joint {
                name: alloc::format!("j{i}"),
                origin: Pose::from_translation(0.0, 0.0, 0.1),
                axis: *axis,
                limits: JointLimits::new(-PI, PI),
                velocity_limit: 1.0,
            })
            .collect();
        KinematicChain::new("test7", joints, Pose::IDENTITY).unwrap()
    }

    fn controller() -> SpatialController {
        let calib = ImuCalibration {
            forearm_home: RotationMatrix::rz(0.4) * RotationMatrix::rx(0.2),
            hand_home: RotationMatrix::ry(-0.7),
        };
        SpatialController::new(chain7(), calib, EulerConvention::Xyz).unwrap()
    }

    fn with_wrist(ctl: &SpatialController, s: RotationMatrix) -> ImuPair {
        ImuPair {
            forearm: ctl.calibration().forearm_home,
            hand: ctl.calibration().hand_home * s,
        }
    }

    #[test]
    fn home_pose_gives_identity() {
        let ctl = controller();
        let r = wrist_rotation(ctl.calibration(), &with_wrist(&ctl, RotationMatrix::identity()));
        assert!(r.frobenius_distance(&RotationMatrix::identity()) < 1e-15);
    }

    #[test]
    fn identity_wrist_passes_replica_through() {
        let identity = ImuPair {
            forearm: RotationMatrix::identity(),
            hand: RotationMatrix::identity(),
        };
        let calib = ImuCalibration {
            forearm_home: identity.forearm,
            hand_home: identity.hand,
        };
        let ctl = SpatialController::new(chain7(), calib, EulerConvention::Xyz).unwrap();
        let imus = identity;
        let out = ctl.step(&[0.1, 0.2, 0.3, 0.4].into(), &imus, None).unwrap();
        assert_eq!(
            out.arm,
            SlaveCommand::JointTarget([0.1, 0.2, 0.3, 0.4, 0.0, 0.0, 0.0].into())
        );
        assert!(out.clamped.is_empty());
    }

    #[test]
    fn single_axis_wrist() {
        let ctl = controller();
        let out = ctl
            .step(&[0.0; 4].into(), &with_wrist(&ctl, RotationMatrix::rx(0.3)), None)
            .unwrap();
        let SlaveCommand::JointTarget(q) = out.arm else {
            panic!("expected joint target")
        };
        assert!((q[4] - 0.3).abs() < 1e-12 && q[5].abs() < 1e-12 && q[6].abs() < 1e-12);
    }

    #[test]
    fn gimbal_wrist_recomposes() {
        let ctl = controller();
        let s = RotationMatrix::ry(FRAC_PI_2);
        let out = ctl.step(&[0.0; 4].into(), &with_wrist(&ctl, s), None).unwrap();
        assert!((out.wrist.b - FRAC_PI_2).abs() < 1e-7);
        assert_eq!(out.wrist.c, 0.0);
        assert!(crate::rotation::compose_euler(&out.wrist).frobenius_distance(&s) < 1e-9);
    }

    #[test]
    fn wrong_replica_length() {
        let ctl = controller();
        let imus = with_wrist(&ctl, RotationMatrix::identity());
        assert_eq!(
            ctl.step(&[0.0; 7].into(), &imus, None).unwrap_err(),
            Error::DofMismatch {
                expected: 4,
                actual: 7
            }
        );
    }

    #[test]
    fn wrist_beyond_limits_is_clamped() {
        let mut joints: Vec<Joint> = chain7().joints().to_vec();
        joints[4].limits = JointLimits::new(-0.5, 0.5);
        let chain = KinematicChain::new("limited", joints, Pose::IDENTITY).unwrap();
        let ctl = SpatialController::new(chain, *controller().calibration(), EulerConvention::Xyz)
            .unwrap();
        let out = ctl
            .step(&[0.0; 4].into(), &with_wrist(&ctl, RotationMatrix::rx(1.2)), None)
            .unwrap();
        assert_eq!(out.clamped, alloc::vec![4]);
        let SlaveCommand::JointTarget(q) = out.arm else {
            panic!()
        };
        assert_eq!(q[4], 0.5);
    }
}
