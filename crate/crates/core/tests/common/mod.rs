#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use gl_teleop_core::kinematics::{Joint, JointLimits, JointVector, KinematicChain, Pose};
use gl_teleop_core::rotation::{AxisAngle, UnitQuaternion};
use nalgebra::{Matrix6xX, Vector3};
use rand::Rng;

/// Seven-joint arm with alternating z/y axes and a right-angle tool mount.
pub fn arm7() -> KinematicChain {
    let spec: [(f64, Vector3<f64>, f64); 7] = [
        (0.155, Vector3::z(), 2.79),
        (0.210, Vector3::y(), 2.23),
        (0.210, Vector3::z(), 2.96),
        (0.200, Vector3::y(), 2.67),
        (0.190, Vector3::z(), 2.96),
        (0.105, Vector3::y(), 1.39),
        (0.060, Vector3::z(), 2.96),
    ];
    let joints = spec
        .iter()
        .enumerate()
        .map(|(i, (offset, axis, limit))| Joint {
            name: format!("joint{}", i + 1),
            origin: Pose::from_translation(0.0, 0.0, *offset),
            axis: *axis,
            limits: JointLimits::new(-limit, *limit),
            velocity_limit: 2.0,
        })
        .collect();
    let mount = Pose::new(
        Vector3::new(0.0, 0.0, 0.08),
        UnitQuaternion::from_axis_angle(&AxisAngle::about_y(FRAC_PI_2)),
    );
    KinematicChain::new("arm7", joints, mount).unwrap()
}

pub fn random_joints(chain: &KinematicChain, rng: &mut impl Rng) -> JointVector {
    JointVector(
        chain
            .limits()
            .map(|l| rng.random_range(l.min..=l.max))
            .collect(),
    )
}

/// Central-difference Jacobian: linear rows from positions, angular rows from
/// the world-frame rotation vector between the perturbed orientations.
pub fn finite_difference_jacobian(chain: &KinematicChain, q: &JointVector, h: f64) -> Matrix6xX<f64> {
    let mut jac = Matrix6xX::zeros(chain.dof());
    for i in 0..chain.dof() {
        let mut plus = q.clone();
        let mut minus = q.clone();
        plus.0[i] += h;
        minus.0[i] -= h;
        let p = chain.forward_kinematics(&plus).unwrap();
        let m = chain.forward_kinematics(&minus).unwrap();
        let lin = (p.position - m.position) / (2.0 * h);
        let ang = p.orientation.compose(&m.orientation.inverse()).log() / (2.0 * h);
        for r in 0..3 {
            jac[(r, i)] = lin[r];
            jac[(r + 3, i)] = ang[r];
        }
    }
    jac
}
