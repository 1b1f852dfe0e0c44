//! Serial revolute chains: forward kinematics, geometric Jacobian and a
//! damped-least-squares IK solver.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::{Deref, Index, Mul};

use nalgebra::{Matrix6, Matrix6xX, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::rotation::{AxisAngle, UnitQuaternion};

/// Position in meters plus orientation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        position: Vector3::new(0.0, 0.0, 0.0),
        orientation: UnitQuaternion::IDENTITY,
    };

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::IDENTITY)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.to_array().iter().all(|v| v.is_finite())
    }

    /// `self ∘ rhs`: `rhs` expressed in the frame of `self`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation.rotate(&rhs.position),
            orientation: self.orientation.compose(&rhs.orientation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -inv.rotate(&self.position),
            orientation: inv,
        }
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// One revolute joint: a fixed transform from the previous joint frame,
/// followed by a rotation about `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub origin: Pose,
    pub axis: Vector3<f64>,
    pub limits: JointLimits,
    /// rad/s
    pub velocity_limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    name: String,
    joints: Vec<Joint>,
    ee_offset: Pose,
}

impl KinematicChain {
    pub fn new(name: impl Into<String>, joints: Vec<Joint>, ee_offset: Pose) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::InvalidModel("chain has no joints".into()));
        }
        if !ee_offset.is_finite() {
            return Err(Error::InvalidModel("end-effector offset is not finite".into()));
        }
        for j in &joints {
            if !j.origin.is_finite() {
                return Err(Error::InvalidModel(format!("joint {}: origin not finite", j.name)));
            }
            if !(j.limits.min.is_finite() && j.limits.max.is_finite())
                || j.limits.min >= j.limits.max
            {
                return Err(Error::InvalidModel(format!(
                    "joint {}: limits [{}, {}] must satisfy min < max",
                    j.name, j.limits.min, j.limits.max
                )));
            }
            if !(j.velocity_limit.is_finite() && j.velocity_limit > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "joint {}: velocity limit must be positive",
                    j.name
                )));
            }
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidModel(format!(
                    "joint {}: axis is not unit length",
                    j.name
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            joints,
            ee_offset,
        })
    }

    /// Planar chain of z-axis revolute joints with links along x. Limits are
    /// (−π, π] and velocity limits 1 rad/s.
    pub fn planar(link_lengths: &[f64]) -> Result<Self> {
        let mut joints = Vec::with_capacity(link_lengths.len());
        let mut previous = 0.0;
        for (i, &len) in link_lengths.iter().enumerate() {
            joints.push(Joint {
                name: format!("j{}", i + 1),
                origin: Pose::from_translation(previous, 0.0, 0.0),
                axis: Vector3::z(),
                limits: JointLimits::new(-core::f64::consts::PI, core::f64::consts::PI),
                velocity_limit: 1.0,
            });
            previous = len;
        }
        Self::new("planar", joints, Pose::from_translation(previous, 0.0, 0.0))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn ee_offset(&self) -> &Pose {
        &self.ee_offset
    }

    pub fn limits(&self) -> impl Iterator<Item = JointLimits> + '_ {
        self.joints.iter().map(|j| j.limits)
    }

    pub fn velocity_limits(&self) -> impl Iterator<Item = f64> + '_ {
        self.joints.iter().map(|j| j.velocity_limit)
    }

    /// All-zero joints, clamped into the limits.
    pub fn home(&self) -> JointVector {
        JointVector(
            self.joints
                .iter()
                .map(|j| j.limits.clamp(0.0))
                .collect(),
        )
    }

    pub fn check_len(&self, q: &JointVector) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DofMismatch {
                expected: self.dof(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(q.iter()).all(|(j, &v)| j.limits.contains(v))
    }

    pub fn clamp(&self, q: &JointVector) -> JointVector {
        JointVector(
            self.joints
                .iter()
                .zip(q.iter())
                .map(|(j, &v)| j.limits.clamp(v))
                .collect(),
        )
    }

    /// World-frame joint origins and axes, plus the end-effector pose.
    fn frames(&self, q: &[f64]) -> (Vec<(Vector3<f64>, Vector3<f64>)>, Pose) {
        let mut frames = Vec::with_capacity(self.dof());
        let mut t = Pose::IDENTITY;
        for (joint, &angle) in self.joints.iter().zip(q) {
            t = t.compose(&joint.origin);
            let axis_world = t.orientation.rotate(&joint.axis);
            frames.push((t.position, axis_world));
            let rot = UnitQuaternion::from_axis_angle(&AxisAngle {
                axis: joint.axis,
                angle,
            });
            t = Pose {
                position: t.position,
                orientation: t.orientation.compose(&rot),
            };
        }
        (frames, t.compose(&self.ee_offset))
    }

    pub fn forward_kinematics(&self, q: &JointVector) -> Result<Pose> {
        self.check_len(q)?;
        Ok(self.frames(q).1)
    }

    /// Geometric Jacobian: rows 0..3 linear velocity (m/rad), rows 3..6
    /// angular velocity (rad/rad), both in the world frame.
    pub fn jacobian(&self, q: &JointVector) -> Result<Matrix6xX<f64>> {
        self.check_len(q)?;
        let (frames, ee) = self.frames(q);
        Ok(Self::jacobian_from_frames(&frames, &ee))
    }

    fn jacobian_from_frames(frames: &[(Vector3<f64>, Vector3<f64>)], ee: &Pose) -> Matrix6xX<f64> {
        let mut jac = Matrix6xX::zeros(frames.len());
        for (i, (origin, axis)) in frames.iter().enumerate() {
            let linear = axis.cross(&(ee.position - origin));
            jac.fixed_view_mut::<3, 1>(0, i).copy_from(&linear);
            jac.fixed_view_mut::<3, 1>(3, i).copy_from(axis);
        }
        jac
    }

    pub fn solve_ik(&self, target: &Pose, seed: &JointVector, cfg: &IkConfig) -> Result<IkSolution> {
        if !target.is_finite() {
            return Err(Error::NonFinite("IK target"));
        }
        self.check_len(seed)?;
        if seed.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("IK seed"));
        }
        let mut q = self.clamp(seed);
        let damping_sq = cfg.damping * cfg.damping;
        let mut best: Option<IkSolution> = None;

        for iteration in 0..=cfg.max_iters {
            let (frames, ee) = self.frames(&q);
            let err_pos = target.position - ee.position;
            let err_rot = target.orientation.compose(&ee.orientation.inverse()).log();
            let solution = IkSolution {
                joints: q.clone(),
                residual_position: err_pos.norm(),
                residual_angle: err_rot.norm(),
                iterations: iteration,
                converged: false,
            };
            if solution.residual_position < cfg.pos_tol && solution.residual_angle < cfg.ang_tol {
                return Ok(IkSolution {
                    converged: true,
                    ..solution
                });
            }
            let better = best
                .as_ref()
                .is_none_or(|b| solution.score(cfg) < b.score(cfg));
            if better {
                best = Some(solution);
            }
            if iteration == cfg.max_iters {
                break;
            }

            let jac = Self::jacobian_from_frames(&frames, &ee);
            let twist = Vector6::new(
                err_pos.x, err_pos.y, err_pos.z, err_rot.x, err_rot.y, err_rot.z,
            );
            let gram: Matrix6<f64> = &jac * jac.transpose() + Matrix6::identity() * damping_sq;
            let Some(chol) = gram.cholesky() else {
                break;
            };
            let mut step = jac.transpose() * chol.solve(&twist);
            let norm = step.norm();
            if norm > cfg.max_step {
                step *= cfg.max_step / norm;
            }
            for ((value, delta), joint) in q.0.iter_mut().zip(step.iter()).zip(&self.joints) {
                *value = joint.limits.clamp(*value + delta);
            }
        }
        // `best` is always set: the loop body runs at least once.
        Ok(best.unwrap_or_else(|| IkSolution {
            joints: q,
            residual_position: f64::INFINITY,
            residual_angle: f64::INFINITY,
            iterations: 0,
            converged: false,
        }))
    }
}

/// Joint values in radians, ordered base to tip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(n: usize) -> Self {
        Self(alloc::vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `max_i |self_i − other_i|`; infinite when the lengths differ.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for JointVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for JointVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for JointVector {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iters: usize,
    /// meters
    pub pos_tol: f64,
    /// radians
    pub ang_tol: f64,
    /// Cap on the Euclidean norm of one iteration's joint step, radians.
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iters: 200,
            pos_tol: 1e-4,
            ang_tol: 1e-3,
            max_step: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub joints: JointVector,
    pub residual_position: f64,
    pub residual_angle: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl IkSolution {
    fn score(&self, cfg: &IkConfig) -> f64 {
        (self.residual_position / cfg.pos_tol).max(self.residual_angle / cfg.ang_tol)
    }
}
