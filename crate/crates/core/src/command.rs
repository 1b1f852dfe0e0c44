use crate::hand::HandTarget;
use crate::kinematics::{JointVector, Pose};

/// One command for the simulated slave.
#[derive(Debug, Clone, PartialEq)]
pub enum SlaveCommand {
    JointTarget(JointVector),
    CartesianTarget(Pose),
    /// 0 = open, 1 = closed
    GripperTarget(f64),
    HandTarget(HandTarget),
}

impl SlaveCommand {
    pub fn is_finite(&self) -> bool {
        match self {
            SlaveCommand::JointTarget(q) => q.is_finite(),
            SlaveCommand::CartesianTarget(p) => p.is_finite(),
            SlaveCommand::GripperTarget(g) => g.is_finite(),
            SlaveCommand::HandTarget(h) => h.0.iter().all(|v| v.is_finite()),
        }
    }

    /// True for commands that drive the arm joints.
    pub fn is_arm(&self) -> bool {
        matches!(
            self,
            SlaveCommand::JointTarget(_) | SlaveCommand::CartesianTarget(_)
        )
    }
}
