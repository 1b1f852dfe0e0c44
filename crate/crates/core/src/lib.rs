//! Core of a global-local teleoperation stack.
//!
//! Everything here is pure computation over owned values and builds without
//! `std`. File formats, the wire protocol, the scenario harness and the
//! command-line tool live in the `gl-teleop` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod command;
pub mod controller;
pub mod error;
pub mod hand;
pub mod kinematics;
pub mod math;
pub mod rotation;
pub mod sim;

pub use nalgebra;
pub use command::SlaveCommand;
pub use error::{Error, Result};
pub use hand::{ExoskeletonReading, HandCalibration, HandTarget};
pub use kinematics::{IkConfig, IkSolution, Joint, JointLimits, JointVector, KinematicChain, Pose};
pub use rotation::{
    compose_euler, extract_euler, scaled_displacement, AxisAngle, EulerConvention, EulerTriple,
    RotationMatrix, UnitQuaternion,
};
pub use sim::{SafetyConfig, SimSlave, SlaveState};
