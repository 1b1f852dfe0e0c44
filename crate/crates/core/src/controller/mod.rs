//! Master-to-slave mapping for the two decoupling schemes.
//!
//! [`temporal`] alternates a joint-space replica (global) and a clutched
//! Cartesian stylus (local) over the same joints. [`spatial`] drives the
//! proximal joints from a replica and the three wrist joints from a pair of
//! IMUs at the same time.

pub mod clutch;
pub mod spatial;
pub mod temporal;

pub use clutch::{engage_local, local_target, ClutchAnchor, ScalingFactors};
pub use spatial::{wrist_rotation, ImuCalibration, ImuPair, SpatialController, SpatialOutput};
pub use temporal::{
    mirror_update, ControllerEvent, TeleopMode, TemporalConfig, TemporalController,
    TemporalInputs, TemporalOutput, TemporalPhase,
};
