//! Temporal decoupling: a joint-space replica and a clutched stylus take turns
//! driving the same arm, selected by pedals.
//!
//! While the stylus is in control the replica's motors mirror the real slave
//! ([`mirror_update`]). A request to go back to replica control is held
//! (phase [`TemporalPhase::Handover`]) until the replica has caught up, so the
//! joint command never jumps at a switch.

use alloc::vec::Vec;

use crate::command::SlaveCommand;
use crate::controller::clutch::{engage_local, local_target, ClutchAnchor, ScalingFactors};
use crate::error::{Error, Result};
use crate::kinematics::{JointVector, KinematicChain, Pose};
use crate::rotation::UnitQuaternion;
use crate::sim::{move_toward, SlaveState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TeleopMode {
    /// Replica joints drive the slave joints.
    #[default]
    Global,
    /// The stylus drives the end-effector pose.
    Local,
}

impl TeleopMode {
    pub fn name(&self) -> &'static str {
        match self {
            TeleopMode::Global => "Global",
            TeleopMode::Local => "Local",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalPhase {
    Global,
    Local,
    /// Local control, return to Global requested, waiting for the replica.
    Handover,
}

impl TemporalPhase {
    pub fn mode(&self) -> TeleopMode {
        match self {
            TemporalPhase::Global => TeleopMode::Global,
            TemporalPhase::Local | TemporalPhase::Handover => TeleopMode::Local,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalConfig {
    pub scaling: ScalingFactors,
    /// Fixed rotation from the master frame into the slave frame.
    pub alignment: UnitQuaternion,
    /// Replica motor speed while mirroring, rad/s.
    pub mirror_velocity_limit: f64,
    /// `‖replica − slave‖∞` below which the replica counts as converged, rad.
    pub mirror_tolerance: f64,
    /// `‖replica − held command‖∞` allowed when control returns to the replica, rad.
    pub switch_tolerance: f64,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            scaling: ScalingFactors::UNIT,
            alignment: UnitQuaternion::IDENTITY,
            mirror_velocity_limit: 1.0,
            mirror_tolerance: 1e-3,
            switch_tolerance: 1e-9,
        }
    }
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.mirror_velocity_limit) {
            return Err(Error::InvalidConfig("mirror velocity limit must be positive".into()));
        }
        if !positive(self.mirror_tolerance) || !(self.switch_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("handover tolerances must be positive".into()));
        }
        // Re-check in case the factors were built by hand.
        ScalingFactors::new(self.scaling.alpha_l(), self.scaling.alpha_r())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalInputs {
    pub replica: JointVector,
    pub haptic: Pose,
    /// Mode selected by the pedals.
    pub requested: TeleopMode,
    pub gripper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerEvent {
    Engaged(ClutchAnchor),
    HandoverRequested,
    HandoverGranted { mirror_error: f64 },
    HandoverCancelled,
    /// Replica values outside the slave's limits were clamped.
    ReplicaClamped(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOutput {
    /// Exactly one arm command: a joint target in Global, a Cartesian target in Local.
    pub arm: SlaveCommand,
    pub gripper: Option<SlaveCommand>,
    /// Position the replica's motors should take this tick (mirroring), if any.
    pub replica_drive: Option<JointVector>,
    pub phase: TemporalPhase,
    pub events: Vec<ControllerEvent>,
}

impl TemporalOutput {
    pub fn commands(&self) -> Vec<SlaveCommand> {
        let mut out = Vec::with_capacity(2);
        out.push(self.arm.clone());
        out.extend(self.gripper.clone());
        out
    }

    pub fn mode(&self) -> TeleopMode {
        self.phase.mode()
    }
}

/// Moves the replica toward the slave by at most `vel_limit · dt` per joint.
pub fn mirror_update(
    replica: &JointVector,
    slave: &JointVector,
    vel_limit: f64,
    dt: f64,
) -> Result<JointVector> {
    if replica.len() != slave.len() {
        return Err(Error::DofMismatch {
            expected: slave.len(),
            actual: replica.len(),
        });
    }
    let max = vel_limit * dt;
    Ok(JointVector(
        replica
            .iter()
            .zip(slave.iter())
            .map(|(&r, &s)| move_toward(r, s, max))
            .collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct TemporalController {
    chain: KinematicChain,
    config: TemporalConfig,
    phase: TemporalPhase,
    anchor: Option<ClutchAnchor>,
    held_target: Option<Pose>,
}

impl TemporalController {
    pub fn new(chain: KinematicChain, config: TemporalConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            chain,
            config,
            phase: TemporalPhase::Global,
            anchor: None,
            held_target: None,
        })
    }

    pub fn phase(&self) -> TemporalPhase {
        self.phase
    }

    pub fn mode(&self) -> TeleopMode {
        self.phase.mode()
    }

    pub fn anchor(&self) -> Option<&ClutchAnchor> {
        self.anchor.as_ref()
    }

    pub fn config(&self) -> &TemporalConfig {
        &self.config
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn set_scaling(&mut self, scaling: ScalingFactors) {
        self.config.scaling = scaling;
    }

    /// True when a return to Global would be granted with this replica reading.
    pub fn handover_ready(&self, replica: &JointVector, slave: &SlaveState) -> bool {
        replica.max_abs_diff(&slave.joints) < self.config.mirror_tolerance
            && replica.max_abs_diff(&slave.commanded) <= self.config.switch_tolerance
    }

    pub fn step(
        &mut self,
        inputs: &TemporalInputs,
        slave: &SlaveState,
        dt: f64,
    ) -> Result<TemporalOutput> {
        self.chain.check_len(&inputs.replica)?;
        self.chain.check_len(&slave.joints)?;
        if !inputs.replica.is_finite() {
            return Err(Error::NonFinite("replica joints"));
        }
        let gripper = match inputs.gripper {
            Some(g) if !g.is_finite() => return Err(Error::NonFinite("gripper")),
            Some(g) => Some(SlaveCommand::GripperTarget(g.clamp(0.0, 1.0))),
            None => None,
        };
        let mut events = Vec::new();

        match (self.phase, inputs.requested) {
            (TemporalPhase::Global, TeleopMode::Local) => {
                self.engage(&inputs.haptic, slave, &mut events)?;
            }
            (TemporalPhase::Local, TeleopMode::Global) => {
                self.phase = TemporalPhase::Handover;
                events.push(ControllerEvent::HandoverRequested);
            }
            (TemporalPhase::Handover, TeleopMode::Local) => {
                // Re-pressing the local pedal restarts the clutch from here.
                events.push(ControllerEvent::HandoverCancelled);
                self.engage(&inputs.haptic, slave, &mut events)?;
            }
            _ => {}
        }

        let (arm, replica_drive) = match self.phase {
            TemporalPhase::Global => (self.replica_command(&inputs.replica, &mut events), None),
            TemporalPhase::Local => {
                let mirrored = self.mirror(&inputs.replica, slave, dt)?;
                let anchor = self.anchor.as_ref().ok_or(Error::InvalidConfig(
                    "local mode without a clutch anchor".into(),
                ))?;
                let target = local_target(
                    anchor,
                    &inputs.haptic,
                    &self.config.scaling,
                    &self.config.alignment,
                )?;
                self.held_target = Some(target);
                (SlaveCommand::CartesianTarget(target), Some(mirrored))
            }
            TemporalPhase::Handover => {
                let mirrored = self.mirror(&inputs.replica, slave, dt)?;
                if self.handover_ready(&mirrored, slave) {
                    self.phase = TemporalPhase::Global;
                    self.anchor = None;
                    self.held_target = None;
                    events.push(ControllerEvent::HandoverGranted {
                        mirror_error: mirrored.max_abs_diff(&slave.joints),
                    });
                    (self.replica_command(&mirrored, &mut events), Some(mirrored))
                } else {
                    let held = self.held_target.ok_or(Error::InvalidConfig(
                        "handover without a held target".into(),
                    ))?;
                    (SlaveCommand::CartesianTarget(held), Some(mirrored))
                }
            }
        };

        Ok(TemporalOutput {
            arm,
            gripper,
            replica_drive,
            phase: self.phase,
            events,
        })
    }

    /// Anchors the clutch at the pose of the joint target the slave is
    /// tracking. At rest this is the measured end-effector pose; while the arm
    /// is still catching up it keeps the first Local command equal to the last
    /// Global one.
    fn engage(
        &mut self,
        haptic: &Pose,
        slave: &SlaveState,
        events: &mut Vec<ControllerEvent>,
    ) -> Result<()> {
        if !haptic.is_finite() {
            return Err(Error::NonFinite("haptic pose"));
        }
        let ee = self.chain.forward_kinematics(&slave.commanded)?;
        let anchor = engage_local(haptic, &ee);
        self.anchor = Some(anchor);
        self.held_target = Some(ee);
        self.phase = TemporalPhase::Local;
        events.push(ControllerEvent::Engaged(anchor));
        Ok(())
    }

    fn mirror(&self, replica: &JointVector, slave: &SlaveState, dt: f64) -> Result<JointVector> {
        mirror_update(replica, &slave.joints, self.config.mirror_velocity_limit, dt)
    }

    fn replica_command(
        &self,
        replica: &JointVector,
        events: &mut Vec<ControllerEvent>,
    ) -> SlaveCommand {
        let clamped = self.chain.clamp(replica);
        let changed: Vec<usize> = clamped
            .iter()
            .zip(replica.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        if !changed.is_empty() {
            events.push(ControllerEvent::ReplicaClamped(changed));
        }
        SlaveCommand::JointTarget(clamped)
    }
}
