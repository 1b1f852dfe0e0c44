//! Deterministic fixed-timestep kinematic slave.
//!
//! Joints move toward their target at most `velocity_limit · dt` per tick and
//! land on the target exactly once within reach. Torque limits are proxied by
//! the gap between target and actual joints: a gap above
//! [`SafetyConfig::tracking_error_limit`] latches an e-stop, as does the end
//! effector leaving the workspace box. Nothing moves while e-stopped.

use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::command::SlaveCommand;
use crate::error::{Error, Result};
use crate::hand::HandTarget;
use crate::kinematics::{IkConfig, JointVector, KinematicChain, Pose};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyConfig {
    /// radians, per joint
    pub tracking_error_limit: f64,
    /// meters, axis-aligned box in the base frame
    pub workspace_min: Vector3<f64>,
    pub workspace_max: Vector3<f64>,
    /// rad/s, one per joint
    pub velocity_limits: Vec<f64>,
}

impl SafetyConfig {
    /// Velocity limits from the chain, a 0.5 rad tracking threshold and a 2 m box.
    pub fn for_chain(chain: &KinematicChain) -> Self {
        Self {
            tracking_error_limit: 0.5,
            workspace_min: Vector3::new(-2.0, -2.0, -2.0),
            workspace_max: Vector3::new(2.0, 2.0, 2.0),
            velocity_limits: chain.velocity_limits().collect(),
        }
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        if !(self.tracking_error_limit.is_finite() && self.tracking_error_limit > 0.0) {
            return Err(Error::InvalidConfig("tracking error limit must be positive".into()));
        }
        if self.velocity_limits.len() != dof {
            return Err(Error::DofMismatch {
                expected: dof,
                actual: self.velocity_limits.len(),
            });
        }
        if self.velocity_limits.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidConfig("velocity limits must be positive".into()));
        }
        let box_ok = (0..3).all(|i| {
            self.workspace_min[i].is_finite()
                && self.workspace_max[i].is_finite()
                && self.workspace_min[i] < self.workspace_max[i]
        });
        if !box_ok {
            return Err(Error::InvalidConfig("workspace box must have min < max".into()));
        }
        Ok(())
    }

    pub fn in_workspace(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.workspace_min[i] && p[i] <= self.workspace_max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstopReason {
    TrackingError { joint: usize, error: f64 },
    Workspace { position: Vector3<f64> },
    /// Requested over the protocol.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaveState {
    pub joints: JointVector,
    /// rad/s over the last tick
    pub velocities: JointVector,
    /// Forward kinematics of `joints`.
    pub ee_pose: Pose,
    /// Joint target the arm is tracking: the last joint command or IK solution.
    pub commanded: JointVector,
    pub gripper: f64,
    pub hand: HandTarget,
    pub estopped: bool,
    pub estop_reason: Option<EstopReason>,
    pub tick: u64,
    /// seconds, always `tick · dt`
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// IK did not converge; the arm held position this tick.
    IkSafeHold {
        residual_position: f64,
        residual_angle: f64,
    },
    EstopLatched(EstopReason),
    /// Commands arrived while e-stopped and were dropped.
    IgnoredWhileEstopped,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl StepReport {
    pub fn ik_safe_hold(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| matches!(d, Diagnostic::IkSafeHold { .. }))
    }
}

#[derive(Debug, Clone)]
pub struct SimSlave {
    chain: KinematicChain,
    safety: SafetyConfig,
    ik: IkConfig,
    dt: f64,
    home: JointVector,
    /// Slew rate of gripper and hand channels, 1/s.
    pub channel_rate: f64,
    gripper_target: f64,
    hand_target: HandTarget,
    state: SlaveState,
}

impl SimSlave {
    pub fn new(
        chain: KinematicChain,
        safety: SafetyConfig,
        ik: IkConfig,
        dt: f64,
        home: JointVector,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        safety.validate(chain.dof())?;
        chain.check_len(&home)?;
        if !chain.within_limits(&home) {
            return Err(Error::InvalidConfig("home pose violates joint limits".into()));
        }
        let state = Self::home_state(&chain, &home)?;
        Ok(Self {
            chain,
            safety,
            ik,
            dt,
            home,
            channel_rate: 2.0,
            gripper_target: 0.0,
            hand_target: HandTarget::default(),
            state,
        })
    }

    fn home_state(chain: &KinematicChain, home: &JointVector) -> Result<SlaveState> {
        Ok(SlaveState {
            joints: home.clone(),
            velocities: JointVector::zeros(chain.dof()),
            ee_pose: chain.forward_kinematics(home)?,
            commanded: home.clone(),
            gripper: 0.0,
            hand: HandTarget::default(),
            estopped: false,
            estop_reason: None,
            tick: 0,
            time: 0.0,
        })
    }

    pub fn state(&self) -> &SlaveState {
        &self.state
    }

    pub fn chain(&self) -> &KinematicChain {
        &self.chain
    }

    pub fn safety(&self) -> &SafetyConfig {
        &self.safety
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Back to home joints, e-stop cleared, tick 0.
    pub fn reset(&mut self) -> &SlaveState {
        // home was validated in `new`, so FK cannot fail here.
        if let Ok(state) = Self::home_state(&self.chain, &self.home) {
            self.state = state;
        }
        self.gripper_target = 0.0;
        self.hand_target = HandTarget::default();
        &self.state
    }

    /// Latches an e-stop without moving.
    pub fn estop(&mut self) {
        self.latch(EstopReason::External);
    }

    fn latch(&mut self, reason: EstopReason) {
        if !self.state.estopped {
            self.state.estopped = true;
            self.state.estop_reason = Some(reason);
        }
        self.state.velocities = JointVector::zeros(self.chain.dof());
    }

    /// Applies `commands` (later arm commands override earlier ones) and
    /// advances one tick.
    pub fn step(&mut self, commands: &[SlaveCommand]) -> Result<StepReport> {
        for cmd in commands {
            if !cmd.is_finite() {
                return Err(Error::NonFinite("slave command"));
            }
            if let SlaveCommand::JointTarget(q) = cmd {
                self.chain.check_len(q)?;
            }
        }
        let mut report = StepReport::default();

        if self.state.estopped {
            if !commands.is_empty() {
                report.diagnostics.push(Diagnostic::IgnoredWhileEstopped);
            }
            self.advance_clock();
            return Ok(report);
        }

        let mut hold = false;
        for cmd in commands {
            match cmd {
                SlaveCommand::JointTarget(q) => {
                    self.state.commanded = self.chain.clamp(q);
                    hold = false;
                }
                SlaveCommand::CartesianTarget(pose) => {
                    // Seeded with the previous resolved target so consecutive
                    // solutions stay on one IK branch.
                    let sol = self.chain.solve_ik(pose, &self.state.commanded, &self.ik)?;
                    if sol.converged {
                        self.state.commanded = sol.joints;
                        hold = false;
                    } else {
                        hold = true;
                        report.diagnostics.push(Diagnostic::IkSafeHold {
                            residual_position: sol.residual_position,
                            residual_angle: sol.residual_angle,
                        });
                    }
                }
                SlaveCommand::GripperTarget(g) => self.gripper_target = g.clamp(0.0, 1.0),
                SlaveCommand::HandTarget(h) => {
                    self.hand_target = HandTarget(h.0.map(|v| v.clamp(0.0, 1.0)))
                }
            }
        }

        if !hold {
            self.move_arm(&mut report);
        } else {
            self.state.velocities = JointVector::zeros(self.chain.dof());
        }
        if !self.state.estopped {
            let max = self.channel_rate * self.dt;
            self.state.gripper = move_toward(self.state.gripper, self.gripper_target, max);
            for (v, t) in self.state.hand.0.iter_mut().zip(self.hand_target.0) {
                *v = move_toward(*v, t, max);
            }
        }
        self.advance_clock();
        Ok(report)
    }

    fn move_arm(&mut self, report: &mut StepReport) {
        let target = &self.state.commanded;
        for (i, (&q, &t)) in self.state.joints.iter().zip(target.iter()).enumerate() {
            let error = (t - q).abs();
            if error > self.safety.tracking_error_limit {
                let reason = EstopReason::TrackingError { joint: i, error };
                self.latch(reason);
                report.diagnostics.push(Diagnostic::EstopLatched(reason));
                return;
            }
        }
        let next: Vec<f64> = self
            .state
            .joints
            .iter()
            .zip(target.iter())
            .zip(&self.safety.velocity_limits)
            .map(|((&q, &t), &v)| move_toward(q, t, v * self.dt))
            .collect();
        let next = JointVector(next);
        // `next` has the chain's length, so FK cannot fail.
        let Ok(pose) = self.chain.forward_kinematics(&next) else {
            return;
        };
        if !self.safety.in_workspace(&pose.position) {
            let reason = EstopReason::Workspace {
                position: pose.position,
            };
            self.latch(reason);
            report.diagnostics.push(Diagnostic::EstopLatched(reason));
            return;
        }
        self.state.velocities = JointVector(
            next.iter()
                .zip(self.state.joints.iter())
                .map(|(n, q)| (n - q) / self.dt)
                .collect(),
        );
        self.state.joints = next;
        self.state.ee_pose = pose;
    }

    fn advance_clock(&mut self) {
        self.state.tick += 1;
        self.state.time = self.state.tick as f64 * self.dt;
    }
}

/// Moves `from` toward `to` by at most `max_step`, landing exactly on `to`
/// when it is within reach.
pub fn move_toward(from: f64, to: f64, max_step: f64) -> f64 {
    let diff = to - from;
    if diff.abs() <= max_step {
        to
    } else if diff > 0.0 {
        from + max_step
    } else {
        from - max_step
    }
}
