//! Master side of one arm: device readings in, slave commands out.

use gl_teleop_core::controller::{
    ControllerEvent, ImuCalibration, ImuPair, SpatialController, TeleopMode, TemporalController,
    TemporalInputs, TemporalPhase,
};
use gl_teleop_core::hand::{retarget, ExoskeletonReading, HandCalibration};
use gl_teleop_core::kinematics::{JointVector, Pose};
use gl_teleop_core::rotation::RotationMatrix;
use gl_teleop_core::{HandTarget, Result, SlaveCommand, SlaveState};
use serde::{Deserialize, Serialize};

use crate::model::{ControllerConfig, RobotModel};
use crate::protocol::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Decoupling {
    #[default]
    Temporal,
    Spatial,
}

impl Decoupling {
    pub fn name(&self) -> &'static str {
        match self {
            Decoupling::Temporal => "temporal",
            Decoupling::Spatial => "spatial",
        }
    }
}

/// Device readings for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceInputs {
    /// All joints for temporal decoupling, the proximal ones for spatial.
    pub replica: JointVector,
    pub stylus: Pose,
    pub pedal: TeleopMode,
    pub gripper: Option<f64>,
    pub imus: Option<ImuPair>,
    pub exoskeleton: Option<ExoskeletonReading>,
    /// Hand channels set directly, used when no exoskeleton reading is given.
    pub hand: Option<HandTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationOutput {
    pub commands: Vec<SlaveCommand>,
    /// Where the replica motors were driven this tick, if they were.
    pub replica_drive: Option<JointVector>,
    pub phase: Phase,
    pub events: Vec<ControllerEvent>,
    /// Joint indices clamped to limits this tick.
    pub clamped: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Driver {
    Temporal(TemporalController),
    Spatial {
        controller: SpatialController,
        hand: HandCalibration,
    },
}

#[derive(Debug, Clone)]
pub struct MasterStation {
    driver: Driver,
    dt: f64,
}

pub fn phase_of(p: TemporalPhase) -> Phase {
    match p {
        TemporalPhase::Global => Phase::Global,
        TemporalPhase::Local => Phase::Local,
        TemporalPhase::Handover => Phase::Handover,
    }
}

impl MasterStation {
    pub fn temporal(model: &RobotModel, config: &ControllerConfig) -> Result<Self> {
        Ok(Self {
            driver: Driver::Temporal(TemporalController::new(model.chain.clone(), config.temporal)?),
            dt: config.dt(),
        })
    }

    /// Spatial decoupling with IMU homes recorded now.
    pub fn spatial(
        model: &RobotModel,
        config: &ControllerConfig,
        imu_home: ImuPair,
        hand: HandCalibration,
    ) -> Result<Self> {
        let calib = ImuCalibration {
            forearm_home: imu_home.forearm,
            hand_home: imu_home.hand,
        };
        Ok(Self {
            driver: Driver::Spatial {
                controller: SpatialController::new(model.chain.clone(), calib, config.euler)?,
                hand,
            },
            dt: config.dt(),
        })
    }

    pub fn decoupling(&self) -> Decoupling {
        match self.driver {
            Driver::Temporal(_) => Decoupling::Temporal,
            Driver::Spatial { .. } => Decoupling::Spatial,
        }
    }

    /// Length of the replica reading this station expects.
    pub fn replica_dof(&self) -> usize {
        match &self.driver {
            Driver::Temporal(c) => c.chain().dof(),
            Driver::Spatial { controller, .. } => controller.replica_dof(),
        }
    }

    pub fn phase(&self) -> Phase {
        match &self.driver {
            Driver::Temporal(c) => phase_of(c.phase()),
            Driver::Spatial { .. } => Phase::Global,
        }
    }

    pub fn temporal_controller(&mut self) -> Option<&mut TemporalController> {
        match &mut self.driver {
            Driver::Temporal(c) => Some(c),
            Driver::Spatial { .. } => None,
        }
    }

    pub fn step(&mut self, inputs: &DeviceInputs, slave: &SlaveState) -> Result<StationOutput> {
        let hand_command = |calib: Option<&HandCalibration>| -> Result<Option<SlaveCommand>> {
            match (&inputs.exoskeleton, calib) {
                (Some(reading), Some(calib)) => Ok(Some(SlaveCommand::HandTarget(retarget(reading, calib)?))),
                _ => Ok(inputs.hand.map(SlaveCommand::HandTarget)),
            }
        };
        match &mut self.driver {
            Driver::Temporal(ctl) => {
                let out = ctl.step(
                    &TemporalInputs {
                        replica: inputs.replica.clone(),
                        haptic: inputs.stylus,
                        requested: inputs.pedal,
                        gripper: inputs.gripper,
                    },
                    slave,
                    self.dt,
                )?;
                let mut commands = out.commands();
                commands.extend(hand_command(None)?);
                let clamped = out
                    .events
                    .iter()
                    .find_map(|e| match e {
                        ControllerEvent::ReplicaClamped(v) => Some(v.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                Ok(StationOutput {
                    commands,
                    replica_drive: out.replica_drive,
                    phase: phase_of(out.phase),
                    events: out.events,
                    clamped,
                })
            }
            Driver::Spatial { controller, hand } => {
                let identity = ImuPair {
                    forearm: controller.calibration().forearm_home,
                    hand: controller.calibration().hand_home,
                };
                let imus = inputs.imus.unwrap_or(identity);
                let out = controller.step(&inputs.replica, &imus, None)?;
                let mut commands = vec![out.arm];
                if let Some(g) = inputs.gripper {
                    commands.push(SlaveCommand::GripperTarget(g.clamp(0.0, 1.0)));
                }
                commands.extend(hand_command(Some(hand))?);
                Ok(StationOutput {
                    commands,
                    replica_drive: None,
                    phase: Phase::Global,
                    events: Vec::new(),
                    clamped: out.clamped,
                })
            }
        }
    }
}

/// Identity IMU pair, the home reading used when a scenario gives none.
pub fn identity_imus() -> ImuPair {
    ImuPair {
        forearm: RotationMatrix::identity(),
        hand: RotationMatrix::identity(),
    }
}
