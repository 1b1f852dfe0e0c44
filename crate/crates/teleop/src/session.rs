//! Session routing, kept free of IO so it can run on a simulated clock.
//!
//! The session owns one master station and one simulated slave per arm. The
//! endpoint holding command authority for an arm streams device readings;
//! the station turns them into slave commands once per control tick.

use std::collections::BTreeMap;

use gl_teleop_core::controller::{ImuPair, ScalingFactors, TeleopMode};
use gl_teleop_core::hand::{ExoskeletonReading, HandCalibration};
use gl_teleop_core::kinematics::{JointVector, Pose};
use gl_teleop_core::sim::SimSlave;
use gl_teleop_core::{HandTarget, SlaveCommand};

use crate::model::{ControllerConfig, RobotModel};
use crate::protocol::{
    pose_from_wire, ArmInfo, Mode, Payload, Phase, ProtocolError, Role, StateUpdate, SwitchStatus,
    TeleopMessage,
};
use crate::station::{identity_imus, Decoupling, DeviceInputs, MasterStation};

pub type EndpointId = u64;

pub const DEFAULT_HEARTBEAT_TIMEOUT_US: u64 = 300_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Connected(EndpointId),
    Frame(EndpointId, Result<TeleopMessage, ProtocolError>),
    Disconnected(EndpointId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Destination {
    Endpoint(EndpointId),
    Broadcast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Destination,
    pub message: TeleopMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionDiagnostic {
    StaleSequence {
        endpoint: EndpointId,
        seq: u64,
        last: u64,
    },
    Rejected {
        endpoint: EndpointId,
        code: String,
        text: String,
    },
    SafeHold {
        arm: u32,
        reason: String,
    },
    SafeHoldCleared {
        arm: u32,
    },
    ModeSwitch {
        arm: u32,
        mode: Mode,
        status: SwitchStatus,
    },
    Control {
        arm: u32,
        error: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionOutput {
    pub messages: Vec<Outbound>,
    pub diagnostics: Vec<SessionDiagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub session_id: String,
    pub heartbeat_timeout_us: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            session_id: "gl".into(),
            heartbeat_timeout_us: DEFAULT_HEARTBEAT_TIMEOUT_US,
        }
    }
}

/// Everything needed to bring up one arm.
#[derive(Debug, Clone)]
pub struct ArmSetup {
    pub model: RobotModel,
    /// Model file contents, sent to clients in `Welcome`.
    pub model_text: String,
    pub config: ControllerConfig,
    pub decoupling: Decoupling,
    pub hand: HandCalibration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmStatus {
    pub arm: u32,
    pub authority: Option<EndpointId>,
    pub phase: Phase,
    pub safe_hold: bool,
    pub estopped: bool,
    pub pending_global: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub endpoints: Vec<EndpointId>,
    pub arms: Vec<ArmStatus>,
}

#[derive(Debug, Clone, Default)]
struct Endpoint {
    role: Option<Role>,
    last_seq: Option<u64>,
    last_seen_us: u64,
}

#[derive(Debug, Clone)]
struct Arm {
    setup: ArmSetup,
    sim: SimSlave,
    station: MasterStation,
    authority: Option<EndpointId>,
    replica: JointVector,
    stylus: Pose,
    imus: Option<ImuPair>,
    exoskeleton: Option<ExoskeletonReading>,
    hand: Option<HandTarget>,
    gripper: Option<f64>,
    pedal: TeleopMode,
    pending_global: bool,
    safe_hold: bool,
}

impl Arm {
    fn new(setup: ArmSetup) -> gl_teleop_core::Result<Self> {
        let mut sim = SimSlave::new(
            setup.model.chain.clone(),
            setup.model.safety.clone(),
            setup.config.ik,
            setup.config.dt(),
            setup.model.home.clone(),
        )?;
        sim.channel_rate = setup.config.channel_rate;
        let station = match setup.decoupling {
            Decoupling::Temporal => MasterStation::temporal(&setup.model, &setup.config)?,
            Decoupling::Spatial => {
                MasterStation::spatial(&setup.model, &setup.config, identity_imus(), setup.hand)?
            }
        };
        let replica = JointVector(setup.model.home.0[..station.replica_dof()].to_vec());
        Ok(Self {
            sim,
            station,
            authority: None,
            replica,
            stylus: Pose::IDENTITY,
            imus: None,
            exoskeleton: None,
            hand: None,
            gripper: None,
            pedal: TeleopMode::Global,
            pending_global: false,
            safe_hold: false,
            setup,
        })
    }

    fn info(&self, arm: u32) -> ArmInfo {
        ArmInfo {
            arm,
            driver: self.setup.decoupling.name().into(),
            dof: self.setup.model.chain.dof() as u32,
            model: self.setup.model_text.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    endpoints: BTreeMap<EndpointId, Endpoint>,
    arms: Vec<Arm>,
    seq: u64,
    now_us: u64,
}

struct Ctx<'a> {
    out: &'a mut SessionOutput,
    session: &'a str,
    seq: &'a mut u64,
    now_us: u64,
}

impl Ctx<'_> {
    fn send(&mut self, to: Destination, arm: u32, payload: Payload) {
        *self.seq += 1;
        self.out.messages.push(Outbound {
            to,
            message: TeleopMessage::new(self.session, arm, *self.seq, self.now_us, payload),
        });
    }

    fn reject(&mut self, endpoint: EndpointId, arm: u32, code: &str, text: impl Into<String>) {
        let text = text.into();
        self.out.diagnostics.push(SessionDiagnostic::Rejected {
            endpoint,
            code: code.into(),
            text: text.clone(),
        });
        self.send(Destination::Endpoint(endpoint), arm, Payload::error(code, text));
    }
}

impl Session {
    pub fn new(config: SessionConfig, arms: Vec<ArmSetup>) -> gl_teleop_core::Result<Self> {
        Ok(Self {
            config,
            endpoints: BTreeMap::new(),
            arms: arms.into_iter().map(Arm::new).collect::<Result<_, _>>()?,
            seq: 0,
            now_us: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn sim(&self, arm: u32) -> Option<&SimSlave> {
        self.arms.get(arm as usize).map(|a| &a.sim)
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            endpoints: self.endpoints.keys().copied().collect(),
            arms: self
                .arms
                .iter()
                .enumerate()
                .map(|(i, a)| ArmStatus {
                    arm: i as u32,
                    authority: a.authority,
                    phase: a.station.phase(),
                    safe_hold: a.safe_hold,
                    estopped: a.sim.state().estopped,
                    pending_global: a.pending_global,
                })
                .collect(),
        }
    }

    /// Applies `inbound` at time `now_us`, then runs one control tick:
    /// heartbeat supervision, one station and simulator step per arm, and a
    /// `StateUpdate` broadcast per arm.
    pub fn step(&mut self, inbound: impl IntoIterator<Item = Inbound>, now_us: u64) -> SessionOutput {
        self.now_us = now_us.max(self.now_us);
        let mut out = SessionOutput::default();
        let session_id = self.config.session_id.clone();
        let mut ctx = Ctx {
            out: &mut out,
            session: &session_id,
            seq: &mut self.seq,
            now_us: self.now_us,
        };
        for event in inbound {
            match event {
                Inbound::Connected(id) => {
                    self.endpoints.insert(
                        id,
                        Endpoint {
                            last_seen_us: ctx.now_us,
                            ..Endpoint::default()
                        },
                    );
                }
                Inbound::Disconnected(id) => {
                    self.endpoints.remove(&id);
                    for (i, arm) in self.arms.iter_mut().enumerate() {
                        if arm.authority == Some(id) {
                            arm.authority = None;
                            engage_safe_hold(arm, i as u32, "authority disconnected", &mut ctx);
                        }
                    }
                }
                Inbound::Frame(id, Err(e)) => ctx.reject(id, 0, e.code(), e.to_string()),
                Inbound::Frame(id, Ok(msg)) => {
                    Self::handle(&mut self.endpoints, &mut self.arms, &self.config, id, msg, &mut ctx)
                }
            }
        }

        for (i, arm) in self.arms.iter_mut().enumerate() {
            let id = i as u32;
            if let Some(owner) = arm.authority {
                let last = self.endpoints.get(&owner).map_or(0, |e| e.last_seen_us);
                if !arm.safe_hold && ctx.now_us.saturating_sub(last) >= self.config.heartbeat_timeout_us {
                    engage_safe_hold(arm, id, "heartbeat timeout", &mut ctx);
                }
            }
            tick_arm(arm, id, &mut ctx);
        }
        out
    }

    fn handle(
        endpoints: &mut BTreeMap<EndpointId, Endpoint>,
        arms: &mut [Arm],
        config: &SessionConfig,
        id: EndpointId,
        msg: TeleopMessage,
        ctx: &mut Ctx<'_>,
    ) {
        let arm_id = msg.arm;
        let endpoint = endpoints.entry(id).or_default();
        if !matches!(msg.payload, Payload::Hello { .. }) && msg.session != config.session_id {
            ctx.reject(id, arm_id, "wrong_session", format!("this is session {:?}", config.session_id));
            return;
        }
        if let Some(last) = endpoint.last_seq {
            if msg.seq <= last {
                ctx.out.diagnostics.push(SessionDiagnostic::StaleSequence {
                    endpoint: id,
                    seq: msg.seq,
                    last,
                });
                ctx.send(
                    Destination::Endpoint(id),
                    arm_id,
                    Payload::error("stale_sequence", format!("seq {} after {last}, dropped", msg.seq)),
                );
                return;
            }
        }
        endpoint.last_seq = Some(msg.seq);
        endpoint.last_seen_us = ctx.now_us;

        if arms.get(arm_id as usize).is_none() {
            ctx.reject(id, arm_id, "unknown_arm", format!("no arm {arm_id}"));
            return;
        }
        if let Payload::Hello { role, authority } = msg.payload {
            endpoint.role = Some(role);
            let arm = &mut arms[arm_id as usize];
            let wants = authority && role == Role::Master;
            let granted = wants && arm.authority.is_none_or(|a| a == id);
            if granted {
                arm.authority = Some(id);
            } else if wants {
                ctx.reject(id, arm_id, "authority_taken", format!("arm {arm_id} already has a command endpoint"));
            }
            let infos = arms.iter().enumerate().map(|(i, a)| a.info(i as u32)).collect();
            ctx.send(Destination::Endpoint(id), arm_id, Payload::Welcome { authority: granted, arms: infos });
            return;
        }
        let arm = &mut arms[arm_id as usize];
        if matches!(msg.payload, Payload::Heartbeat) && arm.authority != Some(id) {
            return;
        }
        if arm.authority != Some(id) {
            ctx.reject(id, arm_id, "not_authority", format!("endpoint {id} does not command arm {arm_id}"));
            return;
        }
        if arm.safe_hold {
            arm.safe_hold = false;
            ctx.out.diagnostics.push(SessionDiagnostic::SafeHoldCleared { arm: arm_id });
            ctx.send(
                Destination::Broadcast,
                arm_id,
                Payload::SafeHold {
                    active: false,
                    reason: "authority active".into(),
                },
            );
        }

        let temporal = arm.station.decoupling() == Decoupling::Temporal;
        match msg.payload {
            Payload::Heartbeat => {}
            Payload::JointCommand { joints } => {
                let n = arm.station.replica_dof();
                if joints.len() != n {
                    ctx.reject(id, arm_id, "bad_command", format!("expected {n} replica joints, got {}", joints.len()));
                } else if arm.station.phase() == Phase::Global {
                    arm.replica = JointVector(joints);
                }
                // Outside Global the replica is motor-driven and readings are ignored.
            }
            Payload::StylusPose {
                position,
                orientation,
            } => match pose_from_wire(&position, &orientation) {
                Ok(p) => arm.stylus = p,
                Err(e) => ctx.reject(id, arm_id, "bad_command", e.to_string()),
            },
            Payload::CartesianCommand { .. } => ctx.reject(
                id,
                arm_id,
                "unsupported",
                "end-effector targets come from the clutch; send StylusPose",
            ),
            Payload::GripperCommand { value } => arm.gripper = Some(value.clamp(0.0, 1.0)),
            Payload::HandCommand { channels } => {
                arm.hand = Some(HandTarget(channels.map(|v| v.clamp(0.0, 1.0))));
                arm.exoskeleton = None;
            }
            Payload::ExoskeletonUpdate { encoders } => match ExoskeletonReading::new(encoders) {
                Ok(r) => arm.exoskeleton = Some(r),
                Err(e) => ctx.reject(id, arm_id, "bad_command", e.to_string()),
            },
            Payload::ImuUpdate { forearm, hand } if !temporal => {
                let quat = |q: [f64; 4]| pose_from_wire(&[0.0; 3], &q).map(|p| p.orientation.to_rotation_matrix());
                match (quat(forearm), quat(hand)) {
                    (Ok(forearm), Ok(hand)) => arm.imus = Some(ImuPair { forearm, hand }),
                    _ => ctx.reject(id, arm_id, "bad_command", "invalid IMU quaternion"),
                }
            }
            Payload::ModeSwitch { mode } if temporal => {
                let status = match mode {
                    Mode::Local => {
                        arm.pedal = TeleopMode::Local;
                        arm.pending_global = false;
                        SwitchStatus::Granted
                    }
                    Mode::Global => {
                        arm.pedal = TeleopMode::Global;
                        if arm.station.phase() == Phase::Global {
                            SwitchStatus::Granted
                        } else {
                            arm.pending_global = true;
                            SwitchStatus::Pending
                        }
                    }
                };
                ctx.out.diagnostics.push(SessionDiagnostic::ModeSwitch { arm: arm_id, mode, status });
                ctx.send(Destination::Broadcast, arm_id, Payload::ModeStatus { mode, status });
            }
            Payload::Configure { alpha_l, alpha_r } if temporal => {
                if arm.station.phase() != Phase::Global {
                    ctx.reject(id, arm_id, "busy", "scaling can only change in Global mode");
                    return;
                }
                match ScalingFactors::new(alpha_l, alpha_r) {
                    Ok(s) => {
                        if let Some(c) = arm.station.temporal_controller() {
                            c.set_scaling(s);
                        }
                    }
                    Err(e) => ctx.reject(id, arm_id, "bad_config", e.to_string()),
                }
            }
            Payload::Estop => arm.sim.estop(),
            Payload::Reset => {
                let setup = arm.setup.clone();
                match Arm::new(setup) {
                    Ok(mut fresh) => {
                        fresh.authority = arm.authority;
                        *arm = fresh;
                    }
                    Err(e) => ctx.reject(id, arm_id, "reset_failed", e.to_string()),
                }
            }
            Payload::ImuUpdate { .. } | Payload::ModeSwitch { .. } | Payload::Configure { .. } => {
                let driver = arm.setup.decoupling.name();
                ctx.reject(id, arm_id, "unsupported", format!("{} not available on a {driver} arm", msg.payload.kind()));
            }
            other => ctx.reject(id, arm_id, "unexpected", format!("{} is sent by servers only", other.kind())),
        }
    }
}

fn engage_safe_hold(arm: &mut Arm, id: u32, reason: &str, ctx: &mut Ctx<'_>) {
    if arm.safe_hold {
        return;
    }
    arm.safe_hold = true;
    ctx.out.diagnostics.push(SessionDiagnostic::SafeHold {
        arm: id,
        reason: reason.into(),
    });
    ctx.send(
        Destination::Broadcast,
        id,
        Payload::SafeHold {
            active: true,
            reason: reason.into(),
        },
    );
}

fn tick_arm(arm: &mut Arm, id: u32, ctx: &mut Ctx<'_>) {
    let hold = arm.safe_hold || arm.authority.is_none();
    let mut phase = arm.station.phase();
    let commands = if hold {
        vec![SlaveCommand::JointTarget(arm.sim.state().joints.clone())]
    } else {
        let inputs = DeviceInputs {
            replica: arm.replica.clone(),
            stylus: arm.stylus,
            pedal: arm.pedal,
            gripper: arm.gripper,
            imus: arm.imus,
            exoskeleton: arm.exoskeleton,
            hand: arm.hand,
        };
        match arm.station.step(&inputs, arm.sim.state()) {
            Ok(out) => {
                if let Some(r) = out.replica_drive {
                    arm.replica = r;
                }
                phase = out.phase;
                out.commands
            }
            Err(e) => {
                ctx.out.diagnostics.push(SessionDiagnostic::Control {
                    arm: id,
                    error: e.to_string(),
                });
                vec![SlaveCommand::JointTarget(arm.sim.state().joints.clone())]
            }
        }
    };
    if let Err(e) = arm.sim.step(&commands) {
        ctx.out.diagnostics.push(SessionDiagnostic::Control {
            arm: id,
            error: e.to_string(),
        });
    }
    if arm.pending_global && phase == Phase::Global {
        arm.pending_global = false;
        let (mode, status) = (Mode::Global, SwitchStatus::Granted);
        ctx.out.diagnostics.push(SessionDiagnostic::ModeSwitch { arm: id, mode, status });
        ctx.send(Destination::Broadcast, id, Payload::ModeStatus { mode, status });
    }
    let s = arm.sim.state();
    let update = StateUpdate {
        tick: s.tick,
        time: s.time,
        phase,
        joints: s.joints.0.clone(),
        commanded: s.commanded.0.clone(),
        ee_position: s.ee_pose.position.into(),
        ee_orientation: s.ee_pose.orientation.to_array(),
        gripper: s.gripper,
        hand: s.hand.0,
        replica: Some(arm.replica.0.clone()),
        estopped: s.estopped,
        safe_hold: arm.safe_hold,
    };
    ctx.send(Destination::Broadcast, id, Payload::StateUpdate(update));
}
