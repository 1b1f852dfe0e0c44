//! Length-prefixed JSON wire protocol.
//!
//! A frame is a 4-byte big-endian body length followed by a UTF-8 JSON body.
//! Floats are written in shortest round-trip form and parsed with correct
//! rounding, so every finite `f64` survives a round trip bit for bit.
//! `PROTOCOL.md` at the repository root documents the format.

use gl_teleop_core::kinematics::{JointVector, Pose};
use gl_teleop_core::nalgebra::Vector3;
use gl_teleop_core::rotation::UnitQuaternion;
use gl_teleop_core::{HandTarget, SlaveCommand};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
/// Largest accepted body, bytes.
pub const MAX_FRAME_LEN: usize = 1 << 20;
pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("frame length {len} exceeds maximum {max}")]
    FrameTooLarge { len: usize, max: usize },
    #[error("{0} bytes after the frame")]
    TrailingBytes(usize),
    #[error("body is not UTF-8")]
    Utf8,
    #[error("malformed body: {0}")]
    Malformed(String),
    #[error("unknown payload kind {0:?}")]
    UnknownKind(String),
    #[error("schema version {found} not supported (this side speaks {supported})")]
    Version { found: u64, supported: u32 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl ProtocolError {
    /// Framing errors leave the byte stream unsynchronized.
    pub fn is_framing(&self) -> bool {
        matches!(
            self,
            ProtocolError::Truncated { .. }
                | ProtocolError::FrameTooLarge { .. }
                | ProtocolError::TrailingBytes(_)
        )
    }

    /// Short machine-readable code used in `Error` payloads.
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::Truncated { .. }
            | ProtocolError::FrameTooLarge { .. }
            | ProtocolError::TrailingBytes(_) => "framing",
            ProtocolError::Utf8 | ProtocolError::Malformed(_) | ProtocolError::NonFinite(_) => {
                "malformed"
            }
            ProtocolError::UnknownKind(_) => "unknown_kind",
            ProtocolError::Version { .. } => "version",
        }
    }
}

pub type Result<T, E = ProtocolError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopMessage {
    pub schema_version: u32,
    pub session: String,
    pub arm: u32,
    /// Strictly increasing per sender.
    pub seq: u64,
    pub timestamp_us: u64,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Global,
    Local,
    /// Pedal released, waiting for the replica to finish mirroring.
    Handover,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchStatus {
    Granted,
    Pending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Master,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmInfo {
    pub arm: u32,
    /// `"temporal"` or `"spatial"`.
    pub driver: String,
    pub dof: u32,
    /// Robot model file contents.
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub tick: u64,
    pub time: f64,
    pub phase: Phase,
    pub joints: Vec<f64>,
    pub commanded: Vec<f64>,
    pub ee_position: [f64; 3],
    pub ee_orientation: [f64; 4],
    pub gripper: f64,
    pub hand: [f64; 6],
    /// Replica joints as driven by the session (mirroring in Local mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<Vec<f64>>,
    pub estopped: bool,
    pub safe_hold: bool,
}

/// Message body. The `kind` field selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Payload {
    /// Joint target; to a session server, the replica joint reading.
    JointCommand { joints: Vec<f64> },
    /// End-effector target pose.
    CartesianCommand {
        position: [f64; 3],
        orientation: [f64; 4],
    },
    /// Stylus pose of the local device, routed through the clutch.
    StylusPose {
        position: [f64; 3],
        orientation: [f64; 4],
    },
    GripperCommand { value: f64 },
    HandCommand { channels: [f64; 6] },
    ImuUpdate { forearm: [f64; 4], hand: [f64; 4] },
    ExoskeletonUpdate { encoders: [f64; 6] },
    ModeSwitch { mode: Mode },
    ModeStatus { mode: Mode, status: SwitchStatus },
    Configure { alpha_l: f64, alpha_r: f64 },
    StateUpdate(StateUpdate),
    SafeHold { active: bool, reason: String },
    Hello { role: Role, authority: bool },
    Welcome {
        authority: bool,
        arms: Vec<ArmInfo>,
    },
    Heartbeat,
    Estop,
    Reset,
    Error { code: String, text: String },
}

pub const KINDS: [&str; 18] = [
    "JointCommand",
    "CartesianCommand",
    "StylusPose",
    "GripperCommand",
    "HandCommand",
    "ImuUpdate",
    "ExoskeletonUpdate",
    "ModeSwitch",
    "ModeStatus",
    "Configure",
    "StateUpdate",
    "SafeHold",
    "Hello",
    "Welcome",
    "Heartbeat",
    "Estop",
    "Reset",
    "Error",
];

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::JointCommand { .. } => "JointCommand",
            Payload::CartesianCommand { .. } => "CartesianCommand",
            Payload::StylusPose { .. } => "StylusPose",
            Payload::GripperCommand { .. } => "GripperCommand",
            Payload::HandCommand { .. } => "HandCommand",
            Payload::ImuUpdate { .. } => "ImuUpdate",
            Payload::ExoskeletonUpdate { .. } => "ExoskeletonUpdate",
            Payload::ModeSwitch { .. } => "ModeSwitch",
            Payload::ModeStatus { .. } => "ModeStatus",
            Payload::Configure { .. } => "Configure",
            Payload::StateUpdate(_) => "StateUpdate",
            Payload::SafeHold { .. } => "SafeHold",
            Payload::Hello { .. } => "Hello",
            Payload::Welcome { .. } => "Welcome",
            Payload::Heartbeat => "Heartbeat",
            Payload::Estop => "Estop",
            Payload::Reset => "Reset",
            Payload::Error { .. } => "Error",
        }
    }

    pub fn error(code: &str, text: impl Into<String>) -> Self {
        Payload::Error {
            code: code.to_string(),
            text: text.into(),
        }
    }

    fn floats(&self) -> Vec<f64> {
        match self {
            Payload::JointCommand { joints } => joints.clone(),
            Payload::CartesianCommand {
                position,
                orientation,
            }
            | Payload::StylusPose {
                position,
                orientation,
            } => position.iter().chain(orientation).copied().collect(),
            Payload::GripperCommand { value } => vec![*value],
            Payload::HandCommand { channels } => channels.to_vec(),
            Payload::ImuUpdate { forearm, hand } => forearm.iter().chain(hand).copied().collect(),
            Payload::ExoskeletonUpdate { encoders } => encoders.to_vec(),
            Payload::Configure { alpha_l, alpha_r } => vec![*alpha_l, *alpha_r],
            Payload::StateUpdate(s) => {
                let mut v = vec![s.time, s.gripper];
                v.extend(&s.joints);
                v.extend(&s.commanded);
                v.extend(s.ee_position);
                v.extend(s.ee_orientation);
                v.extend(s.hand);
                v.extend(s.replica.iter().flatten());
                v
            }
            _ => Vec::new(),
        }
    }

    /// Wire form of a slave command.
    pub fn from_command(cmd: &SlaveCommand) -> Self {
        match cmd {
            SlaveCommand::JointTarget(q) => Payload::JointCommand {
                joints: q.0.clone(),
            },
            SlaveCommand::CartesianTarget(p) => Payload::CartesianCommand {
                position: p.position.into(),
                orientation: p.orientation.to_array(),
            },
            SlaveCommand::GripperTarget(g) => Payload::GripperCommand { value: *g },
            SlaveCommand::HandTarget(h) => Payload::HandCommand { channels: h.0 },
        }
    }

    /// Slave command carried by this payload, if it is a command kind.
    pub fn to_command(&self) -> Option<gl_teleop_core::Result<SlaveCommand>> {
        Some(match self {
            Payload::JointCommand { joints } => Ok(SlaveCommand::JointTarget(JointVector(joints.clone()))),
            Payload::CartesianCommand {
                position,
                orientation,
            } => pose_from_wire(position, orientation).map(SlaveCommand::CartesianTarget),
            Payload::GripperCommand { value } => Ok(SlaveCommand::GripperTarget(*value)),
            Payload::HandCommand { channels } => Ok(SlaveCommand::HandTarget(HandTarget(*channels))),
            _ => return None,
        })
    }
}

pub fn pose_from_wire(position: &[f64; 3], orientation: &[f64; 4]) -> gl_teleop_core::Result<Pose> {
    let [w, x, y, z] = *orientation;
    Ok(Pose::new(Vector3::from(*position), UnitQuaternion::new(w, x, y, z)?))
}

impl TeleopMessage {
    pub fn new(session: impl Into<String>, arm: u32, seq: u64, timestamp_us: u64, payload: Payload) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            session: session.into(),
            arm,
            seq,
            timestamp_us,
            payload,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.payload.floats().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(ProtocolError::NonFinite(self.payload.kind()))
        }
    }
}

/// JSON body without the length prefix.
pub fn encode_body(msg: &TeleopMessage) -> Result<String> {
    msg.validate()?;
    serde_json::to_string(msg).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

pub fn encode(msg: &TeleopMessage) -> Result<Vec<u8>> {
    let body = encode_body(msg)?;
    if body.len() > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge {
            len: body.len(),
            max: MAX_FRAME_LEN,
        });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body.as_bytes());
    Ok(out)
}

/// Parses a body, checking version and kind before the typed decode so that
/// those failures are reported as such rather than as generic parse errors.
pub fn decode_body(body: &str) -> Result<TeleopMessage> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| ProtocolError::Malformed("missing schema_version".into()))?;
    if version != SCHEMA_VERSION as u64 {
        return Err(ProtocolError::Version {
            found: version,
            supported: SCHEMA_VERSION,
        });
    }
    let kind = value
        .get("payload")
        .and_then(|p| p.get("kind"))
        .and_then(serde_json::Value::as_str)
        .ok_or_else(|| ProtocolError::Malformed("missing payload kind".into()))?;
    if !KINDS.contains(&kind) {
        return Err(ProtocolError::UnknownKind(kind.to_string()));
    }
    // Decode from the text, not the Value, so floats keep exact parsing.
    let msg: TeleopMessage =
        serde_json::from_str(body).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    msg.validate()?;
    Ok(msg)
}

/// Declared body length of a frame header, checked against the maximum.
pub fn body_len(header: [u8; HEADER_LEN]) -> Result<usize> {
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_LEN {
        return Err(ProtocolError::FrameTooLarge {
            len,
            max: MAX_FRAME_LEN,
        });
    }
    Ok(len)
}

/// Decodes exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<TeleopMessage> {
    let header: [u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or(ProtocolError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        })?;
    let len = body_len(header)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(ProtocolError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    if bytes.len() > total {
        return Err(ProtocolError::TrailingBytes(bytes.len() - total));
    }
    let body = std::str::from_utf8(&bytes[HEADER_LEN..]).map_err(|_| ProtocolError::Utf8)?;
    decode_body(body)
}

/// Incremental decoder for a byte stream carrying back-to-back frames.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, `Ok(None)` if more bytes are needed. A framing
    /// error is fatal for the stream; a body error consumes only that frame.
    pub fn next_frame(&mut self) -> Result<Option<TeleopMessage>> {
        let Some(header) = self.buf.get(..HEADER_LEN) else {
            return Ok(None);
        };
        let len = body_len(header.try_into().expect("four bytes"))?;
        if self.buf.len() < HEADER_LEN + len {
            return Ok(None);
        }
        let frame: Vec<u8> = self.buf.drain(..HEADER_LEN + len).collect();
        decode(&frame).map(Some)
    }
}
