//! Deterministic scenario runner.
//!
//! Each tick samples the scripted devices, runs the master station, sends
//! every command through the wire encoding and back, and steps the simulated
//! slave. The run is recorded as JSON lines: a header that embeds the whole
//! scenario, then one record per tick starting with the initial state. The
//! digest is SHA-256 over the log bytes.

use std::io::{BufRead, Write};

use gl_teleop_core::controller::{ControllerEvent, TeleopMode};
use gl_teleop_core::hand::{ExoskeletonReading, HandCalibration, ENCODER_COUNT};
use gl_teleop_core::kinematics::JointVector;
use gl_teleop_core::nalgebra::Vector3;
use gl_teleop_core::rotation::UnitQuaternion;
use gl_teleop_core::sim::{Diagnostic, EstopReason, SimSlave, SlaveState};
use gl_teleop_core::sim::move_toward;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::protocol::{self, Payload, Phase, StateUpdate, TeleopMessage};
use crate::scenario::{GaussianNoise, Scenario, ScenarioError, Waypoint};
use crate::station::{identity_imus, Decoupling, DeviceInputs, MasterStation};

pub const LOG_FORMAT: u32 = 1;
const SESSION: &str = "harness";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("tick {tick}: {source}")]
    Control {
        tick: u64,
        source: gl_teleop_core::Error,
    },
    #[error("tick {tick}: wire: {source}")]
    Wire {
        tick: u64,
        source: protocol::ProtocolError,
    },
    #[error("log: {0}")]
    Log(String),
    #[error("calibration: {0}")]
    Calibration(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    format: u32,
    scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TickRecord {
    kind: String,
    #[serde(flatten)]
    state: StateUpdate,
    events: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointResult {
    pub index: usize,
    pub t: f64,
    /// meters, pose waypoints
    pub position_error: Option<f64>,
    /// radians, pose waypoints with an orientation
    pub angle_error: Option<f64>,
    /// radians, joint waypoints
    pub joint_error: Option<f64>,
    pub reached: bool,
    /// First time since the previous waypoint at which the goal was within
    /// tolerance, seconds from the start.
    pub completion_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstopEvent {
    pub tick: u64,
    pub time: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub ticks: u64,
    pub dt: f64,
    pub waypoints: Vec<WaypointResult>,
    /// Largest per-tick change of the resolved joint command, radians.
    pub max_command_jump: f64,
    /// Same, restricted to ticks where control changed hands.
    pub max_switch_jump: f64,
    pub switch_count: usize,
    /// Returns to Global granted with the replica still outside tolerance.
    pub premature_grants: usize,
    pub estops: Vec<EstopEvent>,
    pub ik_safe_holds: usize,
    pub clamp_events: usize,
    pub digest: String,
    pub passed: bool,
}

/// Per-tick data handed to an observer during a run.
#[derive(Debug, Clone)]
pub struct TickTrace<'a> {
    pub state: &'a SlaveState,
    pub phase: Phase,
    pub replica: &'a JointVector,
    pub events: &'a [ControllerEvent],
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    /// Log lines without trailing newlines.
    pub log: Vec<String>,
}

impl RunOutput {
    pub fn log_text(&self) -> String {
        let mut s = String::new();
        for line in &self.log {
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

pub const SWITCH_LIMIT: f64 = 1e-9;

struct Recorder {
    lines: Vec<String>,
    hasher: Sha256,
}

impl Recorder {
    fn push(&mut self, line: String) {
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.lines.push(line);
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("log records serialize")
}

fn state_update(state: &SlaveState, phase: Phase, replica: &JointVector) -> StateUpdate {
    StateUpdate {
        tick: state.tick,
        time: state.time,
        phase,
        joints: state.joints.0.clone(),
        commanded: state.commanded.0.clone(),
        ee_position: state.ee_pose.position.into(),
        ee_orientation: state.ee_pose.orientation.to_array(),
        gripper: state.gripper,
        hand: state.hand.0,
        replica: Some(replica.0.clone()),
        estopped: state.estopped,
        safe_hold: false,
    }
}

fn event_name(e: &ControllerEvent) -> String {
    match e {
        ControllerEvent::Engaged(_) => "Engaged".into(),
        ControllerEvent::HandoverRequested => "HandoverRequested".into(),
        ControllerEvent::HandoverGranted { .. } => "HandoverGranted".into(),
        ControllerEvent::HandoverCancelled => "HandoverCancelled".into(),
        ControllerEvent::ReplicaClamped(j) => format!("ReplicaClamped{j:?}"),
    }
}

fn estop_reason(r: &EstopReason) -> String {
    match r {
        EstopReason::TrackingError { joint, error } => format!("tracking error {error} rad on joint {joint}"),
        EstopReason::Workspace { position } => {
            format!("end effector left workspace at [{}, {}, {}]", position.x, position.y, position.z)
        }
        EstopReason::External => "external".into(),
    }
}

struct WaypointTracker {
    results: Vec<WaypointResult>,
    next: usize,
    window_start: f64,
}

impl WaypointTracker {
    fn errors(w: &Waypoint, state: &SlaveState) -> (Option<f64>, Option<f64>, Option<f64>, bool) {
        if let Some(goal) = &w.joints {
            let e = state.joints.max_abs_diff(&JointVector(goal.clone()));
            return (None, None, Some(e), e <= w.joint_tolerance);
        }
        let p = w.position.map(|p| (state.ee_pose.position - Vector3::from(p)).norm());
        let a = w.orientation.map(|q| {
            let goal = UnitQuaternion::new(q[0], q[1], q[2], q[3]).unwrap_or(UnitQuaternion::IDENTITY);
            state.ee_pose.orientation.angle_to(&goal)
        });
        let ok = p.is_none_or(|e| e <= w.position_tolerance) && a.is_none_or(|e| e <= w.angle_tolerance);
        (p, a, None, ok)
    }

    /// Called after every tick with the state at `state.time`.
    fn observe(&mut self, waypoints: &[Waypoint], state: &SlaveState, first_hit: &mut Option<f64>) {
        while let Some(w) = waypoints.get(self.next) {
            let (p, a, j, ok) = Self::errors(w, state);
            if ok && first_hit.is_none() && state.time >= self.window_start {
                *first_hit = Some(state.time);
            }
            if state.time + 1e-12 < w.t {
                return;
            }
            self.results.push(WaypointResult {
                index: self.next,
                t: w.t,
                position_error: p,
                angle_error: a,
                joint_error: j,
                reached: ok,
                completion_time: if ok { *first_hit } else { None },
            });
            self.window_start = w.t;
            self.next += 1;
            *first_hit = None;
        }
    }

    /// Waypoints past the end of the run are evaluated on the final state.
    fn finish(&mut self, waypoints: &[Waypoint], state: &SlaveState) {
        while let Some(w) = waypoints.get(self.next) {
            let (p, a, j, ok) = Self::errors(w, state);
            self.results.push(WaypointResult {
                index: self.next,
                t: w.t,
                position_error: p,
                angle_error: a,
                joint_error: j,
                reached: ok,
                completion_time: None,
            });
            self.next += 1;
        }
    }
}

/// Runs a scenario.
pub fn run(scenario: &Scenario) -> Result<RunOutput> {
    run_observed(scenario, |_| {})
}

/// Runs a scenario, calling `observe` after each tick.
pub fn run_observed(scenario: &Scenario, mut observe: impl FnMut(&TickTrace<'_>)) -> Result<RunOutput> {
    let resolved = scenario.resolve()?;
    let script = &scenario.script;
    let model = &resolved.model;
    let config = &resolved.config;
    let dt = config.dt();
    let control = |tick: u64| move |source| HarnessError::Control { tick, source };

    let mut sim = SimSlave::new(
        model.chain.clone(),
        model.safety.clone(),
        config.ik,
        dt,
        model.home.clone(),
    )
    .map_err(control(0))?;
    sim.channel_rate = config.channel_rate;

    let replica_dof = script.replica_dof(model);
    let mut replica = JointVector(model.home.0[..replica_dof].to_vec());
    let mut station = match script.mode {
        Decoupling::Temporal => MasterStation::temporal(model, config),
        Decoupling::Spatial => MasterStation::spatial(
            model,
            config,
            script.imus_at(0.0).unwrap_or_else(identity_imus),
            resolved.hand,
        ),
    }
    .map_err(control(0))?;
    let mut noise = script.noise.map(|n| GaussianNoise::new(n.seed, n.sigma));

    let mut rec = Recorder {
        lines: Vec::new(),
        hasher: Sha256::new(),
    };
    rec.push(to_line(&Header {
        kind: "header".into(),
        format: LOG_FORMAT,
        scenario: scenario.clone(),
    }));
    let initial = TickRecord {
        kind: "tick".into(),
        state: state_update(sim.state(), station.phase(), &replica),
        events: Vec::new(),
    };
    rec.push(to_line(&initial));

    let ticks = (script.duration / dt).round() as u64;
    let mut report = RunReport {
        scenario: script.name.clone(),
        ticks,
        dt,
        waypoints: Vec::new(),
        max_command_jump: 0.0,
        max_switch_jump: 0.0,
        switch_count: 0,
        premature_grants: 0,
        estops: Vec::new(),
        ik_safe_holds: 0,
        clamp_events: 0,
        digest: String::new(),
        passed: false,
    };
    let mut tracker = WaypointTracker {
        results: Vec::new(),
        next: 0,
        window_start: 0.0,
    };
    let mut first_hit = None;
    tracker.observe(&script.waypoint, sim.state(), &mut first_hit);
    let mut seq = 0u64;

    for k in 0..ticks {
        let t = k as f64 * dt;
        let tick = k + 1;

        // The operator steers the replica whenever it is not being mirrored.
        if station.phase() == Phase::Global {
            if let Some(goal) = script.replica_at(t) {
                let step = script.operator_speed * dt;
                replica = JointVector(
                    replica.iter().zip(goal.iter()).map(|(r, g)| move_toward(*r, *g, step)).collect(),
                );
            }
        }
        let mut stylus = script.stylus_at(t);
        if let Some(n) = noise.as_mut() {
            stylus.position += n.vector();
        }
        let inputs = DeviceInputs {
            replica: replica.clone(),
            stylus,
            pedal: match script.mode {
                Decoupling::Temporal => script.pedal_at(t),
                Decoupling::Spatial => TeleopMode::Global,
            },
            gripper: script.gripper_at(t),
            imus: script.imus_at(t),
            exoskeleton: script
                .exoskeleton_at(t)
                .map(ExoskeletonReading::new)
                .transpose()
                .map_err(control(tick))?,
            hand: None,
        };
        let out = station.step(&inputs, sim.state()).map_err(control(tick))?;
        if let Some(r) = &out.replica_drive {
            replica = r.clone();
        }

        let mut delivered = Vec::with_capacity(out.commands.len());
        for cmd in &out.commands {
            seq += 1;
            let msg = TeleopMessage::new(SESSION, 0, seq, (t * 1e6).round() as u64, Payload::from_command(cmd));
            let wire = |source| HarnessError::Wire { tick, source };
            let decoded = protocol::decode(&protocol::encode(&msg).map_err(wire)?).map_err(wire)?;
            match decoded.payload.to_command() {
                Some(c) => delivered.push(c.map_err(control(tick))?),
                None => return Err(HarnessError::Log(format!("tick {tick}: non-command payload on the command link"))),
            }
        }

        let before = sim.state().commanded.clone();
        let was_estopped = sim.state().estopped;
        let step = sim.step(&delivered).map_err(control(tick))?;
        let state = sim.state();

        let jump = state.commanded.max_abs_diff(&before);
        report.max_command_jump = report.max_command_jump.max(jump);
        let switched = out.events.iter().any(|e| {
            matches!(
                e,
                ControllerEvent::Engaged(_) | ControllerEvent::HandoverRequested | ControllerEvent::HandoverGranted { .. }
            )
        });
        if switched {
            report.switch_count += 1;
            report.max_switch_jump = report.max_switch_jump.max(jump);
        }
        for e in &out.events {
            if let ControllerEvent::HandoverGranted { mirror_error } = e {
                if !(*mirror_error < config.temporal.mirror_tolerance) {
                    report.premature_grants += 1;
                }
            }
        }
        if !out.clamped.is_empty() {
            report.clamp_events += 1;
        }
        for d in &step.diagnostics {
            match d {
                Diagnostic::IkSafeHold { .. } => report.ik_safe_holds += 1,
                Diagnostic::EstopLatched(r) if !was_estopped => report.estops.push(EstopEvent {
                    tick: state.tick,
                    time: state.time,
                    reason: estop_reason(r),
                }),
                _ => {}
            }
        }

        let mut events: Vec<String> = out.events.iter().map(event_name).collect();
        if step.ik_safe_hold() {
            events.push("IkSafeHold".into());
        }
        let mut record = TickRecord {
            kind: "tick".into(),
            state: state_update(state, out.phase, &replica),
            events,
        };
        record.state.safe_hold = step.ik_safe_hold();
        rec.push(to_line(&record));
        observe(&TickTrace {
            state,
            phase: out.phase,
            replica: &replica,
            events: &out.events,
        });
        tracker.observe(&script.waypoint, state, &mut first_hit);
    }
    tracker.finish(&script.waypoint, sim.state());

    report.waypoints = tracker.results;
    report.digest = hex(&rec.hasher.finalize());
    report.passed = report.estops.is_empty()
        && report.waypoints.iter().all(|w| w.reached)
        && report.max_switch_jump < SWITCH_LIMIT
        && report.premature_grants == 0;
    Ok(RunOutput {
        report,
        log: rec.lines,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a log as written (lines joined with `\n`, trailing newline).
pub fn digest_of(log: &str) -> String {
    hex(&Sha256::digest(log.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayVerdict {
    Match { digest: String },
    /// First tick whose recorded line differs from the re-simulation. `None`
    /// when the header itself cannot be used.
    Mismatch { tick: Option<u64>, detail: String },
}

impl ReplayVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, ReplayVerdict::Match { .. })
    }
}

/// Re-simulates the scenario embedded in a log and compares line by line.
pub fn replay(log: &str) -> ReplayVerdict {
    let mut lines = log.lines();
    let Some(header_line) = lines.next() else {
        return ReplayVerdict::Mismatch {
            tick: None,
            detail: "empty log".into(),
        };
    };
    let header: Header = match serde_json::from_str(header_line) {
        Ok(h) => h,
        Err(e) => {
            return ReplayVerdict::Mismatch {
                tick: None,
                detail: format!("unreadable header: {e}"),
            }
        }
    };
    if header.kind != "header" || header.format != LOG_FORMAT {
        return ReplayVerdict::Mismatch {
            tick: None,
            detail: format!("unsupported log format {}", header.format),
        };
    }
    let rerun = match run(&header.scenario) {
        Ok(r) => r,
        Err(e) => {
            return ReplayVerdict::Mismatch {
                tick: None,
                detail: format!("scenario does not run: {e}"),
            }
        }
    };
    if rerun.log[0] != header_line {
        return ReplayVerdict::Mismatch {
            tick: None,
            detail: "header is not in canonical form".into(),
        };
    }
    let recorded: Vec<&str> = lines.collect();
    let expected = &rerun.log[1..];
    for i in 0..recorded.len().max(expected.len()) {
        match (recorded.get(i), expected.get(i)) {
            (Some(a), Some(b)) if *a == b.as_str() => {}
            (a, b) => {
                return ReplayVerdict::Mismatch {
                    tick: Some(i as u64),
                    detail: match (a, b) {
                        (Some(_), Some(_)) => "recorded state differs".into(),
                        (None, _) => "log ends early".into(),
                        (_, None) => "log has extra ticks".into(),
                    },
                }
            }
        }
    }
    ReplayVerdict::Match {
        digest: rerun.report.digest,
    }
}

fn read_pose<R: BufRead>(input: &mut R, what: &str) -> Result<[f64; ENCODER_COUNT]> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = input
            .read_line(&mut line)
            .map_err(|e| HarnessError::Calibration(e.to_string()))?;
        if n == 0 {
            return Err(HarnessError::Calibration(format!("input ended before the {what} pose")));
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| HarnessError::Calibration(format!("{what} pose: {e}")))?;
        return values
            .try_into()
            .map_err(|v: Vec<f64>| HarnessError::Calibration(format!("{what} pose: expected 6 encoder values, got {}", v.len())));
    }
}

/// Records the open and closed hand poses from a stream of encoder readings,
/// one pose per line (six radians separated by spaces or commas). Prompts go
/// to `prompt`.
pub fn calibrate_hand<R: BufRead, W: Write>(mut input: R, mut prompt: W) -> Result<HandCalibration> {
    let say = |w: &mut W, s: &str| writeln!(w, "{s}").map_err(|e| HarnessError::Calibration(e.to_string()));
    say(&mut prompt, "Open the hand fully and enter the six encoder readings:")?;
    let open = read_pose(&mut input, "open")?;
    say(&mut prompt, "Close the hand fully and enter the six encoder readings:")?;
    let closed = read_pose(&mut input, "closed")?;
    HandCalibration::new(open, closed).map_err(|e| HarnessError::Calibration(e.to_string()))
}
