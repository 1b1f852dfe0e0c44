#![allow(dead_code)]

use std::path::PathBuf;

use gl_teleop::protocol::{ArmInfo, Mode, Payload, Phase, Role, StateUpdate, SwitchStatus, TeleopMessage};
use gl_teleop::scenario::{Scenario, ScenarioFile};
use rand::Rng;

pub fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn read(rel: &str) -> String {
    std::fs::read_to_string(repo().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Scenario from inline TOML, with `model` and `config` read from the repo.
pub fn scenario(script: &str, model: &str, config: Option<&str>) -> Scenario {
    let script: ScenarioFile = toml::from_str(script).expect("scenario parses");
    Scenario {
        script,
        model: read(model),
        config: config.map(str::to_string),
        hand_calibration: None,
    }
}

pub fn shipped(name: &str) -> Scenario {
    Scenario::load(&repo().join("scenarios").join(name), None, None).expect("shipped scenario loads")
}

/// Finite doubles drawn to stress formatting: raw bit patterns, subnormals,
/// signed zeros, extremes and ordinary magnitudes.
pub fn any_f64(rng: &mut impl Rng) -> f64 {
    loop {
        let v = match rng.random_range(0..8) {
            0 => f64::from_bits(rng.next_u64()),
            1 => f64::from_bits(rng.random_range(1..(1u64 << 52))) * if rng.random() { 1.0 } else { -1.0 },
            2 => *[0.0, -0.0, f64::MAX, f64::MIN, f64::MIN_POSITIVE, f64::EPSILON, 1.0, -1.0]
                .get(rng.random_range(0..8))
                .unwrap(),
            3 => rng.random_range(-1.0..1.0) * 1e-300,
            4 => rng.random_range(-1e6..1e6),
            _ => rng.random_range(-4.0..4.0),
        };
        if v.is_finite() {
            return v;
        }
    }
}

fn arr<const N: usize>(rng: &mut impl Rng) -> [f64; N] {
    std::array::from_fn(|_| any_f64(rng))
}

fn vec_f64(rng: &mut impl Rng, max: usize) -> Vec<f64> {
    (0..rng.random_range(0..=max)).map(|_| any_f64(rng)).collect()
}

pub fn any_string(rng: &mut impl Rng) -> String {
    const POOL: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '\n', '\t', '\u{1}', 'é', '→', '😀', '/', '{', '}'];
    (0..rng.random_range(0..24)).map(|_| POOL[rng.random_range(0..POOL.len())]).collect()
}

fn mode(rng: &mut impl Rng) -> Mode {
    if rng.random() {
        Mode::Global
    } else {
        Mode::Local
    }
}

pub fn any_payload(rng: &mut impl Rng) -> Payload {
    match rng.random_range(0..18) {
        0 => Payload::JointCommand { joints: vec_f64(rng, 9) },
        1 => Payload::CartesianCommand { position: arr(rng), orientation: arr(rng) },
        2 => Payload::StylusPose { position: arr(rng), orientation: arr(rng) },
        3 => Payload::GripperCommand { value: any_f64(rng) },
        4 => Payload::HandCommand { channels: arr(rng) },
        5 => Payload::ImuUpdate { forearm: arr(rng), hand: arr(rng) },
        6 => Payload::ExoskeletonUpdate { encoders: arr(rng) },
        7 => Payload::ModeSwitch { mode: mode(rng) },
        8 => Payload::ModeStatus {
            mode: mode(rng),
            status: if rng.random() { SwitchStatus::Granted } else { SwitchStatus::Pending },
        },
        9 => Payload::Configure { alpha_l: any_f64(rng), alpha_r: any_f64(rng) },
        10 => Payload::StateUpdate(StateUpdate {
            tick: rng.next_u64(),
            time: any_f64(rng),
            phase: [Phase::Global, Phase::Local, Phase::Handover][rng.random_range(0..3)],
            joints: vec_f64(rng, 8),
            commanded: vec_f64(rng, 8),
            ee_position: arr(rng),
            ee_orientation: arr(rng),
            gripper: any_f64(rng),
            hand: arr(rng),
            replica: rng.random::<bool>().then(|| vec_f64(rng, 8)),
            estopped: rng.random(),
            safe_hold: rng.random(),
        }),
        11 => Payload::SafeHold { active: rng.random(), reason: any_string(rng) },
        12 => Payload::Hello {
            role: if rng.random() { Role::Master } else { Role::Observer },
            authority: rng.random(),
        },
        13 => Payload::Welcome {
            authority: rng.random(),
            arms: (0..rng.random_range(0..3))
                .map(|i| ArmInfo { arm: i, driver: any_string(rng), dof: rng.random_range(0..10), model: any_string(rng) })
                .collect(),
        },
        14 => Payload::Heartbeat,
        15 => Payload::Estop,
        16 => Payload::Reset,
        _ => Payload::Error { code: any_string(rng), text: any_string(rng) },
    }
}

pub fn any_message(rng: &mut impl Rng) -> TeleopMessage {
    TeleopMessage::new(any_string(rng), rng.next_u32(), rng.next_u64(), rng.next_u64(), any_payload(rng))
}

/// Every float of a payload with its bit pattern, in a fixed order.
pub fn float_bits(p: &Payload) -> Vec<u64> {
    let v: Vec<f64> = match p {
        Payload::JointCommand { joints } => joints.clone(),
        Payload::CartesianCommand { position, orientation } | Payload::StylusPose { position, orientation } => {
            position.iter().chain(orientation).copied().collect()
        }
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
    };
    v.into_iter().map(f64::to_bits).collect()
}

/// Ten-second mode-switch scenario on the six-axis arm with `switches` pedal
/// changes (at least three) at random times, a wandering replica and stylus,
/// and a randomized mirror speed so handovers take a varying number of ticks.
pub fn switch_scenario(rng: &mut impl Rng, switches: usize) -> Scenario {
    use std::fmt::Write;
    let home = [0.0, 1.0, -1.2, 0.0, 1.0, 0.0];
    let duration = 10.0;
    let mut s = String::new();
    writeln!(s, "name = \"switch\"\nmodel = \"piper6.toml\"\nmode = \"temporal\"\nduration = {duration:?}").unwrap();
    writeln!(s, "operator_speed = {:?}", rng.random_range(0.3..1.0)).unwrap();
    for k in 0..6 {
        let t = k as f64 * 2.0;
        let q: Vec<f64> = home.iter().map(|h| h + rng.random_range(-0.35..0.35)).collect();
        writeln!(s, "[[replica]]\nt = {t:?}\njoints = {q:?}").unwrap();
    }
    for k in 0..11 {
        let t = k as f64;
        let p = [0.3 + rng.random_range(-0.03..0.03), rng.random_range(-0.03..0.03), 0.2 + rng.random_range(-0.03..0.03)];
        let half = rng.random_range(-0.08..0.08f64);
        let q = [half.cos(), 0.0, 0.0, half.sin()];
        writeln!(s, "[[stylus]]\nt = {t:?}\nposition = {p:?}\norientation = {q:?}").unwrap();
    }
    // Pedal changes spaced at least 0.6 s apart inside [0.3, 9.0].
    let mut times: Vec<f64> = Vec::new();
    while times.len() < switches {
        let t = (rng.random_range(0.3..9.0f64) * 100.0).round() / 100.0;
        if times.iter().all(|u| (u - t).abs() >= 0.6) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    for (i, t) in times.iter().enumerate() {
        let m = if i % 2 == 0 { "local" } else { "global" };
        writeln!(s, "[[pedal]]\nt = {t:?}\nmode = \"{m}\"").unwrap();
    }
    let config = format!(
        "mirror_velocity_limit = {:?}\nalpha_l = {:?}\nalpha_r = {:?}\n",
        rng.random_range(0.2..1.5),
        rng.random_range(0.2..=1.0),
        rng.random_range(0.2..=1.0)
    );
    scenario(&s, "models/piper6.toml", Some(&config))
}
