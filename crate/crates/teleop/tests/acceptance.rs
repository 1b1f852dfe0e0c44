//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Oracles here are written independently of the
//! library code they check.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;
use std::time::Instant;

use gl_teleop::core::controller::{
    engage_local, local_target, wrist_rotation, ControllerEvent, ImuCalibration, ImuPair, ScalingFactors,
    SpatialController,
};
use gl_teleop::core::hand::{retarget, ExoskeletonReading, HandCalibration, HandTarget};
use gl_teleop::core::kinematics::{IkConfig, JointVector, Pose};
use gl_teleop::core::nalgebra::{Matrix3, Vector3};
use gl_teleop::core::rotation::{extract_euler, EulerConvention, RotationMatrix, UnitQuaternion};
use gl_teleop::core::sim::SimSlave;
use gl_teleop::core::SlaveCommand;
use gl_teleop::harness::{self, replay, TickTrace};
use gl_teleop::model::{default_hand_calibration, ControllerConfig, RobotModel};
use gl_teleop::protocol::{decode, encode, Payload, Phase, Role, TeleopMessage};
use gl_teleop::session::{ArmSetup, Inbound, Session, SessionConfig, DEFAULT_HEARTBEAT_TIMEOUT_US};
use gl_teleop::station::Decoupling;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EULER_SAMPLES: usize = 100_000;
const EULER_TOL: f64 = 1e-9;
const EULER_SECONDS: f64 = 10.0;
const CLUTCH_SAMPLES: usize = 10_000;
const CLUTCH_TOL: f64 = 1e-12;
const SWITCH_SCENARIOS: usize = 50;
const MIN_SWITCHES: usize = 3;
const SWITCH_TOL: f64 = 1e-9;
const MIRROR_TOL: f64 = 1e-3;
const WRIST_TOL: f64 = 1e-12;
const WRIST_SAMPLES: usize = 10_000;
const IK_TRIALS: usize = 1000;
const IK_RATE: f64 = 0.99;
const IK_POS_TOL: f64 = 1e-4;
const IK_ANG_TOL: f64 = 1e-3;
const PRECISION_SEEDS: u64 = 100;
const PRECISION_SIGMA: f64 = 0.002;
const PRECISION_RATIO: f64 = 0.2;
const PRECISION_REL_TOL: f64 = 0.15;
const PRECISION_SECONDS: f64 = 30.0;
const FINE_ALPHA: f64 = 0.1;
const FINE_LIMIT: f64 = 1e-3;
const RANGE_FRACTION: f64 = 0.95;
const SWEEP_POINTS: usize = 1000;
const FUZZ_MESSAGES: usize = 100_000;
const SAFE_HOLD_US: u64 = 300_000;

struct Verdict {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Verdict {
    let t = Instant::now();
    let (passed, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (false, format!("panicked: {}", p.downcast_ref::<String>().cloned().unwrap_or_default())),
    };
    let v = Verdict { name, passed, detail: format!("{detail} [{:.2} s]", t.elapsed().as_secs_f64()) };
    println!("{} {:<22} {}", if v.passed { "PASS" } else { "FAIL" }, v.name, v.detail);
    v
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- oracles -------------------------------------------------------------

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Uniform random rotation (Shoemake's subgroup algorithm).
fn random_quaternion(rng: &mut impl Rng) -> [f64; 4] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (t2, t3) = (2.0 * PI * u2, 2.0 * PI * u3);
    [b * t3.cos(), a * t2.sin(), a * t2.cos(), b * t3.sin()]
}

fn quat(q: [f64; 4]) -> UnitQuaternion {
    UnitQuaternion::new(q[0], q[1], q[2], q[3]).unwrap()
}

/// Rotation matrix of a unit quaternion by the textbook formula.
fn quat_matrix([w, x, y, z]: [f64; 4]) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0],
    ]
}

fn conj(q: [f64; 4]) -> [f64; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Rotation vector (axis times angle in [0, π]) of a unit quaternion.
fn rotation_vector(q: [f64; 4]) -> Vector3<f64> {
    let s = if q[0] < 0.0 { -1.0 } else { 1.0 };
    let v = Vector3::new(q[1], q[2], q[3]) * s;
    let n = v.norm();
    if n == 0.0 {
        return Vector3::zeros();
    }
    v * (2.0 * n.atan2(q[0] * s) / n)
}

fn random_rotation(rng: &mut impl Rng) -> RotationMatrix {
    quat(random_quaternion(rng)).to_rotation_matrix()
}

// ---- criteria ------------------------------------------------------------

fn euler_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut measure = |m: Matrix3<f64>, conv: EulerConvention| {
        let r = RotationMatrix::from_matrix(m).expect("oracle matrix is a rotation");
        let e = extract_euler(&r, conv);
        let back = match conv {
            EulerConvention::Xyz => rx(e.a) * ry(e.b) * rz(e.c),
            EulerConvention::Xyx => rx(e.a) * ry(e.b) * rx(e.c),
        };
        worst = worst.max((back - m).norm());
        count += 1;
    };
    for conv in [EulerConvention::Xyz, EulerConvention::Xyx] {
        for _ in 0..EULER_SAMPLES {
            measure(quat_matrix(random_quaternion(&mut rng)), conv);
        }
    }
    // Gimbal branch: middle angle on or within a hair of the singular values.
    let mut gimbal = 0;
    for k in 0..400 {
        let a = rng.random_range(-PI..PI);
        let c = rng.random_range(-PI..PI);
        let delta = [0.0, 1e-13, 1e-11, 1e-9, 1e-7, 1e-5][k % 6] * if k % 2 == 0 { 1.0 } else { -1.0 };
        for b in [FRAC_PI_2 - delta, -FRAC_PI_2 + delta] {
            measure(rx(a) * ry(b) * rz(c), EulerConvention::Xyz);
            gimbal += 1;
        }
        for b in [delta.abs(), PI - delta.abs()] {
            measure(rx(a) * ry(b) * rx(c), EulerConvention::Xyx);
            gimbal += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("{count} rotations ({gimbal} gimbal), max Frobenius {worst:.2e} (< {EULER_TOL:e}), {secs:.2} s (< {EULER_SECONDS} s)");
    ensure(worst < EULER_TOL && secs < EULER_SECONDS, || detail.clone())?;
    Ok(detail)
}

fn clutch_law() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_angle: f64 = 0.0;
    let mut worst_axis: f64 = 0.0;
    let mut inexact = 0;
    for i in 0..CLUTCH_SAMPLES {
        let (al, ar) = match i % 4 {
            0 => (1.0, 1.0),
            _ => (rng.random_range(1e-3..=1.0), rng.random_range(1e-3..=1.0)),
        };
        let scale = ScalingFactors::new(al, ar).map_err(|e| e.to_string())?;
        let v3 = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let (ee_p, p0, p) = (v3(&mut rng), v3(&mut rng), v3(&mut rng));
        let (ee_q, q0, q) = (random_quaternion(&mut rng), random_quaternion(&mut rng), random_quaternion(&mut rng));
        let anchor = engage_local(&Pose::new(p0, quat(q0)), &Pose::new(ee_p, quat(ee_q)));
        let target = local_target(&anchor, &Pose::new(p, quat(q)), &scale, &UnitQuaternion::IDENTITY)
            .map_err(|e| e.to_string())?;

        let expected = ee_p + (p - p0) * al;
        if target.position != expected {
            inexact += 1;
        }

        let full = rotation_vector(hamilton(conj(q0), q));
        let ee_now = quat(ee_q).to_array();
        let applied = rotation_vector(hamilton(conj(ee_now), target.orientation.to_array()));
        worst_angle = worst_angle.max((applied.norm() - ar * full.norm()).abs());
        worst_axis = worst_axis.max((applied - full * ar).norm());
    }
    let mut rejected = 0;
    for bad in [0.0, -0.5, 1.0 + 1e-12, 1.5] {
        rejected += usize::from(ScalingFactors::new(bad, 1.0).is_err());
        rejected += usize::from(ScalingFactors::new(1.0, bad).is_err());
    }
    let detail = format!(
        "{CLUTCH_SAMPLES} triples, position bit-exact misses {inexact}, angle err {worst_angle:.2e}, rotation-vector err {worst_axis:.2e} (< {CLUTCH_TOL:e}), rejected {rejected}/8 bad alphas"
    );
    ensure(inexact == 0 && worst_angle < CLUTCH_TOL && worst_axis < CLUTCH_TOL && rejected == 8, || detail.clone())?;
    Ok(detail)
}

fn switch_continuity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_jump: f64 = 0.0;
    let mut worst_grant_gap: f64 = 0.0;
    let mut fewest = usize::MAX;
    let mut estops = 0;
    let mut switches_total = 0;
    for _ in 0..SWITCH_SCENARIOS {
        let pedals = rng.random_range(MIN_SWITCHES + 1..=7);
        let scenario = common::switch_scenario(&mut rng, pedals);
        let mut prev_cmd: Option<JointVector> = None;
        let mut switches = 0;
        let out = harness::run_observed(&scenario, |t: &TickTrace<'_>| {
            let switched = t.events.iter().any(|e| {
                matches!(
                    e,
                    ControllerEvent::Engaged(_) | ControllerEvent::HandoverRequested | ControllerEvent::HandoverGranted { .. }
                )
            });
            if switched {
                switches += 1;
                if let Some(prev) = &prev_cmd {
                    let jump = prev.iter().zip(t.state.commanded.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    worst_jump = worst_jump.max(jump);
                }
            }
            if t.events.iter().any(|e| matches!(e, ControllerEvent::HandoverGranted { .. })) {
                let gap = t.replica.iter().zip(t.state.joints.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst_grant_gap = worst_grant_gap.max(gap);
            }
            prev_cmd = Some(t.state.commanded.clone());
        })
        .map_err(|e| e.to_string())?;
        // The first command comes from the home pose.
        if out.report.switch_count != switches {
            return Err("report and trace disagree on switch count".into());
        }
        estops += out.report.estops.len();
        fewest = fewest.min(switches);
        switches_total += switches;
    }
    let detail = format!(
        "{SWITCH_SCENARIOS} scenarios, {switches_total} switch ticks (min {fewest} per run), max jump {worst_jump:.2e} rad (< {SWITCH_TOL:e}), max replica gap at grant {worst_grant_gap:.2e} rad (< {MIRROR_TOL:e}), {estops} e-stops"
    );
    ensure(
        worst_jump < SWITCH_TOL && worst_grant_gap < MIRROR_TOL && fewest >= MIN_SWITCHES && estops == 0,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn wrist_mapping() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut inject: f64 = 0.0;
    let mut world: f64 = 0.0;
    for _ in 0..WRIST_SAMPLES {
        let (h1, h2, s, w) = (random_rotation(&mut rng), random_rotation(&mut rng), random_rotation(&mut rng), random_rotation(&mut rng));
        let calib = ImuCalibration { forearm_home: h1, hand_home: h2 };
        let got = wrist_rotation(&calib, &ImuPair { forearm: h1, hand: h2 * s });
        inject = inject.max(got.frobenius_distance(&s));

        let (r1, r2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let a = wrist_rotation(&calib, &ImuPair { forearm: r1, hand: r2 });
        let moved = ImuCalibration { forearm_home: w * h1, hand_home: w * h2 };
        let b = wrist_rotation(&moved, &ImuPair { forearm: w * r1, hand: w * r2 });
        world = world.max(a.frobenius_distance(&b));
    }

    // Every tick of a spatial run commands all seven joints: replica joints
    // for the arm, Euler angles of the wrist rotation for the rest.
    let model = RobotModel::parse(&common::read("models/flexiv7.toml"), "flexiv7").map_err(|e| e.to_string())?;
    let chain = model.chain.clone();
    let mut covered = 0;
    let mut wrist_err: f64 = 0.0;
    for _ in 0..WRIST_SAMPLES {
        let (h1, h2) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let ctl = SpatialController::new(chain.clone(), ImuCalibration { forearm_home: h1, hand_home: h2 }, EulerConvention::Xyz)
            .map_err(|e| e.to_string())?;
        let replica = JointVector(chain.limits().take(4).map(|l| rng.random_range(l.min..=l.max)).collect());
        // Wrist rotations inside the wrist limits so nothing is clamped.
        let e = [rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3)];
        let s = rx(e[0]) * ry(e[1]) * rz(e[2]);
        let s_rot = RotationMatrix::from_matrix(s).map_err(|e| e.to_string())?;
        let out = ctl.step(&replica, &ImuPair { forearm: h1, hand: h2 * s_rot }, None).map_err(|e| e.to_string())?;
        let SlaveCommand::JointTarget(q) = out.arm else {
            return Err("spatial step did not emit a joint target".into());
        };
        if q.len() == 7 && q.0[..4] == replica.0[..] {
            covered += 1;
        }
        let back = rx(q[4]) * ry(q[5]) * rz(q[6]);
        wrist_err = wrist_err.max((back - s).norm());
    }
    let detail = format!(
        "body-frame injection {inject:.2e}, world invariance {world:.2e} (< {WRIST_TOL:e}); {covered}/{WRIST_SAMPLES} steps command 7 joints, wrist recomposition {wrist_err:.2e}"
    );
    ensure(inject < WRIST_TOL && world < WRIST_TOL && covered == WRIST_SAMPLES && wrist_err < 1e-9, || detail.clone())?;
    Ok(detail)
}

fn inverse_kinematics() -> Result<String, String> {
    let model = RobotModel::parse(&common::read("models/flexiv7.toml"), "flexiv7").map_err(|e| e.to_string())?;
    let chain = &model.chain;
    let cfg = IkConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut converged = 0;
    let mut violations = 0;
    for _ in 0..IK_TRIALS {
        let q = JointVector(chain.limits().map(|l| rng.random_range(l.min..=l.max)).collect());
        let target = chain.forward_kinematics(&q).map_err(|e| e.to_string())?;
        let seed = chain.clamp(&JointVector(q.iter().map(|v| v + rng.random_range(-0.3..=0.3)).collect()));
        let sol = chain.solve_ik(&target, &seed, &cfg).map_err(|e| e.to_string())?;
        let limits_ok = sol.joints.iter().zip(chain.limits()).all(|(v, l)| *v >= l.min && *v <= l.max);
        if !limits_ok {
            violations += 1;
        }
        let reached = chain.forward_kinematics(&sol.joints).map_err(|e| e.to_string())?;
        let dp = (reached.position - target.position).norm();
        let da = rotation_vector(hamilton(conj(target.orientation.to_array()), reached.orientation.to_array())).norm();
        if sol.converged && dp < IK_POS_TOL && da < IK_ANG_TOL {
            converged += 1;
        }
    }

    // Unreachable Cartesian targets: the sim holds position and flags it.
    let mut holds = 0;
    let mut errors = 0;
    let trials = 100;
    for _ in 0..trials {
        let mut sim = SimSlave::new(chain.clone(), model.safety.clone(), cfg, 0.01, model.home.clone()).map_err(|e| e.to_string())?;
        let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..1.0)).normalize();
        let target = Pose::new(dir * 1.8, quat(random_quaternion(&mut rng)));
        let before = sim.state().joints.clone();
        match sim.step(&[SlaveCommand::CartesianTarget(target)]) {
            Ok(report) if report.ik_safe_hold() && sim.state().joints == before && !sim.state().estopped => holds += 1,
            Ok(_) => {}
            Err(_) => errors += 1,
        }
    }
    let rate = converged as f64 / IK_TRIALS as f64;
    let detail = format!(
        "{converged}/{IK_TRIALS} converged ({:.1}% >= {:.0}%), {violations} limit violations; {holds}/{trials} unreachable targets safe-held, {errors} loop errors",
        rate * 100.0,
        IK_RATE * 100.0
    );
    ensure(rate >= IK_RATE && violations == 0 && holds == trials && errors == 0, || detail.clone())?;
    Ok(detail)
}

/// Final position error of a clutch positioning run: the stylus travels
/// `goal / alpha` so the commanded displacement is the same for every alpha.
fn precision_run(seed: u64, alpha: f64, home: Vector3<f64>) -> Result<f64, String> {
    let goal = Vector3::new(0.01, 0.005, -0.005);
    let start = Vector3::new(0.3, 0.0, 0.2);
    let end = start + goal / alpha;
    let target = home + goal;
    let script = format!(
        r#"name = "precision"
model = "piper6.toml"
mode = "temporal"
duration = 2.0
[noise]
seed = {seed}
sigma = {PRECISION_SIGMA:?}
[[pedal]]
t = 0.1
mode = "local"
[[stylus]]
t = 0.0
position = [{:?}, {:?}, {:?}]
[[stylus]]
t = 0.2
position = [{:?}, {:?}, {:?}]
[[stylus]]
t = 1.2
position = [{:?}, {:?}, {:?}]
[[waypoint]]
t = 2.0
position = [{:?}, {:?}, {:?}]
"#,
        start.x, start.y, start.z, start.x, start.y, start.z, end.x, end.y, end.z, target.x, target.y, target.z
    );
    let config = format!("alpha_l = {alpha:?}\n[ik]\npos_tol = 1e-7\nang_tol = 1e-6\n");
    let out = harness::run(&common::scenario(&script, "models/piper6.toml", Some(&config))).map_err(|e| e.to_string())?;
    if !out.report.estops.is_empty() {
        return Err(format!("seed {seed} alpha {alpha}: e-stop"));
    }
    Ok(out.report.waypoints[0].position_error.expect("position waypoint"))
}

fn precision_mechanism() -> Result<String, String> {
    let model = RobotModel::parse(&common::read("models/piper6.toml"), "piper6").map_err(|e| e.to_string())?;
    let home = model.chain.forward_kinematics(&model.home).map_err(|e| e.to_string())?.position;
    let start = Instant::now();
    let (mut fine, mut coarse) = (0.0, 0.0);
    for seed in 0..PRECISION_SEEDS {
        fine += precision_run(seed, PRECISION_RATIO, home)?;
        coarse += precision_run(seed, 1.0, home)?;
    }
    let secs = start.elapsed().as_secs_f64();
    let ratio = fine / coarse;
    let rel = (ratio / PRECISION_RATIO - 1.0).abs();
    let n = PRECISION_SEEDS as f64;
    let detail = format!(
        "mean error {:.3} mm at alpha 0.2 vs {:.3} mm at 1.0 over {PRECISION_SEEDS} seeds, ratio {ratio:.4} ({:.1}% from 0.2, <= {:.0}%), {secs:.2} s (< {PRECISION_SECONDS} s)",
        fine / n * 1e3,
        coarse / n * 1e3,
        rel * 100.0,
        PRECISION_REL_TOL * 100.0,
    );
    ensure(rel <= PRECISION_REL_TOL && secs < PRECISION_SECONDS, || detail.clone())?;
    Ok(detail)
}

/// The shipped dot-aiming scenario at alpha 0.1 must land within 1 mm. The
/// per-seed sweep is reported alongside: the residual is alpha times the
/// difference of two noise samples, so a few seeds in a hundred exceed 1 mm.
fn fine_precision() -> Result<String, String> {
    let out = harness::run(&common::shipped("precision.toml")).map_err(|e| e.to_string())?;
    let last = out.report.waypoints.last().and_then(|w| w.position_error).ok_or("no final waypoint")?;

    let model = RobotModel::parse(&common::read("models/piper6.toml"), "piper6").map_err(|e| e.to_string())?;
    let home = model.chain.forward_kinematics(&model.home).map_err(|e| e.to_string())?.position;
    let mut errors = Vec::new();
    for seed in 0..PRECISION_SEEDS {
        errors.push(precision_run(seed, FINE_ALPHA, home)?);
    }
    errors.sort_by(f64::total_cmp);
    let within = errors.iter().filter(|e| **e <= FINE_LIMIT).count();
    let detail = format!(
        "shipped scenario final error {:.3} mm (<= 1 mm); seed sweep at alpha {FINE_ALPHA}: {within}/{PRECISION_SEEDS} within 1 mm, median {:.3} mm, worst {:.3} mm",
        last * 1e3,
        errors[errors.len() / 2] * 1e3,
        errors[errors.len() - 1] * 1e3
    );
    ensure(last <= FINE_LIMIT && out.report.passed, || detail.clone())?;
    Ok(detail)
}

fn full_range() -> Result<String, String> {
    let scenario = common::shipped("full_range.toml");
    let model = RobotModel::parse(&scenario.model, "flexiv7").map_err(|e| e.to_string())?;
    let dof = model.chain.dof();
    let mut lo = vec![f64::INFINITY; dof];
    let mut hi = vec![f64::NEG_INFINITY; dof];
    let mut all_global = true;
    let out = harness::run_observed(&scenario, |t| {
        all_global &= t.phase == Phase::Global;
        for (i, v) in t.state.joints.iter().enumerate() {
            lo[i] = lo[i].min(*v);
            hi[i] = hi[i].max(*v);
        }
    })
    .map_err(|e| e.to_string())?;
    let coverage: Vec<f64> = model.chain.limits().enumerate().map(|(i, l)| (hi[i] - lo[i]) / (l.max - l.min)).collect();
    let least = coverage.iter().cloned().fold(f64::INFINITY, f64::min);
    let r = &out.report;
    let reached = r.waypoints.iter().filter(|w| w.reached).count();
    let detail = format!(
        "{dof}-DOF sweep in Global mode, least joint coverage {:.1}% (>= {:.0}%), {reached}/{} waypoints within tolerance, {} e-stops",
        least * 100.0,
        RANGE_FRACTION * 100.0,
        r.waypoints.len(),
        r.estops.len()
    );
    ensure(dof == 7 && all_global && least >= RANGE_FRACTION && reached == r.waypoints.len() && r.estops.is_empty(), || detail.clone())?;
    Ok(detail)
}

fn hand_retargeting() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut calibs = vec![default_hand_calibration()];
    while calibs.len() < 20 {
        let open: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.2..0.2));
        let closed: [f64; 6] = std::array::from_fn(|i| open[i] + rng.random_range(0.6..1.5) * if i == 5 { -1.0 } else { 1.0 });
        if let Ok(c) = HandCalibration::new(open, closed) {
            calibs.push(c);
        }
    }
    let mut unequal = 0;
    let mut non_monotone = 0;
    let mut endpoint_misses = 0;
    for calib in &calibs {
        let map = |e: [f64; 6]| retarget(&ExoskeletonReading::new(e).unwrap(), calib).unwrap();
        if map(calib.open).0 != [0.0; 6] {
            endpoint_misses += 1;
        }
        if map(calib.closed).0 != [1.0; 6] {
            endpoint_misses += 1;
        }
        let mut prev: Option<HandTarget> = None;
        for k in 0..SWEEP_POINTS {
            let s = k as f64 / (SWEEP_POINTS - 1) as f64;
            let e: [f64; 6] = std::array::from_fn(|i| calib.open[i] + s * (calib.closed[i] - calib.open[i]));
            let t = map(e);
            if let Some(p) = prev {
                non_monotone += (0..6).filter(|&c| t.0[c] < p.0[c]).count();
            }
            prev = Some(t);
        }
        for _ in 0..1000 {
            let e: [f64; 6] = std::array::from_fn(|i| calib.open[i] + rng.random_range(-0.2..1.2) * (calib.closed[i] - calib.open[i]));
            let t = map(e);
            if !(t.0[3] == t.0[2] && t.0[4] == t.0[2] && t.0[5] == t.0[2]) {
                unequal += 1;
            }
        }
    }
    let detail = format!(
        "{} calibrations: four-channel inequalities {unequal}, monotonicity breaks {non_monotone} over {SWEEP_POINTS}-point sweeps, endpoint misses {endpoint_misses}",
        calibs.len()
    );
    ensure(unequal == 0 && non_monotone == 0 && endpoint_misses == 0, || detail.clone())?;
    Ok(detail)
}

fn determinism_and_protocol() -> Result<String, String> {
    let mut digests_equal = 0;
    let names = ["precision.toml", "full_range.toml", "mode_switch.toml", "spatial_hand.toml"];
    for name in names {
        let s = common::shipped(name);
        let a = harness::run(&s).map_err(|e| e.to_string())?;
        let b = harness::run(&s).map_err(|e| e.to_string())?;
        if a.report.digest == b.report.digest && replay(&a.log_text()).passed() {
            digests_equal += 1;
        }
    }
    let golden = replay(&common::read("crates/teleop/tests/data/golden_mode_switch.jsonl")).passed();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut lossy = 0;
    for _ in 0..FUZZ_MESSAGES {
        let m = common::any_message(&mut rng);
        match encode(&m).and_then(|f| decode(&f)) {
            Ok(back) if back == m && common::float_bits(&back.payload) == common::float_bits(&m.payload) => {}
            _ => lossy += 1,
        }
    }

    let text = common::read("models/piper6.toml");
    let mut session = Session::new(
        SessionConfig::default(),
        vec![ArmSetup {
            model: RobotModel::parse(&text, "piper6").map_err(|e| e.to_string())?,
            model_text: text,
            config: ControllerConfig::default(),
            decoupling: Decoupling::Temporal,
            hand: default_hand_calibration(),
        }],
    )
    .map_err(|e| e.to_string())?;
    let hello = TeleopMessage::new("gl", 0, 1, 0, Payload::Hello { role: Role::Master, authority: true });
    session.step([Inbound::Connected(1), Inbound::Frame(1, Ok(hello))], 0);
    let tick = 10_000;
    let mut held_at = None;
    for k in 1..=100u64 {
        let out = session.step([], k * tick);
        if out.messages.iter().any(|o| matches!(o.message.payload, Payload::SafeHold { active: true, .. })) {
            held_at = Some(k * tick);
            break;
        }
    }
    let held = held_at.is_some_and(|t| t <= SAFE_HOLD_US) && DEFAULT_HEARTBEAT_TIMEOUT_US <= SAFE_HOLD_US;

    let detail = format!(
        "{digests_equal}/{} scenarios repeat bit-identically and replay, golden log {}, {lossy}/{FUZZ_MESSAGES} lossy round trips, safe-hold after {} ms of silence (<= 300 ms)",
        names.len(),
        if golden { "replays" } else { "MISMATCH" },
        held_at.map_or("never".to_string(), |t| format!("{}", t / 1000))
    );
    ensure(digests_equal == names.len() && golden && lossy == 0 && held, || detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let verdicts = [
        check("euler_round_trip", euler_round_trip),
        check("clutch_law", clutch_law),
        check("switch_continuity", switch_continuity),
        check("wrist_mapping", wrist_mapping),
        check("inverse_kinematics", inverse_kinematics),
        check("precision_mechanism", precision_mechanism),
        check("fine_precision", fine_precision),
        check("full_range", full_range),
        check("hand_retargeting", hand_retargeting),
        check("determinism_protocol", determinism_and_protocol),
    ];
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
