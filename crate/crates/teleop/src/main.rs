use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gl_teleop::harness::{self, HarnessError, ReplayVerdict};
use gl_teleop::model::{
    default_hand_calibration, load_hand_calibration, ControllerConfig, HandCalibrationFile, RobotModel,
};
use gl_teleop::scenario::Scenario;
use gl_teleop::server::{self, ServerOptions, DEFAULT_TCP_PORT, DEFAULT_WS_PATH, DEFAULT_WS_PORT};
use gl_teleop::session::{ArmSetup, Session, SessionConfig};
use gl_teleop::station::Decoupling;

const PIPER6: &str = include_str!("../../../models/piper6.toml");
const FLEXIV7: &str = include_str!("../../../models/flexiv7.toml");

const EXIT_FAIL: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "gl-teleop", version, about = "Global-Local teleoperation runner and session server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario headless and report the metrics.
    Run {
        scenario: PathBuf,
        /// Robot model, overriding the one named in the scenario.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Controller config, overriding the one named in the scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON-lines log here.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Re-simulate a log and check it line by line.
    Replay { log: PathBuf },
    /// Record open and closed exoskeleton poses into a calibration file.
    CalibrateHand {
        /// Read the two poses from this file instead of stdin.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write the calibration here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Start the session server and the websocket gateway.
    Serve {
        #[arg(long, default_value_t = DEFAULT_TCP_PORT)]
        port: u16,
        /// 0 disables the gateway.
        #[arg(long, default_value_t = DEFAULT_WS_PORT)]
        ws_port: u16,
        #[arg(long, default_value = DEFAULT_WS_PATH)]
        ws_path: String,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Arm as `temporal=<model>` or `spatial=<model>`, repeatable.
        /// Defaults to a temporal piper6 and a spatial flexiv7.
        #[arg(long = "arm", value_name = "MODE=MODEL")]
        arms: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        hand_calibration: Option<PathBuf>,
        #[arg(long, default_value = "gl")]
        session: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario,
            model,
            config,
            log,
            report,
        } => run(&scenario, model.as_deref(), config.as_deref(), log.as_deref(), report.as_deref()),
        Command::Replay { log } => replay(&log),
        Command::CalibrateHand { input, output } => calibrate(input.as_deref(), output.as_deref()),
        Command::Serve {
            port,
            ws_port,
            ws_path,
            bind,
            arms,
            config,
            hand_calibration,
            session,
        } => serve(port, ws_port, ws_path, bind, &arms, config.as_deref(), hand_calibration.as_deref(), session),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn run(
    path: &Path,
    model: Option<&Path>,
    config: Option<&Path>,
    log: Option<&Path>,
    report: Option<&Path>,
) -> anyhow::Result<ExitCode> {
    let scenario = Scenario::load(path, model, config)?;
    let output = match harness::run(&scenario) {
        Ok(o) => o,
        Err(HarnessError::Scenario(e)) => return Err(e.into()),
        Err(e) => {
            eprintln!("run failed: {e}");
            return Ok(ExitCode::from(EXIT_FAIL));
        }
    };
    if let Some(log) = log {
        fs::write(log, output.log_text()).with_context(|| format!("writing {}", log.display()))?;
    }
    let json = serde_json::to_string_pretty(&output.report)?;
    match report {
        Some(p) => fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{json}"),
    }
    let r = &output.report;
    eprintln!(
        "{}: {} ticks, {}/{} waypoints reached, max switch jump {:e} rad, {} e-stops, digest {}",
        if r.passed { "PASS" } else { "FAIL" },
        r.ticks,
        r.waypoints.iter().filter(|w| w.reached).count(),
        r.waypoints.len(),
        r.max_switch_jump,
        r.estops.len(),
        r.digest
    );
    Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAIL) })
}

fn replay(path: &Path) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match harness::replay(&text) {
        ReplayVerdict::Match { digest } => {
            println!("match: digest {digest}");
            Ok(ExitCode::SUCCESS)
        }
        ReplayVerdict::Mismatch { tick, detail } => {
            match tick {
                Some(t) => println!("mismatch at tick {t}: {detail}"),
                None => println!("mismatch: {detail}"),
            }
            Ok(ExitCode::from(EXIT_FAIL))
        }
    }
}

fn calibrate(input: Option<&Path>, output: Option<&Path>) -> anyhow::Result<ExitCode> {
    let calib = match input {
        Some(p) => {
            let file = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
            harness::calibrate_hand(BufReader::new(file), io::stderr())
        }
        None => harness::calibrate_hand(io::stdin().lock(), io::stderr()),
    };
    let calib = calib?;
    let text = HandCalibrationFile::from_calibration(&calib).to_toml();
    match output {
        Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_arm(spec: &str) -> anyhow::Result<(Decoupling, String, String)> {
    let (mode, path) = spec
        .split_once('=')
        .with_context(|| format!("--arm {spec}: expected MODE=MODEL"))?;
    let decoupling = match mode {
        "temporal" => Decoupling::Temporal,
        "spatial" => Decoupling::Spatial,
        other => anyhow::bail!("--arm {spec}: unknown mode {other:?}"),
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
    Ok((decoupling, text, path.to_string()))
}

#[allow(clippy::too_many_arguments)]
fn serve(
    port: u16,
    ws_port: u16,
    ws_path: String,
    bind: String,
    arm_specs: &[String],
    config: Option<&Path>,
    hand: Option<&Path>,
    session_id: String,
) -> anyhow::Result<ExitCode> {
    let config = match config {
        Some(p) => ControllerConfig::load(p)?,
        None => ControllerConfig::default(),
    };
    let hand = match hand {
        Some(p) => load_hand_calibration(p)?,
        None => default_hand_calibration(),
    };
    let specs = if arm_specs.is_empty() {
        vec![
            (Decoupling::Temporal, PIPER6.to_string(), "piper6".to_string()),
            (Decoupling::Spatial, FLEXIV7.to_string(), "flexiv7".to_string()),
        ]
    } else {
        arm_specs.iter().map(|s| parse_arm(s)).collect::<anyhow::Result<_>>()?
    };
    let mut arms = Vec::new();
    for (decoupling, text, context) in specs {
        arms.push(ArmSetup {
            model: RobotModel::parse(&text, &context)?,
            model_text: text,
            config: config.clone(),
            decoupling,
            hand,
        });
    }
    let session = Session::new(
        SessionConfig {
            session_id,
            ..SessionConfig::default()
        },
        arms,
    )?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let tcp = tokio::net::TcpListener::bind((bind.as_str(), port))
            .await
            .with_context(|| format!("binding {bind}:{port}"))?;
        let ws = if ws_port == 0 {
            None
        } else {
            Some(
                tokio::net::TcpListener::bind((bind.as_str(), ws_port))
                    .await
                    .with_context(|| format!("binding {bind}:{ws_port}"))?,
            )
        };
        eprintln!("session server on {}", tcp.local_addr()?);
        if let Some(ws) = &ws {
            eprintln!("websocket gateway on ws://{}{}", ws.local_addr()?, ws_path);
        }
        let options = ServerOptions {
            rate_hz: config.rate_hz,
            ws_path,
        };
        server::serve(session, tcp, ws, options).await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
