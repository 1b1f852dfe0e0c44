//! TCP server and websocket gateway around a [`Session`].
//!
//! One routing task owns the session and runs the control tick. Each
//! connection gets a reader task that forwards decoded frames to the router
//! and a writer task fed by the router. Websocket clients exchange the same
//! frames, one per binary message.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::time::{Instant, MissedTickBehavior};
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{self, Payload, ProtocolError, TeleopMessage, HEADER_LEN};
use crate::session::{Destination, EndpointId, Inbound, Session};

pub const DEFAULT_TCP_PORT: u16 = 7700;
pub const DEFAULT_WS_PORT: u16 = 7701;
pub const DEFAULT_WS_PATH: &str = "/teleop";

type Frames = mpsc::UnboundedSender<Vec<u8>>;

enum RouterEvent {
    Open(EndpointId, Frames, String),
    Event(Inbound),
}

/// Kinds written to the server log when received; streaming kinds are skipped.
fn loggable(p: &Payload) -> bool {
    !matches!(
        p,
        Payload::Heartbeat
            | Payload::JointCommand { .. }
            | Payload::StylusPose { .. }
            | Payload::ImuUpdate { .. }
            | Payload::ExoskeletonUpdate { .. }
            | Payload::HandCommand { .. }
            | Payload::GripperCommand { .. }
    )
}

fn describe(p: &Payload) -> String {
    match p {
        Payload::ModeSwitch { mode } => format!("ModeSwitch {mode:?}"),
        Payload::ModeStatus { mode, status } => format!("ModeStatus {mode:?} {status:?}"),
        Payload::SafeHold { active, reason } => format!("SafeHold active={active} ({reason})"),
        Payload::Error { code, text } => format!("Error {code}: {text}"),
        other => other.kind().to_string(),
    }
}

async fn route(mut session: Session, rate_hz: f64, mut rx: mpsc::UnboundedReceiver<RouterEvent>) {
    let start = Instant::now();
    let mut writers: HashMap<EndpointId, Frames> = HashMap::new();
    let mut interval = tokio::time::interval(Duration::from_secs_f64(1.0 / rate_hz));
    interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut pending = Vec::new();
    loop {
        tokio::select! {
            event = rx.recv() => match event {
                None => return,
                Some(RouterEvent::Open(id, tx, peer)) => {
                    eprintln!("endpoint {id} connected from {peer}");
                    writers.insert(id, tx);
                    pending.push(Inbound::Connected(id));
                }
                Some(RouterEvent::Event(e)) => {
                    match &e {
                        Inbound::Frame(id, Ok(m)) if loggable(&m.payload) => {
                            eprintln!("endpoint {id} arm {}: {}", m.arm, describe(&m.payload))
                        }
                        Inbound::Frame(id, Err(err)) => eprintln!("endpoint {id}: {err}"),
                        Inbound::Disconnected(id) => {
                            eprintln!("endpoint {id} disconnected");
                            writers.remove(id);
                        }
                        _ => {}
                    }
                    pending.push(e);
                }
            },
            _ = interval.tick() => {
                let now_us = start.elapsed().as_micros() as u64;
                let out = session.step(pending.drain(..), now_us);
                for d in &out.diagnostics {
                    eprintln!("session: {d:?}");
                }
                for o in out.messages {
                    let Ok(frame) = protocol::encode(&o.message) else { continue };
                    match o.to {
                        Destination::Endpoint(id) => {
                            if let Some(w) = writers.get(&id) {
                                let _ = w.send(frame);
                            }
                        }
                        Destination::Broadcast => {
                            for w in writers.values() {
                                let _ = w.send(frame.clone());
                            }
                        }
                    }
                }
                writers.retain(|_, w| !w.is_closed());
            }
        }
    }
}

async fn read_frame(stream: &mut (impl AsyncReadExt + Unpin)) -> std::io::Result<Option<Result<String, ProtocolError>>> {
    let mut header = [0u8; HEADER_LEN];
    match stream.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = match protocol::body_len(header) {
        Ok(len) => len,
        Err(e) => return Ok(Some(Err(e))),
    };
    let mut body = vec![0u8; len];
    stream.read_exact(&mut body).await?;
    Ok(Some(String::from_utf8(body).map_err(|_| ProtocolError::Utf8)))
}

async fn serve_tcp(
    stream: TcpStream,
    id: EndpointId,
    peer: SocketAddr,
    session: String,
    router: mpsc::UnboundedSender<RouterEvent>,
) {
    let (mut reader, mut writer) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let _ = router.send(RouterEvent::Open(id, tx.clone(), peer.to_string()));
    let write_task = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if writer.write_all(&frame).await.is_err() {
                return;
            }
        }
        let _ = writer.shutdown().await;
    });
    loop {
        match read_frame(&mut reader).await {
            Ok(Some(Ok(body))) => {
                let msg = protocol::decode_body(&body);
                let _ = router.send(RouterEvent::Event(Inbound::Frame(id, msg)));
            }
            Ok(Some(Err(e))) => {
                // The stream cannot be resynchronized after a framing error,
                // so reply here and hang up.
                if e.is_framing() {
                    eprintln!("endpoint {id}: {e}");
                    let reply = TeleopMessage::new(session.as_str(), 0, 0, 0, Payload::error(e.code(), e.to_string()));
                    if let Ok(frame) = protocol::encode(&reply) {
                        let _ = tx.send(frame);
                    }
                    break;
                }
                let _ = router.send(RouterEvent::Event(Inbound::Frame(id, Err(e))));
            }
            Ok(None) | Err(_) => break,
        }
    }
    // The writer finishes once both senders are gone: ours here, the
    // router's when it sees the disconnect.
    drop(tx);
    let _ = router.send(RouterEvent::Event(Inbound::Disconnected(id)));
    let _ = tokio::time::timeout(Duration::from_secs(1), write_task).await;
}

async fn serve_ws(stream: TcpStream, id: EndpointId, peer: SocketAddr, path: String, router: mpsc::UnboundedSender<RouterEvent>) {
    let check = |req: &Request, resp: Response| -> Result<Response, ErrorResponse> {
        if req.uri().path() == path {
            Ok(resp)
        } else {
            let mut err = ErrorResponse::new(Some(format!("no websocket at {}", req.uri().path())));
            *err.status_mut() = StatusCode::NOT_FOUND;
            Err(err)
        }
    };
    let Ok(ws) = tokio_tungstenite::accept_hdr_async(stream, check).await else {
        return;
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    let _ = router.send(RouterEvent::Open(id, tx, format!("{peer} (websocket)")));
    let write_task = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if sink.send(Message::Binary(frame.into())).await.is_err() {
                return;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(Ok(msg)) = source.next().await {
        let decoded = match msg {
            Message::Binary(bytes) => protocol::decode(&bytes),
            Message::Text(_) => Err(ProtocolError::Malformed("frames travel in binary messages".into())),
            Message::Close(_) => break,
            _ => continue,
        };
        let _ = router.send(RouterEvent::Event(Inbound::Frame(id, decoded)));
    }
    let _ = router.send(RouterEvent::Event(Inbound::Disconnected(id)));
    let _ = tokio::time::timeout(Duration::from_secs(1), write_task).await;
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub rate_hz: f64,
    pub ws_path: String,
}

/// Serves until the listeners fail. `ws` is optional.
pub async fn serve(
    session: Session,
    tcp: TcpListener,
    ws: Option<TcpListener>,
    options: ServerOptions,
) -> std::io::Result<()> {
    let session_id = session.config().session_id.clone();
    let (router_tx, router_rx) = mpsc::unbounded_channel();
    tokio::spawn(route(session, options.rate_hz, router_rx));
    let mut next_id: EndpointId = 1;
    loop {
        let accept_ws = async {
            match &ws {
                Some(l) => l.accept().await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            conn = tcp.accept() => {
                let (stream, peer) = conn?;
                let _ = stream.set_nodelay(true);
                tokio::spawn(serve_tcp(stream, next_id, peer, session_id.clone(), router_tx.clone()));
                next_id += 1;
            }
            conn = accept_ws => {
                let (stream, peer) = conn?;
                let _ = stream.set_nodelay(true);
                tokio::spawn(serve_ws(stream, next_id, peer, options.ws_path.clone(), router_tx.clone()));
                next_id += 1;
            }
        }
    }
}
