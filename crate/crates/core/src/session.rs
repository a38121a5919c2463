//! Live steering sessions and the WebSocket stream server.
//!
//! Clients send joystick messages
//! `{"v":1,"type":"joystick","vz":mm/s,"wx":deg/s,"wy":deg/s,"t":s}`.
//! Every control tick the server answers with a state frame
//! `{"v":1,"type":"state","t","position"[mm],"tilt"[deg],"volumes"[ml],"wrench"[N, N·m],"saturated"}`.
//! Rejected input produces `{"v":1,"type":"error","message"}` and the session
//! continues; a solver failure produces `"type":"fatal"` and ends it.
//!
//! Sessions run on tick counts, not wall time, so a recorded inbound log
//! replays to the identical outbound stream.

use std::fs::File;
use std::io::{BufRead, BufReader, LineWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tungstenite::Message;

use crate::config::{RobotConfig, TeleopLimits};
use crate::control::{apply_open_loop, ControlConfig};
use crate::error::{Result, SeeError};
use crate::mechanics::{Vec3, Vec6};
use crate::model::{Environment, SeeModel, SeeState};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Inbound {
    v: u32,
    #[serde(rename = "type")]
    kind: String,
    vz: f64,
    wx: f64,
    wy: f64,
    t: f64,
}

/// Outbound state frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: String,
    pub t: f64,
    pub position: [f64; 3],
    pub tilt: [f64; 3],
    pub volumes: Vec<f64>,
    pub wrench: [f64; 6],
    pub saturated: Vec<bool>,
}

#[derive(Debug, Serialize)]
struct MessageFrame<'a> {
    v: u32,
    #[serde(rename = "type")]
    kind: &'a str,
    message: String,
}

fn message_frame(kind: &str, message: impl Into<String>) -> String {
    serde_json::to_string(&MessageFrame {
        v: PROTOCOL_VERSION,
        kind,
        message: message.into(),
    })
    .expect("serializable")
}

/// Joystick command in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    /// [m/s]
    pub vz: f64,
    /// [rad/s]
    pub wx: f64,
    /// [rad/s]
    pub wy: f64,
    /// Client timestamp [s].
    pub client_t: f64,
    /// Tick count when the command was accepted.
    pub received_tick: u64,
}

/// Result of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub enum TickOutput {
    State(String),
    Fatal(String),
}

impl TickOutput {
    pub fn text(&self) -> &str {
        match self {
            TickOutput::State(s) | TickOutput::Fatal(s) => s,
        }
    }
}

pub struct Session {
    model: SeeModel,
    control: ControlConfig,
    limits: TeleopLimits,
    env: Option<Box<dyn Environment>>,
    state: SeeState,
    ticks: u64,
    command: Option<Command>,
    last_client_t: Option<f64>,
    saturated: Vec<bool>,
    failed: bool,
}

impl Session {
    /// Starts a session at `inflation` (fraction of the volume range) on every actuator.
    pub fn new(config: &RobotConfig, inflation: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&inflation) {
            return Err(SeeError::invalid("inflation", "must lie in [0, 1]"));
        }
        let model = SeeModel::new(config.geometry.clone())?;
        let n = model.n();
        let state = model.state_at(&vec![inflation * config.geometry.max_volume; n])?;
        let env = config.build_environment(state.position)?;
        Ok(Session {
            model,
            control: config.control,
            limits: config.teleop,
            env,
            state,
            ticks: 0,
            command: None,
            last_client_t: None,
            saturated: vec![false; n],
            failed: false,
        })
    }

    pub fn dt(&self) -> f64 {
        self.control.dt()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.dt()
    }

    pub fn state(&self) -> &SeeState {
        &self.state
    }

    pub fn is_failed(&self) -> bool {
        self.failed
    }

    /// Command in effect for the next tick, after the dead-man check.
    pub fn active_command(&self) -> Option<Command> {
        self.command.filter(|c| {
            (self.ticks - c.received_tick) as f64 * self.dt() <= self.limits.deadman + 1e-12
        })
    }

    /// Handles one inbound text message. Returns an error frame on rejection.
    pub fn handle_message(&mut self, text: &str) -> Option<String> {
        match self.parse(text) {
            Ok(cmd) => {
                self.last_client_t = Some(cmd.client_t);
                self.command = Some(cmd);
                None
            }
            Err(reason) => Some(message_frame("error", reason)),
        }
    }

    fn parse(&mut self, text: &str) -> std::result::Result<Command, String> {
        let msg: Inbound = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
        if msg.v != PROTOCOL_VERSION {
            return Err(format!("unsupported protocol version {}", msg.v));
        }
        if msg.kind != "joystick" {
            return Err(format!("unknown message type {:?}", msg.kind));
        }
        if ![msg.vz, msg.wx, msg.wy, msg.t].iter().all(|x| x.is_finite()) {
            return Err("non-finite field".into());
        }
        if let Some(prev) = self.last_client_t {
            if msg.t <= prev {
                return Err(format!("timestamp {} does not increase past {prev}", msg.t));
            }
        }
        let cmd = Command {
            vz: msg.vz * 1e-3,
            wx: msg.wx.to_radians(),
            wy: msg.wy.to_radians(),
            client_t: msg.t,
            received_tick: self.ticks,
        };
        let tol = 1.0 + 1e-9;
        if cmd.vz.abs() > self.limits.max_axial_rate * tol {
            // An out-of-range request also stops the tip.
            self.command = None;
            return Err(format!(
                "vz {} mm/s exceeds the {} mm/s limit",
                msg.vz,
                self.limits.max_axial_rate * 1e3
            ));
        }
        if cmd.wx.abs() > self.limits.max_tilt_rate * tol || cmd.wy.abs() > self.limits.max_tilt_rate * tol {
            self.command = None;
            return Err(format!(
                "tilt rate ({}, {}) deg/s exceeds the {} deg/s limit",
                msg.wx,
                msg.wy,
                self.limits.max_tilt_rate.to_degrees()
            ));
        }
        Ok(cmd)
    }

    /// Advances one control period and returns the frame to send.
    pub fn tick(&mut self) -> TickOutput {
        if self.failed {
            return TickOutput::Fatal(message_frame("fatal", "session already failed"));
        }
        let v = self
            .active_command()
            .map_or(Vec6::zeros(), |c| Vec6::new(0.0, 0.0, c.vz, c.wx, c.wy, 0.0));
        let dt = self.dt();
        let step = apply_open_loop(
            &self.model,
            &mut self.state,
            &v,
            &self.control,
            dt,
            self.env.as_deref(),
        );
        self.ticks += 1;
        match step {
            Ok(s) => {
                self.saturated = s.saturated;
                TickOutput::State(self.frame())
            }
            Err(e) => {
                self.failed = true;
                TickOutput::Fatal(message_frame("fatal", format!("solver failure at t = {}: {e}", self.time())))
            }
        }
    }

    fn frame(&self) -> String {
        let p = self.state.position * 1e3;
        let tilt: Vec3 = self.state.tilt().map(f64::to_degrees);
        let w = self.state.wrench.to_vector();
        let frame = StateFrame {
            v: PROTOCOL_VERSION,
            kind: "state".into(),
            t: self.time(),
            position: [p.x, p.y, p.z],
            tilt: [tilt.x, tilt.y, tilt.z],
            volumes: self.state.volumes.iter().map(|v| v * 1e6).collect(),
            wrench: [w[0], w[1], w[2], w[3], w[4], w[5]],
            saturated: self.saturated.clone(),
        };
        serde_json::to_string(&frame).expect("serializable")
    }
}

/// One line of an inbound session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InboundRecord {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
    /// Marks the tick count at which the session ended.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub end: bool,
}

pub fn read_inbound_log(path: &Path) -> Result<Vec<InboundRecord>> {
    let file = File::open(path).map_err(|e| SeeError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SeeError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InboundRecord = serde_json::from_str(&line)
            .map_err(|e| SeeError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Re-runs a recorded session and returns every outbound frame in order.
pub fn replay(session: &mut Session, records: &[InboundRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let run_to = |session: &mut Session, tick: u64, out: &mut Vec<String>| {
        while session.ticks() < tick && !session.is_failed() {
            out.push(session.tick().text().to_string());
        }
    };
    for rec in records {
        run_to(session, rec.tick, &mut out);
        if session.is_failed() {
            break;
        }
        if let Some(msg) = &rec.msg {
            if let Some(err) = session.handle_message(msg) {
                out.push(err);
            }
        }
        if rec.end {
            break;
        }
    }
    out
}

struct SessionLog {
    inbound: LineWriter<File>,
    outbound: LineWriter<File>,
}

impl SessionLog {
    fn create(dir: &Path, id: usize) -> Result<(Self, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| SeeError::io(dir, e))?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis());
        let base = dir.join(format!("session-{stamp}-{id}"));
        let open = |suffix: &str| -> Result<LineWriter<File>> {
            let p = base.with_extension(suffix);
            File::create(&p).map(LineWriter::new).map_err(|e| SeeError::io(p, e))
        };
        Ok((
            SessionLog {
                inbound: open("in.jsonl")?,
                outbound: open("out.jsonl")?,
            },
            base,
        ))
    }

    fn inbound(&mut self, rec: &InboundRecord) {
        let line = serde_json::to_string(rec).expect("serializable");
        if let Err(e) = writeln!(self.inbound, "{line}") {
            log::warn!("inbound log write failed: {e}");
        }
    }

    fn outbound(&mut self, frame: &str) {
        if let Err(e) = writeln!(self.outbound, "{frame}") {
            log::warn!("outbound log write failed: {e}");
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Where per-session inbound/outbound logs go. `None` disables logging.
    pub log_dir: Option<PathBuf>,
    /// Stop accepting after this many sessions and return once they end.
    pub max_sessions: Option<usize>,
    /// Starting inflation of every session.
    pub inflation: f64,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            log_dir: None,
            max_sessions: None,
            inflation: 0.0,
        }
    }
}

/// Accepts WebSocket clients on `listener`, one session per connection.
pub fn serve(config: &RobotConfig, listener: TcpListener, opts: &ServerOptions, stop: Arc<AtomicBool>) -> Result<()> {
    // Validate once up front so configuration errors surface before any client connects.
    Session::new(config, opts.inflation)?;
    listener
        .set_nonblocking(true)
        .map_err(|e| SeeError::Format(format!("listener: {e}")))?;
    let mut handles = Vec::new();
    let mut accepted = 0usize;
    while !stop.load(Ordering::Relaxed) && opts.max_sessions.is_none_or(|m| accepted < m) {
        match listener.accept() {
            Ok((stream, peer)) => {
                accepted += 1;
                log::info!("session {accepted} from {peer}");
                let config = config.clone();
                let opts = opts.clone();
                let stop = stop.clone();
                let id = accepted;
                handles.push(std::thread::spawn(move || {
                    if let Err(e) = run_connection(stream, &config, &opts, id, &stop) {
                        log::warn!("session {id} ended with error: {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(SeeError::Format(format!("accept: {e}"))),
        }
    }
    for h in handles {
        let _ = h.join();
    }
    Ok(())
}

fn ws_error(e: tungstenite::Error) -> SeeError {
    SeeError::Format(format!("websocket: {e}"))
}

fn run_connection(stream: TcpStream, config: &RobotConfig, opts: &ServerOptions, id: usize, stop: &AtomicBool) -> Result<()> {
    stream
        .set_nonblocking(false)
        .map_err(|e| SeeError::Format(format!("socket: {e}")))?;
    let _ = stream.set_nodelay(true);
    let mut ws = tungstenite::accept(stream).map_err(|e| SeeError::Format(format!("handshake: {e}")))?;
    let mut session = Session::new(config, opts.inflation)?;
    let mut logs = match &opts.log_dir {
        Some(dir) => {
            let (l, base) = SessionLog::create(dir, id)?;
            log::info!("session {id} logging to {}.*", base.display());
            Some(l)
        }
        None => None,
    };
    let period = session.dt();
    let start = Instant::now();
    let result = loop {
        if stop.load(Ordering::Relaxed) {
            let _ = ws.close(None);
            break Ok(());
        }
        let deadline = start + Duration::from_secs_f64(period * (session.ticks() + 1) as f64);
        let mut closed = false;
        loop {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            let wait = (deadline - now).max(Duration::from_micros(100));
            let _ = ws.get_mut().set_read_timeout(Some(wait));
            match ws.read() {
                Ok(Message::Text(text)) => {
                    let rec = InboundRecord {
                        tick: session.ticks(),
                        msg: Some(text.as_str().to_string()),
                        end: false,
                    };
                    if let Some(l) = logs.as_mut() {
                        l.inbound(&rec);
                    }
                    if let Some(err) = session.handle_message(text.as_str()) {
                        if let Some(l) = logs.as_mut() {
                            l.outbound(&err);
                        }
                        ws.send(Message::text(err)).map_err(ws_error)?;
                    }
                }
                Ok(Message::Binary(_)) => {
                    let err = message_frame("error", "binary messages are not supported");
                    ws.send(Message::text(err)).map_err(ws_error)?;
                }
                Ok(Message::Close(_)) => {
                    closed = true;
                    break;
                }
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) =>
                {
                    break;
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    closed = true;
                    break;
                }
                Err(e) => {
                    closed = true;
                    log::warn!("session {id}: {e}");
                    break;
                }
            }
        }
        if closed {
            break Ok(());
        }
        let out = session.tick();
        if let Some(l) = logs.as_mut() {
            l.outbound(out.text());
        }
        let fatal = matches!(out, TickOutput::Fatal(_));
        if let Err(e) = ws.send(Message::text(out.text().to_string())) {
            break match e {
                tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => Ok(()),
                e => Err(ws_error(e)),
            };
        }
        if fatal {
            let _ = ws.close(None);
            let _ = ws.flush();
            break Ok(());
        }
    };
    if let Some(l) = logs.as_mut() {
        l.inbound(&InboundRecord {
            tick: session.ticks(),
            msg: None,
            end: true,
        });
    }
    result
}
