//! TCP gateway: remote agents and the operator command channel speak
//! newline-delimited JSON frames against the runtime.
//!
//! Session rules: nothing but HELLO (or ADMIN, which authenticates per
//! frame by token) is accepted before authentication; a bad signature
//! disconnects immediately; three protocol errors disconnect; a missed
//! heartbeat past the timeout disconnects. On disconnect the agent is
//! auto-stopped after the configured grace unless a new session attaches
//! first. Resting orders follow stop semantics and stay in the book.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use ats_core::audit::{LogFilter, LogKind, SeqRange};
use ats_core::cert::verify_bytes;
use ats_core::runtime::{AgentEvent, Ats, EventSink, Requester};
use ats_core::types::{AgentId, BrokerId, Side, Symbol};
use ats_core::AgentState;

use crate::config::ServerConfig;
use crate::frames::{
    api_error_code, Inbound, Outbound, CODE_ADMIN_FAILED, CODE_AUTH_FAILED,
    CODE_NOT_AUTHENTICATED, CODE_NOT_AUTHORIZED, CODE_PROTOCOL_ERROR, MAX_FRAME_BYTES,
};
use crate::manifest::{build_local_agent, parse_manifest, DescriptorJson, Manifest};
use crate::replay;

/// Messages to a session's writer thread.
pub enum WriterMsg {
    Line(String),
    Close,
}

/// Attachment point for a remote agent's outbound frames. Created at
/// registration, bound to a live session at HELLO.
pub type SinkSlot = Arc<Mutex<Option<Sender<WriterMsg>>>>;

/// Event sink the runtime holds for a remote agent; frames fall on the
/// floor while no session is attached (the agent is only RUNNING while
/// one is).
pub struct RemoteSink {
    slot: SinkSlot,
}

impl EventSink for RemoteSink {
    fn deliver(&mut self, event: AgentEvent) {
        if let Some(tx) = self.slot.lock().unwrap().as_ref() {
            let _ = tx.send(WriterMsg::Line(Outbound::from_agent_event(event).to_line()));
        }
    }
}

/// Shared server state handed to every session.
pub struct Server {
    pub state: Arc<Mutex<Ats>>,
    pub config: Arc<ServerConfig>,
    /// Remote agent id -> sink slot.
    pub slots: Arc<Mutex<HashMap<String, SinkSlot>>>,
    /// Agent id -> live session writer (for kill-close and single-session
    /// enforcement).
    pub sessions: Arc<Mutex<HashMap<String, Sender<WriterMsg>>>>,
}

impl Server {
    /// Build the runtime from config with the given clock.
    pub fn with_clock(
        config: ServerConfig,
        clock: Box<dyn ats_core::WallClock>,
    ) -> anyhow::Result<(Server, Vec<String>)> {
        config.validate()?;
        let (mut ats, warnings) = Ats::new(config.runtime_config(), clock)
            .map_err(|e| anyhow::anyhow!("runtime config: {e}"))?;
        for b in &config.brokers {
            ats.add_broker(
                BrokerId::new(b.broker_id.as_str()),
                config.broker_schedule(b),
            )
            .map_err(|e| anyhow::anyhow!("broker config: {e}"))?;
        }
        for (id, key) in config.developer_keys()? {
            ats.register_developer(id, &key)
                .map_err(|e| anyhow::anyhow!("developer config: {e}"))?;
        }
        Ok((
            Server {
                state: Arc::new(Mutex::new(ats)),
                config: Arc::new(config),
                slots: Arc::new(Mutex::new(HashMap::new())),
                sessions: Arc::new(Mutex::new(HashMap::new())),
            },
            warnings,
        ))
    }

    pub fn new(config: ServerConfig) -> anyhow::Result<(Server, Vec<String>)> {
        Server::with_clock(config, Box::new(SystemClock))
    }

    /// Register an agent from a descriptor and its manifest bytes. Local
    /// (built-in strategy) agents are started immediately; remote agents
    /// wait for a HELLO on the gateway.
    pub fn submit_agent(
        &self,
        descriptor: &DescriptorJson,
        manifest_bytes: &[u8],
    ) -> anyhow::Result<AgentState> {
        let desc = descriptor.to_descriptor()?;
        let digest = ats_core::cert::manifest_digest(manifest_bytes);
        if digest != desc.manifest_digest {
            anyhow::bail!("manifest bytes do not hash to the descriptor digest");
        }
        let manifest: Manifest = parse_manifest(manifest_bytes)?;
        let mut ats = self.state.lock().unwrap();
        let starting_cash = self
            .config
            .override_for(&descriptor.agent_id)
            .map(|b| b.cash)
            .unwrap_or(self.config.starting_cash);
        let balances = self.config.override_for(&descriptor.agent_id);
        let universe: Vec<ats_core::Instrument> =
            ats.market().instruments().cloned().collect();
        match build_local_agent(&manifest, &universe, starting_cash)
            .map_err(|e| anyhow::anyhow!("manifest: {e}"))?
        {
            Some(callbacks) => {
                let agent_id = desc.agent_id.clone();
                ats.register_local_agent(desc, callbacks, balances)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                ats.start_agent(&agent_id)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
            }
            None => {
                let slot: SinkSlot = Arc::new(Mutex::new(None));
                ats.register_remote_agent(
                    desc,
                    Box::new(RemoteSink { slot: slot.clone() }),
                    balances,
                )
                .map_err(|e| anyhow::anyhow!("{e}"))?;
                self.slots
                    .lock()
                    .unwrap()
                    .insert(descriptor.agent_id.clone(), slot);
            }
        }
        ats.log_admin_action("submit-agent", &descriptor.agent_id);
        Ok(ats.agent_state(&AgentId::new(descriptor.agent_id.as_str()))
            .expect("just registered"))
    }
}

/// Wall clock backed by the system time.
pub struct SystemClock;

impl ats_core::WallClock for SystemClock {
    fn now_millis(&mut self) -> u64 {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Running gateway listener.
pub struct Gateway {
    pub addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<thread::JoinHandle<()>>,
}

impl Gateway {
    /// Bind and start accepting sessions.
    pub fn spawn(server: Arc<Server>) -> anyhow::Result<Gateway> {
        let listener = TcpListener::bind(server.config.listen.as_str())?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = shutdown.clone();
        let accept_thread = thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let server = server.clone();
                        thread::spawn(move || run_session(server, stream));
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Gateway {
            addr,
            shutdown,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn stop(mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
    }
}

struct HeartbeatState {
    awaiting: Option<(u64, Instant)>,
    next_token: u64,
}

fn run_session(server: Arc<Server>, stream: TcpStream) {
    let peer = stream.peer_addr().ok();
    let reader_stream = match stream.try_clone() {
        Ok(s) => s,
        Err(_) => return,
    };
    let (tx, rx) = channel::<WriterMsg>();

    // writer: owns the stream for writes; Close flushes and shuts down
    let mut write_stream = stream;
    let writer = thread::spawn(move || {
        for msg in rx {
            match msg {
                WriterMsg::Line(line) => {
                    if write_stream.write_all(line.as_bytes()).is_err() {
                        break;
                    }
                }
                WriterMsg::Close => break,
            }
        }
        let _ = write_stream.flush();
        let _ = write_stream.shutdown(Shutdown::Both);
    });

    // heartbeat: ping on the interval, drop the session on silence
    let hb = Arc::new(Mutex::new(HeartbeatState {
        awaiting: None,
        next_token: 0,
    }));
    let hb_flag = Arc::new(AtomicBool::new(false));
    {
        let hb = hb.clone();
        let hb_flag = hb_flag.clone();
        let tx = tx.clone();
        let interval = Duration::from_millis(server.config.heartbeat_interval_ms);
        let timeout = Duration::from_millis(server.config.heartbeat_timeout_ms);
        let hb_stream = reader_stream.try_clone().ok();
        thread::spawn(move || loop {
            thread::sleep(interval);
            if hb_flag.load(Ordering::Relaxed) {
                break;
            }
            let mut state = hb.lock().unwrap();
            if let Some((_, sent)) = state.awaiting {
                if sent.elapsed() >= timeout {
                    drop(state);
                    if let Some(s) = &hb_stream {
                        let _ = s.shutdown(Shutdown::Both);
                    }
                    break;
                }
                continue;
            }
            state.next_token += 1;
            let token = state.next_token;
            state.awaiting = Some((token, Instant::now()));
            drop(state);
            let _ = tx.send(WriterMsg::Line(Outbound::Ping { token }.to_line()));
        });
    }

    let mut session = Session {
        server: server.clone(),
        tx: tx.clone(),
        authenticated: None,
        strikes: 0,
        hb,
        done: false,
    };

    let mut reader = BufReader::new(reader_stream);
    let mut line = String::new();
    loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(n) if n > MAX_FRAME_BYTES => {
                session.strike("frame exceeds 64 KiB");
            }
            Ok(_) => {
                let trimmed = line.trim();
                if trimmed.is_empty() {
                    continue;
                }
                match serde_json::from_str::<Inbound>(trimmed) {
                    Ok(frame) => session.handle(frame),
                    Err(_) => session.strike("malformed frame"),
                }
            }
        }
        if session.done || session.strikes >= 3 {
            if session.strikes >= 3 {
                session.send(Outbound::error(
                    CODE_PROTOCOL_ERROR,
                    "too many protocol errors",
                ));
            }
            break;
        }
    }

    hb_flag.store(true, Ordering::Relaxed);
    let _ = tx.send(WriterMsg::Close);
    let _ = writer.join();
    let _ = peer;

    // disconnect: detach the sink, free the session slot, schedule the
    // graceful auto-stop
    if let Some(agent) = session.authenticated.take() {
        if let Some(slot) = server.slots.lock().unwrap().get(agent.as_str()) {
            *slot.lock().unwrap() = None;
        }
        server.sessions.lock().unwrap().remove(agent.as_str());
        let grace = Duration::from_millis(server.config.grace_ms);
        let server = server.clone();
        thread::spawn(move || {
            thread::sleep(grace);
            if server.sessions.lock().unwrap().contains_key(agent.as_str()) {
                return; // a new session took over within the grace period
            }
            let mut ats = server.state.lock().unwrap();
            if ats.agent_state(&agent) == Some(AgentState::Running) {
                let _ = ats.stop_agent(&agent);
            }
        });
    }
}

struct Session {
    server: Arc<Server>,
    tx: Sender<WriterMsg>,
    authenticated: Option<AgentId>,
    strikes: u8,
    hb: Arc<Mutex<HeartbeatState>>,
    done: bool,
}

impl Session {
    fn send(&self, frame: Outbound) {
        let _ = self.tx.send(WriterMsg::Line(frame.to_line()));
    }

    fn strike(&mut self, msg: &str) {
        self.strikes += 1;
        self.send(Outbound::error(CODE_PROTOCOL_ERROR, msg));
    }

    fn handle(&mut self, frame: Inbound) {
        match frame {
            Inbound::Hello { agent, sig } => self.handle_hello(agent, sig),
            Inbound::Admin { token, cmd } => self.handle_admin(token, cmd),
            Inbound::Pong { token } => {
                let mut hb = self.hb.lock().unwrap();
                match hb.awaiting {
                    Some((expect, _)) if expect == token => hb.awaiting = None,
                    _ => {
                        drop(hb);
                        self.strike("unexpected or mismatched PONG token");
                    }
                }
            }
            Inbound::Order { symbol, side, px, qty } => {
                let Some(agent) = self.authenticated.clone() else {
                    self.send(Outbound::error(CODE_NOT_AUTHENTICATED, "HELLO first"));
                    return;
                };
                let Some(side) = Side::parse(&side) else {
                    self.send(Outbound::error("VALIDATION_FAILED", "side must be BUY or SELL"));
                    return;
                };
                let mut ats = self.server.state.lock().unwrap();
                let result = ats
                    .context(&agent)
                    .and_then(|mut ctx| ctx.create_order(&Symbol::new(symbol.as_str()), side, px, qty));
                match result {
                    Ok(order_id) => self.send(Outbound::OrderAck { order: order_id.0 }),
                    Err(e) => self.send(Outbound::error(api_error_code(&e), e.to_string())),
                }
            }
            Inbound::Cancel { order } => {
                let Some(agent) = self.authenticated.clone() else {
                    self.send(Outbound::error(CODE_NOT_AUTHENTICATED, "HELLO first"));
                    return;
                };
                let mut ats = self.server.state.lock().unwrap();
                let result = ats
                    .context(&agent)
                    .and_then(|mut ctx| ctx.cancel_order(ats_core::OrderId(order)));
                // success is acknowledged by the ORDER_CANCELLED event
                if let Err(e) = result {
                    self.send(Outbound::error(api_error_code(&e), e.to_string()));
                }
            }
            Inbound::Subscribe { symbols, class } => {
                let Some(agent) = self.authenticated.clone() else {
                    self.send(Outbound::error(CODE_NOT_AUTHENTICATED, "HELLO first"));
                    return;
                };
                let symbols: Vec<Symbol> =
                    symbols.iter().map(|s| Symbol::new(s.as_str())).collect();
                let mut ats = self.server.state.lock().unwrap();
                let result = ats.context(&agent).and_then(|mut ctx| {
                    ctx.subscribe(&symbols, &ats_core::ClassId::new(class.as_str()))
                });
                match result {
                    Ok(sub) => self.send(Outbound::Ack {
                        op: "SUBSCRIBE".to_string(),
                        sub: Some(sub),
                        seq: None,
                    }),
                    Err(e) => self.send(Outbound::error(api_error_code(&e), e.to_string())),
                }
            }
            Inbound::LogNote { text } => {
                let Some(agent) = self.authenticated.clone() else {
                    self.send(Outbound::error(CODE_NOT_AUTHENTICATED, "HELLO first"));
                    return;
                };
                let mut ats = self.server.state.lock().unwrap();
                let result = ats
                    .context(&agent)
                    .and_then(|mut ctx| ctx.log_note(&text));
                match result {
                    Ok(seq) => self.send(Outbound::Ack {
                        op: "LOGNOTE".to_string(),
                        sub: None,
                        seq: Some(seq),
                    }),
                    Err(e) => self.send(Outbound::error(api_error_code(&e), e.to_string())),
                }
            }
            Inbound::Stop => {
                let Some(agent) = self.authenticated.clone() else {
                    self.send(Outbound::error(CODE_NOT_AUTHENTICATED, "HELLO first"));
                    return;
                };
                let result = self.server.state.lock().unwrap().stop_agent(&agent);
                if let Err(e) = result {
                    self.send(Outbound::error(CODE_ADMIN_FAILED, e.to_string()));
                }
                self.done = true;
            }
        }
    }

    fn handle_hello(&mut self, agent: String, sig: String) {
        if self.authenticated.is_some() {
            self.strike("already authenticated");
            return;
        }
        let agent_id = AgentId::new(agent.as_str());
        if let Err(msg) = self.try_authenticate(&agent, &agent_id, &sig) {
            self.send(Outbound::error(CODE_AUTH_FAILED, msg));
            self.done = true;
            return;
        }
        if let Some(slot) = self.server.slots.lock().unwrap().get(&agent) {
            *slot.lock().unwrap() = Some(self.tx.clone());
        }
        self.server
            .sessions
            .lock()
            .unwrap()
            .insert(agent.clone(), self.tx.clone());
        self.authenticated = Some(agent_id);
        self.send(Outbound::Welcome { agent });
    }

    fn try_authenticate(&self, agent: &str, agent_id: &AgentId, sig: &str) -> Result<(), String> {
        let sig_bytes = hex::decode(sig).map_err(|_| "signature must be hex".to_string())?;
        let state = self.server.state.clone();
        let mut ats = state.lock().unwrap();
        let descriptor = ats
            .agent_descriptor(agent_id)
            .cloned()
            .ok_or_else(|| "unknown agent".to_string())?;
        let verified = ats
            .developer_key(&descriptor.owner_id)
            .map(|key| verify_bytes(&key, agent.as_bytes(), &sig_bytes))
            .unwrap_or(false);
        if !verified {
            return Err("session signature rejected".to_string());
        }
        if self.server.sessions.lock().unwrap().contains_key(agent) {
            return Err("agent already has an active session".to_string());
        }
        if !self.server.slots.lock().unwrap().contains_key(agent) {
            return Err("agent is not remote-hosted".to_string());
        }
        match ats.agent_state(agent_id) {
            Some(AgentState::Created) => ats
                .start_agent(agent_id)
                .map_err(|e| e.to_string()),
            Some(AgentState::Running) => Ok(()), // reattach within grace
            _ => Err("agent is not startable".to_string()),
        }
    }

    fn handle_admin(&mut self, token: String, cmd: Value) {
        let Some(role) = self.server.config.role_of_token(&token) else {
            self.send(Outbound::error(CODE_NOT_AUTHORIZED, "unknown role token"));
            return;
        };
        match run_admin_command(&self.server, &role, cmd) {
            Ok(result) => self.send(Outbound::AdminAck { result }),
            Err((code, msg)) => self.send(Outbound::error(code, msg)),
        }
    }
}

/// Operator commands carried on the ADMIN frame. Field names are part of
/// the control protocol.
#[derive(serde::Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
enum AdminCmd {
    RegisterDeveloper {
        developer: String,
        key: String,
    },
    RevokeDeveloper {
        developer: String,
    },
    SubmitAgent {
        descriptor: DescriptorJson,
        manifest_b64: String,
    },
    ListAgents,
    KillAgent {
        agent: String,
    },
    Book {
        symbol: String,
        levels: usize,
    },
    Logs {
        #[serde(default)]
        agent: Option<String>,
        #[serde(default)]
        kind: Option<String>,
        #[serde(default)]
        from_step: Option<u64>,
        #[serde(default)]
        to_step: Option<u64>,
        #[serde(default)]
        xml: bool,
    },
    ReplayFeed {
        file: String,
        #[serde(default = "default_replay_speed")]
        speed: f64,
    },
    ExportErrors,
}

fn default_replay_speed() -> f64 {
    1_000_000.0
}

type AdminResult = Result<Value, (&'static str, String)>;

fn admin_only(role: &Requester) -> Result<(), (&'static str, String)> {
    if *role != Requester::Administrator {
        return Err((CODE_NOT_AUTHORIZED, "administrator token required".into()));
    }
    Ok(())
}

pub fn run_admin_command(server: &Arc<Server>, role: &Requester, cmd: Value) -> AdminResult {
    let cmd: AdminCmd = serde_json::from_value(cmd)
        .map_err(|e| (CODE_PROTOCOL_ERROR, format!("bad admin command: {e}")))?;
    match cmd {
        AdminCmd::RegisterDeveloper { developer, key } => {
            admin_only(role)?;
            let bytes = hex::decode(&key)
                .map_err(|_| (CODE_ADMIN_FAILED, "key must be hex".to_string()))?;
            let key: [u8; 32] = bytes
                .try_into()
                .map_err(|_| (CODE_ADMIN_FAILED, "key must be 32 bytes".to_string()))?;
            let mut ats = server.state.lock().unwrap();
            ats.register_developer(ats_core::DeveloperId::new(developer.as_str()), &key)
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            Ok(json!({ "registered": developer }))
        }
        AdminCmd::RevokeDeveloper { developer } => {
            admin_only(role)?;
            let mut ats = server.state.lock().unwrap();
            ats.revoke_developer(&ats_core::DeveloperId::new(developer.as_str()))
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            Ok(json!({ "revoked": developer }))
        }
        AdminCmd::SubmitAgent {
            descriptor,
            manifest_b64,
        } => {
            admin_only(role)?;
            use base64::Engine;
            let manifest = base64::engine::general_purpose::STANDARD
                .decode(manifest_b64.as_bytes())
                .map_err(|_| (CODE_ADMIN_FAILED, "manifest_b64 is not base64".to_string()))?;
            let state = server
                .submit_agent(&descriptor, &manifest)
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            Ok(json!({ "agent": descriptor.agent_id, "state": state.as_str() }))
        }
        AdminCmd::ListAgents => {
            let ats = server.state.lock().unwrap();
            let rows: Vec<Value> = ats
                .agents_summary()
                .into_iter()
                .filter(|(_, _, broker, _)| match role {
                    Requester::Broker(b) => broker == b,
                    _ => true,
                })
                .map(|(id, state, broker, owner)| {
                    json!({
                        "agent": id.as_str(),
                        "state": state.as_str(),
                        "broker": broker.as_str(),
                        "owner": owner.as_str(),
                    })
                })
                .collect();
            Ok(json!({ "agents": rows }))
        }
        AdminCmd::KillAgent { agent } => {
            let agent_id = AgentId::new(agent.as_str());
            let report = {
                let mut ats = server.state.lock().unwrap();
                ats.kill_agent(&agent_id, role)
                    .map_err(|e| match e {
                        ats_core::RuntimeError::NotAuthorized => {
                            (CODE_NOT_AUTHORIZED, e.to_string())
                        }
                        other => (CODE_ADMIN_FAILED, other.to_string()),
                    })?
            };
            // tear the victim's session down after the KILLED frame
            if let Some(tx) = server.sessions.lock().unwrap().remove(&agent) {
                let _ = tx.send(WriterMsg::Close);
            }
            Ok(json!({
                "killed": agent,
                "cancelled_orders": report.cancelled_orders.iter().map(|o| o.0).collect::<Vec<_>>(),
            }))
        }
        AdminCmd::Book { symbol, levels } => {
            let levels = std::num::NonZeroUsize::new(levels.max(1)).expect("non-zero");
            let ats = server.state.lock().unwrap();
            let depth = ats
                .depth_snapshot(&Symbol::new(symbol.as_str()), levels)
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            Ok(json!({
                "symbol": symbol,
                "bids": depth.bids,
                "asks": depth.asks,
            }))
        }
        AdminCmd::Logs {
            agent,
            kind,
            from_step,
            to_step,
            xml,
        } => {
            let kind = match kind {
                None => None,
                Some(k) => Some(LogKind::parse(&k).ok_or_else(|| {
                    (CODE_ADMIN_FAILED, format!("unknown log kind {k}"))
                })?),
            };
            let filter = LogFilter {
                agent: agent.map(|a| AgentId::new(a.as_str())),
                kind,
                step_range: match (from_step, to_step) {
                    (None, None) => None,
                    (f, t) => Some((f.unwrap_or(0), t.unwrap_or(u64::MAX))),
                },
            };
            let ats = server.state.lock().unwrap();
            let entries = ats
                .query_log(role, &filter)
                .map_err(|e| (CODE_NOT_AUTHORIZED, e.to_string()))?;
            let count = entries.len();
            if xml {
                let doc = ats_core::audit::entries_to_xml(entries.iter());
                Ok(json!({ "count": count, "xml": doc }))
            } else {
                let rows: Vec<Value> = entries
                    .iter()
                    .map(|e| {
                        json!({
                            "seq": e.seq,
                            "step": e.step,
                            "t": e.wall_time,
                            "agent": e.agent_id.as_ref().map(|a| a.as_str().to_string()),
                            "kind": e.kind().as_str(),
                        })
                    })
                    .collect();
                Ok(json!({ "count": count, "entries": rows }))
            }
        }
        AdminCmd::ReplayFeed { file, speed } => {
            admin_only(role)?;
            if speed <= 0.0 || !speed.is_finite() {
                return Err((CODE_ADMIN_FAILED, "speed must be positive".into()));
            }
            let text = std::fs::read_to_string(&file)
                .map_err(|e| (CODE_ADMIN_FAILED, format!("feed source unavailable: {e}")))?;
            let stats = replay::replay_text(&server.state, &text, speed, 0)
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            server
                .state
                .lock()
                .unwrap()
                .log_admin_action("replay-feed", &file);
            Ok(json!({
                "replayed": stats.applied,
                "skipped_crossed": stats.skipped_crossed,
                "warnings": stats.warnings,
            }))
        }
        AdminCmd::ExportErrors => {
            admin_only(role)?;
            let ats = server.state.lock().unwrap();
            let doc = ats
                .export_errors_xml(role, SeqRange::all())
                .map_err(|e| (CODE_ADMIN_FAILED, e.to_string()))?;
            Ok(json!({ "xml": doc }))
        }
    }
}
