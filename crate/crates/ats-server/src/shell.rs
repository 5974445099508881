//! Client-side shell for remotely hosted agents: a typed wrapper over the
//! wire protocol that authenticates, issues commands and collects pushed
//! events. The scripted remote agents in the test suites run on this, and
//! it is the reference for speaking the protocol from other languages.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use anyhow::{anyhow, bail, Result};

use ats_core::cert::sign_bytes;

use crate::frames::{Inbound, Outbound};

/// A connected, authenticated remote agent session.
pub struct RemoteShell {
    stream: TcpStream,
    reader: BufReader<TcpStream>,
    /// Pushed event frames collected while waiting for replies.
    pub events: Vec<Outbound>,
}

impl RemoteShell {
    /// Connect and authenticate: the session signature is the owner's
    /// Ed25519 signature over the agent id bytes.
    pub fn connect(addr: &str, agent: &str, owner_seed: &[u8; 32]) -> Result<RemoteShell> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        let reader = BufReader::new(stream.try_clone()?);
        let mut shell = RemoteShell {
            stream,
            reader,
            events: Vec::new(),
        };
        let sig = hex::encode(sign_bytes(owner_seed, agent.as_bytes()));
        shell.send(&Inbound::Hello {
            agent: agent.to_string(),
            sig,
        })?;
        match shell.read_reply()? {
            Outbound::Welcome { .. } => Ok(shell),
            Outbound::Error { code, msg } => bail!("authentication failed: {code} {msg}"),
            other => bail!("unexpected frame instead of WELCOME: {other:?}"),
        }
    }

    pub fn send(&mut self, frame: &Inbound) -> Result<()> {
        let mut line = serde_json::to_string(frame)?;
        line.push('\n');
        self.stream.write_all(line.as_bytes())?;
        Ok(())
    }

    /// Send a raw line (for protocol-error testing).
    pub fn send_raw(&mut self, line: &str) -> Result<()> {
        self.stream.write_all(line.as_bytes())?;
        self.stream.write_all(b"\n")?;
        Ok(())
    }

    /// Read frames until one that is a direct reply (anything except
    /// QUOTE/ORDER_CLOSED/ORDER_CANCELLED pushes, which are collected
    /// into `events`). PINGs are answered transparently.
    pub fn read_reply(&mut self) -> Result<Outbound> {
        loop {
            let frame = self.read_frame()?;
            match frame {
                Outbound::Ping { token } => {
                    self.send(&Inbound::Pong { token })?;
                }
                Outbound::Quote { .. }
                | Outbound::OrderClosed { .. }
                | Outbound::OrderCancelled { .. } => self.events.push(frame),
                other => return Ok(other),
            }
        }
    }

    /// Read one pushed event (collecting across PINGs).
    pub fn read_event(&mut self) -> Result<Outbound> {
        if !self.events.is_empty() {
            return Ok(self.events.remove(0));
        }
        loop {
            let frame = self.read_frame()?;
            match frame {
                Outbound::Ping { token } => self.send(&Inbound::Pong { token })?,
                other => return Ok(other),
            }
        }
    }

    pub fn read_frame(&mut self) -> Result<Outbound> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line)?;
        if n == 0 {
            bail!("connection closed");
        }
        Ok(serde_json::from_str(line.trim())?)
    }

    /// Place an order and wait for its ORDER_ACK.
    pub fn order(&mut self, symbol: &str, side: &str, px: u64, qty: u64) -> Result<u64> {
        self.send(&Inbound::Order {
            symbol: symbol.to_string(),
            side: side.to_string(),
            px,
            qty,
        })?;
        match self.read_reply()? {
            Outbound::OrderAck { order } => Ok(order),
            Outbound::Error { code, msg } => bail!("order rejected: {code} {msg}"),
            other => bail!("unexpected reply to ORDER: {other:?}"),
        }
    }

    /// Cancel an order; the acknowledgement is the matching
    /// ORDER_CANCELLED event. Unrelated pushes arriving first are kept.
    pub fn cancel(&mut self, order: u64) -> Result<String> {
        self.send(&Inbound::Cancel { order })?;
        if let Some(at) = self.events.iter().position(
            |e| matches!(e, Outbound::OrderCancelled { order: o, .. } if *o == order),
        ) {
            match self.events.remove(at) {
                Outbound::OrderCancelled { reason, .. } => return Ok(reason),
                _ => unreachable!(),
            }
        }
        loop {
            match self.read_frame()? {
                Outbound::Ping { token } => self.send(&Inbound::Pong { token })?,
                Outbound::OrderCancelled { order: o, reason } if o == order => {
                    return Ok(reason);
                }
                Outbound::Error { code, msg } => bail!("cancel rejected: {code} {msg}"),
                other => self.events.push(other),
            }
        }
    }

    pub fn subscribe(&mut self, symbols: &[&str], class: &str) -> Result<u64> {
        self.send(&Inbound::Subscribe {
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            class: class.to_string(),
        })?;
        match self.read_reply()? {
            Outbound::Ack { sub: Some(sub), .. } => Ok(sub),
            Outbound::Error { code, msg } => bail!("subscribe rejected: {code} {msg}"),
            other => bail!("unexpected reply to SUBSCRIBE: {other:?}"),
        }
    }

    pub fn log_note(&mut self, text: &str) -> Result<u64> {
        self.send(&Inbound::LogNote {
            text: text.to_string(),
        })?;
        match self.read_reply()? {
            Outbound::Ack { seq: Some(seq), .. } => Ok(seq),
            Outbound::Error { code, msg } => bail!("note rejected: {code} {msg}"),
            other => bail!("unexpected reply to LOGNOTE: {other:?}"),
        }
    }

    /// Graceful stop; the server closes the session afterwards.
    pub fn stop(mut self) -> Result<()> {
        self.send(&Inbound::Stop)?;
        loop {
            match self.read_frame() {
                Ok(Outbound::Ping { token }) => self.send(&Inbound::Pong { token })?,
                Ok(other) => self.events.push(other),
                Err(_) => return Ok(()), // EOF is the ack
            }
        }
    }
}

/// One-shot operator command: connect, authenticate by token, run one
/// admin command, return the result.
pub fn admin_command(addr: &str, token: &str, cmd: serde_json::Value) -> Result<serde_json::Value> {
    let mut stream = TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(Duration::from_secs(30)))?;
    let frame = Inbound::Admin {
        token: token.to_string(),
        cmd,
    };
    let mut line = serde_json::to_string(&frame)?;
    line.push('\n');
    stream.write_all(line.as_bytes())?;
    let mut reader = BufReader::new(stream);
    loop {
        let mut reply = String::new();
        if reader.read_line(&mut reply)? == 0 {
            bail!("connection closed before reply");
        }
        match serde_json::from_str::<Outbound>(reply.trim())? {
            Outbound::AdminAck { result } => return Ok(result),
            Outbound::Error { code, msg } => return Err(anyhow!("{code}: {msg}")),
            Outbound::Ping { .. } => continue, // ignore, this channel is one-shot
            other => bail!("unexpected reply: {other:?}"),
        }
    }
}
