//! Wire protocol: one JSON object per line over TCP, at most 64 KiB,
//! mandatory `type` field. Field names here are normative for the
//! protocol; agents in any language speak it with a socket and a JSON
//! library.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use ats_core::agent::MarketEvent;
use ats_core::runtime::{AgentEvent, ApiError};

/// Hard cap on one frame line, both directions.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;

/// Client-to-server frames.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Inbound {
    #[serde(rename = "HELLO")]
    Hello {
        agent: String,
        /// Hex Ed25519 signature over the agent id bytes, by the owner's
        /// registered key.
        sig: String,
    },
    #[serde(rename = "ORDER")]
    Order {
        symbol: String,
        side: String,
        px: u64,
        qty: u64,
    },
    #[serde(rename = "CANCEL")]
    Cancel {
        order: u64,
    },
    #[serde(rename = "SUBSCRIBE")]
    Subscribe {
        symbols: Vec<String>,
        class: String,
    },
    #[serde(rename = "LOGNOTE")]
    LogNote {
        text: String,
    },
    #[serde(rename = "STOP")]
    Stop,
    #[serde(rename = "PONG")]
    Pong {
        token: u64,
    },
    /// Operator command channel; `token` selects the role.
    #[serde(rename = "ADMIN")]
    Admin {
        token: String,
        cmd: Value,
    },
}

/// Server-to-client frames.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Outbound {
    #[serde(rename = "WELCOME")]
    Welcome {
        agent: String,
    },
    #[serde(rename = "ORDER_ACK")]
    OrderAck {
        order: u64,
    },
    #[serde(rename = "ORDER_CLOSED")]
    OrderClosed {
        order: u64,
        fills: Vec<FillJson>,
    },
    #[serde(rename = "ORDER_CANCELLED")]
    OrderCancelled {
        order: u64,
        reason: String,
    },
    #[serde(rename = "QUOTE")]
    Quote {
        symbol: String,
        kind: String,
        step: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        bid_px: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bid_qty: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ask_px: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ask_qty: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        last: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        trade_px: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        trade_qty: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        aggressor: Option<String>,
    },
    #[serde(rename = "ERROR")]
    Error {
        code: String,
        msg: String,
    },
    #[serde(rename = "KILLED")]
    Killed,
    #[serde(rename = "PING")]
    Ping {
        token: u64,
    },
    /// Acknowledgement for mapped operations that have no richer reply
    /// frame (SUBSCRIBE, LOGNOTE).
    #[serde(rename = "ACK")]
    Ack {
        op: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        sub: Option<u64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    #[serde(rename = "ADMIN_ACK")]
    AdminAck {
        result: Value,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FillJson {
    pub px: u64,
    pub qty: u64,
}

impl Outbound {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("frames serialize");
        line.push('\n');
        line
    }

    pub fn error(code: &str, msg: impl Into<String>) -> Outbound {
        Outbound::Error {
            code: code.to_string(),
            msg: msg.into(),
        }
    }

    pub fn quote(event: &MarketEvent) -> Outbound {
        Outbound::Quote {
            symbol: event.symbol.as_str().to_string(),
            kind: event.kind.as_str().to_string(),
            step: event.step,
            bid_px: event.quote.bid.map(|(p, _)| p),
            bid_qty: event.quote.bid.map(|(_, q)| q),
            ask_px: event.quote.ask.map(|(p, _)| p),
            ask_qty: event.quote.ask.map(|(_, q)| q),
            last: event.quote.last,
            trade_px: event.trade.map(|t| t.price),
            trade_qty: event.trade.map(|t| t.quantity),
            aggressor: event.trade.map(|t| t.aggressor_side.as_str().to_string()),
        }
    }

    pub fn from_agent_event(event: AgentEvent) -> Outbound {
        match event {
            AgentEvent::Quote(e) => Outbound::quote(&e),
            AgentEvent::OrderClosed { order_id, fills } => Outbound::OrderClosed {
                order: order_id.0,
                fills: fills
                    .into_iter()
                    .map(|f| FillJson {
                        px: f.price,
                        qty: f.quantity,
                    })
                    .collect(),
            },
            AgentEvent::OrderCancelled { order_id, reason } => Outbound::OrderCancelled {
                order: order_id.0,
                reason: reason.as_str().to_string(),
            },
            AgentEvent::Killed => Outbound::Killed,
        }
    }
}

/// Stable error code strings for the wire.
pub fn api_error_code(err: &ApiError) -> &'static str {
    match err {
        ApiError::AgentNotRunning => "AGENT_NOT_RUNNING",
        ApiError::ValidationFailed(_) => "VALIDATION_FAILED",
        ApiError::InsufficientFunds => "INSUFFICIENT_FUNDS",
        ApiError::InsufficientShares => "INSUFFICIENT_SHARES",
        ApiError::NotOwner => "NOT_OWNER",
        ApiError::NotFound => "NOT_FOUND",
        ApiError::AlreadyClosed => "ALREADY_CLOSED",
        ApiError::UnknownInstrument(_) => "UNKNOWN_INSTRUMENT",
        ApiError::UnknownLatencyClass(_) => "UNKNOWN_LATENCY_CLASS",
        ApiError::RangeInvalid => "RANGE_INVALID",
        ApiError::UnknownAgent(_) => "UNKNOWN_AGENT",
    }
}

pub const CODE_NOT_AUTHENTICATED: &str = "NOT_AUTHENTICATED";
pub const CODE_AUTH_FAILED: &str = "AUTH_FAILED";
pub const CODE_PROTOCOL_ERROR: &str = "PROTOCOL_ERROR";
pub const CODE_NOT_AUTHORIZED: &str = "NOT_AUTHORIZED";
pub const CODE_ADMIN_FAILED: &str = "ADMIN_FAILED";
