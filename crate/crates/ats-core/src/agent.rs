//! The agent shell contract: lifecycle states, the callback trait every
//! hosted agent implements, and the event payloads delivered to it.
//!
//! Lifecycle is strictly CREATED -> INITIALIZED -> RUNNING -> STOPPED,
//! with KILLED reachable from any live state through the broker or
//! administrator kill switch. The server invokes `on_initialize` and
//! `on_start` exactly once each, in that order; no event callback is
//! delivered before `on_start` returns or after the agent leaves RUNNING.
//!
//! Callbacks for one agent never overlap. An agent may call back into its
//! [`AgentContext`] from inside any callback; actions taken that way are
//! sequenced immediately, while resulting notifications are queued and
//! delivered after the current callback returns.

use alloc::vec::Vec;

use crate::market::Quote;
use crate::runtime::AgentContext;
use crate::types::{OrderId, Price, Qty, Side, Step, Symbol};

/// Agent lifecycle state.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum AgentState {
    Created,
    Initialized,
    Running,
    Stopped,
    Killed,
}

impl AgentState {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentState::Created => "CREATED",
            AgentState::Initialized => "INITIALIZED",
            AgentState::Running => "RUNNING",
            AgentState::Stopped => "STOPPED",
            AgentState::Killed => "KILLED",
        }
    }

    pub fn parse(s: &str) -> Option<AgentState> {
        Some(match s {
            "CREATED" => AgentState::Created,
            "INITIALIZED" => AgentState::Initialized,
            "RUNNING" => AgentState::Running,
            "STOPPED" => AgentState::Stopped,
            "KILLED" => AgentState::Killed,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, AgentState::Stopped | AgentState::Killed)
    }
}

impl core::fmt::Display for AgentState {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why an order left the book without filling.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CancelReason {
    /// The owning agent asked for the cancel.
    AgentRequest,
    /// The agent was killed; all its resting orders were struck.
    Killed,
    /// Exchange-seeded order replaced during book reseeding.
    Reseed,
}

impl CancelReason {
    pub fn as_str(self) -> &'static str {
        match self {
            CancelReason::AgentRequest => "AGENT_REQUEST",
            CancelReason::Killed => "KILLED",
            CancelReason::Reseed => "RESEED",
        }
    }

    pub fn parse(s: &str) -> Option<CancelReason> {
        Some(match s {
            "AGENT_REQUEST" => CancelReason::AgentRequest,
            "KILLED" => CancelReason::Killed,
            "RESEED" => CancelReason::Reseed,
            _ => return None,
        })
    }
}

/// One execution against an agent's order, as reported in the terminal
/// `on_order_closed` callback.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fill {
    pub price: Price,
    pub quantity: Qty,
    pub trade_seq: u64,
}

/// Kind of disseminated market event.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EventKind {
    Quote,
    Trade,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Quote => "QUOTE",
            EventKind::Trade => "TRADE",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        match s {
            "QUOTE" => Some(EventKind::Quote),
            "TRADE" => Some(EventKind::Trade),
            _ => None,
        }
    }
}

/// A market event delivered to a subscriber: either a top-of-book change
/// or a trade print, flagged by kind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketEvent {
    pub kind: EventKind,
    pub symbol: Symbol,
    /// Logical step at which the event originated.
    pub step: Step,
    /// Book state after the originating action (quote events; also
    /// attached to trade events for convenience).
    pub quote: Quote,
    /// Trade print, for trade events.
    pub trade: Option<TradePrint>,
}

/// Public trade information carried on a TRADE event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TradePrint {
    pub price: Price,
    pub quantity: Qty,
    pub aggressor_side: Side,
}

/// The contract every hosted agent implements. All methods have empty
/// defaults so simple agents override only what they use. `Send` so the
/// host can park the runtime behind a lock shared across sessions.
pub trait AgentCallbacks: Send {
    /// Invoked by the server exactly once, before `on_start`.
    fn on_initialize(&mut self, _ctx: &mut AgentContext<'_>) {}

    /// Invoked by the server exactly once, after `on_initialize`.
    fn on_start(&mut self, _ctx: &mut AgentContext<'_>) {}

    /// Graceful shutdown notification.
    fn on_stop(&mut self, _ctx: &mut AgentContext<'_>) {}

    /// A subscribed market event became due for this agent.
    fn on_quote(&mut self, _ctx: &mut AgentContext<'_>, _event: &MarketEvent) {}

    /// An order of this agent left the book unfilled or partially filled.
    fn on_order_cancelled(
        &mut self,
        _ctx: &mut AgentContext<'_>,
        _order_id: OrderId,
        _reason: CancelReason,
    ) {
    }

    /// An order of this agent filled completely; `fills` lists every
    /// execution it received, in order.
    fn on_order_closed(&mut self, _ctx: &mut AgentContext<'_>, _order_id: OrderId, _fills: &[Fill]) {}
}

/// Inert agent: accepts the lifecycle and ignores every event.
pub struct NullAgent;

impl AgentCallbacks for NullAgent {}

/// Required fields advertised to developers: identity, broker binding,
/// manifest digest and the developer signature over it. The owner id
/// names the registered developer whose key must verify the signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgentDescriptor {
    pub agent_id: crate::types::AgentId,
    pub owner_id: crate::types::DeveloperId,
    pub broker_id: crate::types::BrokerId,
    pub version: alloc::string::String,
    /// SHA-256 digest of the agent's manifest bytes.
    pub manifest_digest: [u8; 32],
    /// Developer signature over `manifest_digest`.
    pub signature: Vec<u8>,
}
