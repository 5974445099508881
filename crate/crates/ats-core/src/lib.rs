//! Deterministic core of an agent trade server: per-symbol limit order
//! books with price-time priority matching, an agent runtime with
//! accounts, brokerage fees and certification, delayed-feed replay with
//! simulated book seeding, latency-tiered event dissemination, and an
//! append-only XML audit log.
//!
//! Everything in this crate is pure state manipulation over integers and
//! ordered maps: no IO, no wall clock (the host injects one), no floats
//! in any trading path. Replaying the same scripted inputs reproduces
//! the same trade tape, log and balances byte for byte. The crate is
//! `no_std` (with `alloc`); sockets, files, the CLI and real clocks live
//! in the companion server crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod account;
pub mod agent;
pub mod agents;
pub mod audit;
pub mod cert;
pub mod dissemination;
pub mod feed;
pub mod market;
pub mod runtime;
pub mod sourcing;
pub mod types;
pub mod xml;

pub use account::{Account, BrokerRecord, FeeSchedule};
pub use agent::{
    AgentCallbacks, AgentDescriptor, AgentState, CancelReason, EventKind, Fill, MarketEvent,
};
pub use audit::{AuditLog, LogEntry, LogFilter, LogKind, LogPayload, SeqRange};
pub use dissemination::{Dissemination, LatencyClass, SubscriptionId};
pub use feed::{FeedRecord, ReplaySchedule, SeedParams};
pub use market::{Depth, Instrument, Market, MarketError, OrderStatus, Quote, Trade};
pub use runtime::{
    AgentContext, AgentEvent, ApiError, Ats, EventSink, FixedClock, KillReport, Requester,
    RuntimeConfig, RuntimeError, StartingBalances, WallClock,
};
pub use types::{AgentId, BrokerId, Cash, ClassId, DeveloperId, OrderId, Price, Qty, Side, Step, Symbol};
