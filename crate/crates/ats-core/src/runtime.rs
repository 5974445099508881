//! The agent host: sequences every market-mutating action through one
//! logical-step counter, maintains accounts and reservations, settles
//! trades with brokerage fees, enforces broker/administrator powers and
//! gates registration on certification.
//!
//! Determinism contract: identical scripted inputs produce identical step
//! assignments, trade tapes, log contents and account states. Everything
//! iterates over ordered maps, wall time comes from a pluggable clock,
//! and agent callbacks are queued and dispatched in a fixed order rather
//! than recursively.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::account::{cash_reservation, notional, Account, BrokerRecord, FeeSchedule};
use crate::agent::{
    AgentCallbacks, AgentDescriptor, AgentState, CancelReason, EventKind, Fill, MarketEvent,
    TradePrint,
};
use crate::audit::{
    AuditError, AuditLog, LogEntry, LogFilter, LogPayload, SeqRange, Visibility,
};
use crate::cert::{CertError, DeveloperRegistry};
use crate::dissemination::{Dissemination, LatencyClass, SubscriptionId};
use crate::feed::{minor_to_ticks, seed_level_size, FeedRecord, SeedParams};
use crate::market::{
    Depth, Instrument, Market, MarketError, OrderSpec, Quote, Trade,
};
use crate::types::{
    AgentId, BrokerId, Cash, ClassId, DeveloperId, OrderId, Price, Qty, Side, Step, Symbol,
    WallTime,
};

/// Wall-clock source for log timestamps. Stub it to fix log bytes.
pub trait WallClock: Send {
    fn now_millis(&mut self) -> WallTime;
}

/// Clock that always reports the same instant; the determinism harness
/// and golden-log tests run on this.
pub struct FixedClock(pub WallTime);

impl WallClock for FixedClock {
    fn now_millis(&mut self) -> WallTime {
        self.0
    }
}

/// Outbound notification for remotely hosted agents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AgentEvent {
    Quote(MarketEvent),
    OrderClosed {
        order_id: OrderId,
        fills: Vec<Fill>,
    },
    OrderCancelled {
        order_id: OrderId,
        reason: CancelReason,
    },
    Killed,
}

/// Delivery channel for a remote agent's session. Implementations must
/// not block; the gateway backs this with an unbounded queue.
pub trait EventSink: Send {
    fn deliver(&mut self, event: AgentEvent);
}

enum AgentHost {
    /// In-process agent; `None` while its callback is being dispatched.
    Local(Option<Box<dyn AgentCallbacks>>),
    Remote(Box<dyn EventSink>),
}

struct AgentEntry {
    descriptor: AgentDescriptor,
    state: AgentState,
    host: AgentHost,
}

/// Who is asking: resolves log visibility and kill authority.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Requester {
    Administrator,
    Broker(BrokerId),
    Agent(AgentId),
}

/// Starting balances granted to an agent at registration.
#[derive(Clone, Debug, Default)]
pub struct StartingBalances {
    pub cash: Cash,
    pub positions: BTreeMap<Symbol, i64>,
}

/// Result of a kill: the orders struck in the same logical step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KillReport {
    pub agent_id: AgentId,
    pub cancelled_orders: Vec<OrderId>,
}

/// Static server parameters (the file-format layer lives in the host
/// crate; this is the already-validated form).
#[derive(Clone, Debug)]
pub struct RuntimeConfig {
    pub universe: Vec<Instrument>,
    pub latency_classes: Vec<LatencyClass>,
    /// Default starting cash for newly registered agents.
    pub starting_cash: Cash,
    pub seed: SeedParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuntimeError {
    SignatureInvalid,
    DeveloperRevoked,
    UnknownBroker(BrokerId),
    DuplicateAgent(AgentId),
    UnknownAgent(AgentId),
    IllegalTransition {
        agent: AgentId,
        from: AgentState,
    },
    NotAuthorized,
    DuplicateBroker(BrokerId),
    DuplicateDeveloper(DeveloperId),
    UnknownDeveloper(DeveloperId),
    InvalidKey,
    Config(String),
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeError::SignatureInvalid => f.write_str("descriptor signature invalid"),
            RuntimeError::DeveloperRevoked => f.write_str("developer revoked"),
            RuntimeError::UnknownBroker(b) => write!(f, "unknown broker {b}"),
            RuntimeError::DuplicateAgent(a) => write!(f, "agent id {a} already registered"),
            RuntimeError::UnknownAgent(a) => write!(f, "unknown agent {a}"),
            RuntimeError::IllegalTransition { agent, from } => {
                write!(f, "illegal lifecycle transition for {agent} from {from}")
            }
            RuntimeError::NotAuthorized => f.write_str("not authorized"),
            RuntimeError::DuplicateBroker(b) => write!(f, "broker {b} already registered"),
            RuntimeError::DuplicateDeveloper(d) => write!(f, "developer {d} already registered"),
            RuntimeError::UnknownDeveloper(d) => write!(f, "unknown developer {d}"),
            RuntimeError::InvalidKey => f.write_str("malformed verification key"),
            RuntimeError::Config(why) => write!(f, "bad configuration: {why}"),
        }
    }
}

impl core::error::Error for RuntimeError {}

/// Errors surfaced through the agent SDK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ApiError {
    AgentNotRunning,
    ValidationFailed(MarketError),
    InsufficientFunds,
    InsufficientShares,
    NotOwner,
    NotFound,
    AlreadyClosed,
    UnknownInstrument(Symbol),
    UnknownLatencyClass(ClassId),
    RangeInvalid,
    UnknownAgent(AgentId),
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ApiError::AgentNotRunning => f.write_str("agent not running"),
            ApiError::ValidationFailed(e) => write!(f, "validation failed: {e}"),
            ApiError::InsufficientFunds => f.write_str("insufficient funds"),
            ApiError::InsufficientShares => f.write_str("insufficient shares"),
            ApiError::NotOwner => f.write_str("not the order owner"),
            ApiError::NotFound => f.write_str("order not found"),
            ApiError::AlreadyClosed => f.write_str("order already closed"),
            ApiError::UnknownInstrument(s) => write!(f, "unknown instrument {s}"),
            ApiError::UnknownLatencyClass(c) => write!(f, "unknown latency class {c}"),
            ApiError::RangeInvalid => f.write_str("invalid range"),
            ApiError::UnknownAgent(a) => write!(f, "unknown agent {a}"),
        }
    }
}

impl core::error::Error for ApiError {}

/// Crossed or unusable feed record, skipped without touching the book.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrossedFeed {
    pub symbol: Symbol,
    pub bid_ticks: Price,
    pub ask_ticks: Price,
}

enum Pending {
    Initialize(AgentId),
    Start(AgentId),
    Stop(AgentId),
    Quote(AgentId, MarketEvent),
    OrderClosed(AgentId, OrderId, Vec<Fill>),
    OrderCancelled(AgentId, OrderId, CancelReason),
}

impl Pending {
    fn agent(&self) -> &AgentId {
        match self {
            Pending::Initialize(a)
            | Pending::Start(a)
            | Pending::Stop(a)
            | Pending::Quote(a, _)
            | Pending::OrderClosed(a, _, _)
            | Pending::OrderCancelled(a, _, _) => a,
        }
    }
}

/// The agent trade server runtime.
pub struct Ats {
    config: RuntimeConfig,
    market: Market,
    accounts: BTreeMap<AgentId, Account>,
    brokers: BTreeMap<BrokerId, BrokerRecord>,
    developers: DeveloperRegistry,
    agents: BTreeMap<AgentId, AgentEntry>,
    dissemination: Dissemination,
    log: AuditLog,
    clock: Box<dyn WallClock>,
    step: Step,
    action_wall: WallTime,
    next_order_id: u64,
    operator_feed_credits: Cash,
    pending: VecDeque<Pending>,
    dispatching: bool,
    tape: Vec<Trade>,
    order_fills: BTreeMap<OrderId, Vec<Fill>>,
}

impl Ats {
    /// Build the runtime. Returns configuration warnings (non-fatal)
    /// alongside.
    pub fn new(
        config: RuntimeConfig,
        clock: Box<dyn WallClock>,
    ) -> Result<(Ats, Vec<String>), RuntimeError> {
        let mut market = Market::new();
        for inst in &config.universe {
            market
                .add_instrument(inst.clone())
                .map_err(|e| RuntimeError::Config(e.to_string()))?;
        }
        if config.seed.levels < 1 {
            return Err(RuntimeError::Config(String::from("seed levels must be >= 1")));
        }
        let (dissemination, warnings) = Dissemination::new(config.latency_classes.clone())
            .map_err(|e| RuntimeError::Config(e.to_string()))?;
        let mut accounts = BTreeMap::new();
        accounts.insert(AgentId::exchange(), Account::default());
        Ok((
            Ats {
                config,
                market,
                accounts,
                brokers: BTreeMap::new(),
                developers: DeveloperRegistry::new(),
                agents: BTreeMap::new(),
                dissemination,
                log: AuditLog::new(),
                clock,
                step: 0,
                action_wall: 0,
                next_order_id: 0,
                operator_feed_credits: 0,
                pending: VecDeque::new(),
                dispatching: false,
                tape: Vec::new(),
                order_fills: BTreeMap::new(),
            },
            warnings,
        ))
    }

    // ------------------------------------------------------------------
    // administration: brokers, developers, certification
    // ------------------------------------------------------------------

    pub fn add_broker(
        &mut self,
        broker_id: BrokerId,
        fee_schedule: FeeSchedule,
    ) -> Result<(), RuntimeError> {
        if self.brokers.contains_key(&broker_id) {
            return Err(RuntimeError::DuplicateBroker(broker_id));
        }
        self.brokers
            .insert(broker_id.clone(), BrokerRecord::new(broker_id, fee_schedule));
        Ok(())
    }

    pub fn register_developer(
        &mut self,
        id: DeveloperId,
        key: &[u8; 32],
    ) -> Result<(), RuntimeError> {
        self.developers.register(id.clone(), key).map_err(|e| match e {
            CertError::DuplicateDeveloper(d) => RuntimeError::DuplicateDeveloper(d),
            CertError::InvalidKey => RuntimeError::InvalidKey,
            _ => RuntimeError::Config(e.to_string()),
        })?;
        self.log_admin_action("register-developer", id.as_str());
        Ok(())
    }

    pub fn revoke_developer(&mut self, id: &DeveloperId) -> Result<(), RuntimeError> {
        self.developers.revoke(id).map_err(|e| match e {
            CertError::UnknownDeveloper(d) => RuntimeError::UnknownDeveloper(d),
            _ => RuntimeError::Config(e.to_string()),
        })?;
        self.log_admin_action("revoke-developer", id.as_str());
        Ok(())
    }

    /// Verification key of an active (non-revoked) developer, for session
    /// authentication at the gateway.
    pub fn developer_key(&self, id: &DeveloperId) -> Option<[u8; 32]> {
        self.developers.developer(id).and_then(|rec| {
            (rec.status == crate::cert::DeveloperStatus::Active).then(|| rec.key.to_bytes())
        })
    }

    /// Pure certification check against the current registry.
    pub fn verify_descriptor(&self, desc: &AgentDescriptor) -> Result<(), RuntimeError> {
        self.developers.verify_descriptor(desc).map_err(|e| match e {
            CertError::DeveloperRevoked => RuntimeError::DeveloperRevoked,
            _ => RuntimeError::SignatureInvalid,
        })
    }

    // ------------------------------------------------------------------
    // agent lifecycle
    // ------------------------------------------------------------------

    pub fn register_local_agent(
        &mut self,
        descriptor: AgentDescriptor,
        callbacks: Box<dyn AgentCallbacks>,
        balances: Option<StartingBalances>,
    ) -> Result<(), RuntimeError> {
        self.register_agent(descriptor, AgentHost::Local(Some(callbacks)), balances)
    }

    pub fn register_remote_agent(
        &mut self,
        descriptor: AgentDescriptor,
        sink: Box<dyn EventSink>,
        balances: Option<StartingBalances>,
    ) -> Result<(), RuntimeError> {
        self.register_agent(descriptor, AgentHost::Remote(sink), balances)
    }

    fn register_agent(
        &mut self,
        descriptor: AgentDescriptor,
        host: AgentHost,
        balances: Option<StartingBalances>,
    ) -> Result<(), RuntimeError> {
        self.verify_descriptor(&descriptor)?;
        if !self.brokers.contains_key(&descriptor.broker_id) {
            return Err(RuntimeError::UnknownBroker(descriptor.broker_id.clone()));
        }
        let agent_id = descriptor.agent_id.clone();
        if agent_id.is_exchange() || self.agents.contains_key(&agent_id) {
            return Err(RuntimeError::DuplicateAgent(agent_id));
        }

        let balances = balances.unwrap_or(StartingBalances {
            cash: self.config.starting_cash,
            positions: BTreeMap::new(),
        });
        let mut account = Account::with_cash(balances.cash);
        for (sym, pos) in balances.positions {
            account.add_position(&sym, pos);
        }
        self.accounts.insert(agent_id.clone(), account);
        self.brokers
            .get_mut(&descriptor.broker_id)
            .expect("broker checked")
            .agent_ids
            .insert(agent_id.clone());
        self.agents.insert(
            agent_id.clone(),
            AgentEntry {
                descriptor,
                state: AgentState::Created,
                host,
            },
        );

        self.begin_action();
        self.log_lifecycle(&agent_id, AgentState::Created);
        self.finish_action();
        Ok(())
    }

    /// CREATED -> INITIALIZED -> RUNNING, invoking `on_initialize` and
    /// `on_start` in order within one logical step.
    pub fn start_agent(&mut self, agent_id: &AgentId) -> Result<(), RuntimeError> {
        let entry = self
            .agents
            .get(agent_id)
            .ok_or_else(|| RuntimeError::UnknownAgent(agent_id.clone()))?;
        if entry.state != AgentState::Created {
            return Err(RuntimeError::IllegalTransition {
                agent: agent_id.clone(),
                from: entry.state,
            });
        }
        self.begin_action();
        self.set_state(agent_id, AgentState::Initialized);
        self.pending.push_back(Pending::Initialize(agent_id.clone()));
        self.drain_ready();
        self.set_state(agent_id, AgentState::Running);
        self.pending.push_back(Pending::Start(agent_id.clone()));
        self.finish_action();
        Ok(())
    }

    /// Graceful stop: `on_stop` runs, resting orders stay in the book,
    /// subscriptions are dropped.
    pub fn stop_agent(&mut self, agent_id: &AgentId) -> Result<(), RuntimeError> {
        let entry = self
            .agents
            .get(agent_id)
            .ok_or_else(|| RuntimeError::UnknownAgent(agent_id.clone()))?;
        if entry.state != AgentState::Running {
            return Err(RuntimeError::IllegalTransition {
                agent: agent_id.clone(),
                from: entry.state,
            });
        }
        self.begin_action();
        self.pending.push_back(Pending::Stop(agent_id.clone()));
        self.drain_ready();
        self.set_state(agent_id, AgentState::Stopped);
        self.dissemination.remove_agent(agent_id);
        self.finish_action();
        Ok(())
    }

    /// Immediate termination by the agent's broker or the administrator:
    /// pending callbacks discarded, every resting order struck within the
    /// same logical step, subscriptions dropped, account frozen. Killing
    /// an already-killed agent is an idempotent no-op.
    pub fn kill_agent(
        &mut self,
        agent_id: &AgentId,
        requester: &Requester,
    ) -> Result<KillReport, RuntimeError> {
        let entry = self
            .agents
            .get(agent_id)
            .ok_or_else(|| RuntimeError::UnknownAgent(agent_id.clone()))?;
        let authorized = match requester {
            Requester::Administrator => true,
            Requester::Broker(b) => entry.descriptor.broker_id == *b,
            Requester::Agent(_) => false,
        };
        if !authorized {
            return Err(RuntimeError::NotAuthorized);
        }
        if entry.state == AgentState::Killed {
            return Ok(KillReport {
                agent_id: agent_id.clone(),
                cancelled_orders: Vec::new(),
            });
        }

        self.begin_action();
        self.pending.retain(|p| p.agent() != agent_id);
        self.dissemination.remove_agent(agent_id);

        let open = self.market.open_orders_of(agent_id);
        let mut tops: BTreeMap<Symbol, Quote> = BTreeMap::new();
        for oid in &open {
            let sym = self.market.order(*oid).expect("open order").symbol.clone();
            tops.entry(sym.clone())
                .or_insert_with(|| self.market.top_of_book(&sym).expect("listed"));
        }
        for oid in &open {
            self.cancel_open_order(*oid, CancelReason::Killed, false);
        }
        for (sym, before) in tops {
            self.publish_action_events(&sym, &before, &[]);
        }

        self.set_state(agent_id, AgentState::Killed);
        self.log_admin_inline("kill-agent", agent_id.as_str());
        if let Some(entry) = self.agents.get_mut(agent_id) {
            if let AgentHost::Remote(sink) = &mut entry.host {
                sink.deliver(AgentEvent::Killed);
            }
        }
        self.finish_action();
        Ok(KillReport {
            agent_id: agent_id.clone(),
            cancelled_orders: open,
        })
    }

    pub fn agent_state(&self, agent_id: &AgentId) -> Option<AgentState> {
        self.agents.get(agent_id).map(|e| e.state)
    }

    pub fn agent_descriptor(&self, agent_id: &AgentId) -> Option<&AgentDescriptor> {
        self.agents.get(agent_id).map(|e| &e.descriptor)
    }

    /// (agent, state, broker, owner) summaries for operator tooling.
    pub fn agents_summary(&self) -> Vec<(AgentId, AgentState, BrokerId, DeveloperId)> {
        self.agents
            .iter()
            .map(|(id, e)| {
                (
                    id.clone(),
                    e.state,
                    e.descriptor.broker_id.clone(),
                    e.descriptor.owner_id.clone(),
                )
            })
            .collect()
    }

    // ------------------------------------------------------------------
    // the sequencer
    // ------------------------------------------------------------------

    fn begin_action(&mut self) -> Step {
        self.step += 1;
        self.action_wall = self.clock.now_millis();
        self.step
    }

    fn finish_action(&mut self) {
        self.drain_dissemination();
        self.drain_ready();
    }

    pub fn current_step(&self) -> Step {
        self.step
    }

    fn set_state(&mut self, agent_id: &AgentId, state: AgentState) {
        self.agents
            .get_mut(agent_id)
            .expect("lifecycle caller checked agent")
            .state = state;
        self.log_lifecycle(agent_id, state);
    }

    fn log_lifecycle(&mut self, agent_id: &AgentId, state: AgentState) {
        self.append_log(Some(agent_id.clone()), LogPayload::AgentLifecycle { state });
    }

    /// Record an administrative action in its own logical step. Also the
    /// hook the operator command channel uses for its mutations.
    pub fn log_admin_action(&mut self, action: &str, target: &str) {
        self.begin_action();
        self.log_admin_inline(action, target);
        self.finish_action();
    }

    fn log_admin_inline(&mut self, action: &str, target: &str) {
        self.append_log(
            None,
            LogPayload::AdminAction {
                action: String::from(action),
                target: String::from(target),
            },
        );
    }

    fn append_log(&mut self, agent: Option<AgentId>, payload: LogPayload) {
        self.log
            .append(self.action_wall, self.step, agent, payload)
            .expect("runtime-built payloads are complete");
    }

    // ------------------------------------------------------------------
    // orders and settlement
    // ------------------------------------------------------------------

    fn schedule_of(&self, agent_id: &AgentId) -> FeeSchedule {
        if agent_id.is_exchange() {
            return FeeSchedule::ZERO;
        }
        let broker = &self.agents[agent_id].descriptor.broker_id;
        self.brokers[broker].fee_schedule
    }

    /// Place an order for an agent. Validates, reserves, sequences,
    /// matches, settles and logs in one action.
    fn place_order(
        &mut self,
        agent_id: &AgentId,
        symbol: &Symbol,
        side: Side,
        limit_price: Price,
        quantity: Qty,
    ) -> Result<OrderId, ApiError> {
        let inst = self
            .market
            .instrument(symbol)
            .ok_or_else(|| ApiError::ValidationFailed(MarketError::UnknownInstrument(symbol.clone())))?;
        let (tick, lot) = (inst.tick_size, inst.lot_size);

        let probe = OrderSpec {
            order_id: OrderId(self.next_order_id + 1),
            agent_id: agent_id.clone(),
            symbol: symbol.clone(),
            side,
            limit_price,
            quantity,
        };
        self.market
            .validate_order(&probe)
            .map_err(ApiError::ValidationFailed)?;

        let exchange = agent_id.is_exchange();
        if !exchange {
            let schedule = self.schedule_of(agent_id);
            let need = cash_reservation(side, &schedule, limit_price, tick, lot, quantity);
            let account = self.accounts.get_mut(agent_id).expect("registered agent");
            match side {
                Side::Buy => {
                    if account.free_cash() < need {
                        return Err(ApiError::InsufficientFunds);
                    }
                }
                Side::Sell => {
                    if account.free_shares(symbol) < quantity as i64 {
                        return Err(ApiError::InsufficientShares);
                    }
                    if account.free_cash() < need {
                        return Err(ApiError::InsufficientFunds);
                    }
                }
            }
            account.reserved_cash += need;
            if side == Side::Sell {
                account.reserve_shares(symbol, quantity);
            }
        }

        self.begin_action();
        self.next_order_id += 1;
        let order_id = OrderId(self.next_order_id);
        let top_before = self.market.top_of_book(symbol).expect("listed");
        let result = self
            .market
            .submit(OrderSpec {
                order_id,
                agent_id: agent_id.clone(),
                symbol: symbol.clone(),
                side,
                limit_price,
                quantity,
            })
            .expect("validated order");

        self.append_log(
            Some(agent_id.clone()),
            LogPayload::OrderPlaced {
                order_id,
                symbol: symbol.clone(),
                side,
                price: limit_price,
                quantity,
            },
        );
        let prints = self.settle_trades(&result.trades);
        self.publish_action_events(symbol, &top_before, &prints);
        self.finish_action();
        Ok(order_id)
    }

    /// Settle each trade: cash, positions, reservations, fees, logs and
    /// terminal callbacks. Returns the public prints for dissemination.
    fn settle_trades(&mut self, trades: &[Trade]) -> Vec<TradePrint> {
        let mut prints = Vec::with_capacity(trades.len());
        // remaining-before bookkeeping: first sight of an order in this
        // action reconstructs its pre-action remaining from the final
        // state plus everything it filled here
        let mut rem: BTreeMap<OrderId, Qty> = BTreeMap::new();
        for t in trades {
            for oid in [t.buy_order_id, t.sell_order_id] {
                rem.entry(oid).or_insert_with(|| {
                    let fin = self.market.order(oid).expect("traded order").remaining;
                    let filled_here: Qty = trades
                        .iter()
                        .filter(|x| x.buy_order_id == oid || x.sell_order_id == oid)
                        .map(|x| x.quantity)
                        .sum();
                    fin + filled_here
                });
            }
        }

        for t in trades {
            self.tape.push(t.clone());
            let buyer = self.market.order(t.buy_order_id).expect("order").agent_id.clone();
            let seller = self.market.order(t.sell_order_id).expect("order").agent_id.clone();
            let inst = self.market.instrument(&t.symbol).expect("listed");
            let (tick, lot) = (inst.tick_size, inst.lot_size);
            let value = notional(t.price, tick, t.quantity);
            let self_trade = buyer == seller;

            // trade entries, one per side
            for (agent, side) in [(&buyer, Side::Buy), (&seller, Side::Sell)] {
                self.append_log(
                    Some(agent.clone()),
                    LogPayload::Trade {
                        trade_seq: t.seq,
                        side,
                        price: t.price,
                        quantity: t.quantity,
                        buy_order_id: t.buy_order_id,
                        sell_order_id: t.sell_order_id,
                        self_trade,
                    },
                );
            }

            // account mutations per side
            for (agent, oid, side) in [
                (&buyer, t.buy_order_id, Side::Buy),
                (&seller, t.sell_order_id, Side::Sell),
            ] {
                let order = self.market.order(oid).expect("order");
                let (limit, schedule) = (order.limit_price, self.schedule_of(agent));
                let fee = if agent.is_exchange() {
                    0
                } else {
                    schedule.trade_fee(value)
                };
                let rem_before = rem[&oid];
                let rem_after = rem_before - t.quantity;

                let account = self.accounts.get_mut(agent).expect("account");
                if !agent.is_exchange() {
                    let release = cash_reservation(side, &schedule, limit, tick, lot, rem_before)
                        - cash_reservation(side, &schedule, limit, tick, lot, rem_after);
                    account.reserved_cash -= release;
                }
                match side {
                    Side::Buy => {
                        account.cash -= value;
                        account.add_position(&t.symbol, t.quantity as i64);
                    }
                    Side::Sell => {
                        account.cash += value;
                        account.add_position(&t.symbol, -(t.quantity as i64));
                        if !agent.is_exchange() {
                            account.release_shares(&t.symbol, t.quantity);
                        }
                    }
                }
                if !agent.is_exchange() && !schedule.is_zero() {
                    account.cash -= fee;
                    let broker_id = self.agents[agent].descriptor.broker_id.clone();
                    self.brokers.get_mut(&broker_id).expect("broker").accrued_fees += fee;
                    self.append_log(
                        Some(agent.clone()),
                        LogPayload::Fee {
                            amount: fee,
                            broker: broker_id,
                        },
                    );
                }
                if !agent.is_exchange() {
                    debug_assert!(self.accounts[agent].cash >= 0);
                    debug_assert!(self.accounts[agent].reserved_cash >= 0);
                }

                rem.insert(oid, rem_after);
                self.order_fills.entry(oid).or_default().push(Fill {
                    price: t.price,
                    quantity: t.quantity,
                    trade_seq: t.seq,
                });

                // order progress entry + terminal callback
                if rem_after == 0 {
                    let qty = self.market.order(oid).expect("order").quantity;
                    self.append_log(
                        Some(agent.clone()),
                        LogPayload::OrderClosed {
                            order_id: oid,
                            quantity: qty,
                        },
                    );
                    let fills = self.order_fills.remove(&oid).unwrap_or_default();
                    if !agent.is_exchange() {
                        self.pending
                            .push_back(Pending::OrderClosed(agent.clone(), oid, fills));
                    }
                } else {
                    self.append_log(
                        Some(agent.clone()),
                        LogPayload::OrderPartial {
                            order_id: oid,
                            price: t.price,
                            quantity: t.quantity,
                            remaining: rem_after,
                        },
                    );
                }
            }

            prints.push(TradePrint {
                price: t.price,
                quantity: t.quantity,
                aggressor_side: t.aggressor_side,
            });
        }
        prints
    }

    /// Strike an open order, release its reservations, log it and (for
    /// agent orders, unless the agent is being killed) queue the cancel
    /// callback.
    fn cancel_open_order(&mut self, order_id: OrderId, reason: CancelReason, notify: bool) {
        let order = self.market.order(order_id).expect("open order").clone();
        let ack = self.market.force_cancel(order_id).expect("open order");
        let agent = order.agent_id.clone();
        if !agent.is_exchange() {
            let inst = self.market.instrument(&order.symbol).expect("listed");
            let (tick, lot) = (inst.tick_size, inst.lot_size);
            let schedule = self.schedule_of(&agent);
            let release = cash_reservation(
                order.side,
                &schedule,
                order.limit_price,
                tick,
                lot,
                ack.cancelled_qty,
            );
            let account = self.accounts.get_mut(&agent).expect("account");
            account.reserved_cash -= release;
            if order.side == Side::Sell {
                account.release_shares(&order.symbol, ack.cancelled_qty);
            }
        }
        self.order_fills.remove(&order_id);
        self.append_log(
            Some(agent.clone()),
            LogPayload::OrderCancelled {
                order_id,
                cancelled_qty: ack.cancelled_qty,
                reason,
            },
        );
        if notify && !agent.is_exchange() {
            self.pending
                .push_back(Pending::OrderCancelled(agent, order_id, reason));
        }
    }

    /// Publish the action's trade prints and, when the top of book moved,
    /// a quote event, all at the current step.
    fn publish_action_events(&mut self, symbol: &Symbol, top_before: &Quote, prints: &[TradePrint]) {
        let top_after = self.market.top_of_book(symbol).expect("listed");
        for p in prints {
            self.dissemination.publish(&MarketEvent {
                kind: EventKind::Trade,
                symbol: symbol.clone(),
                step: self.step,
                quote: top_after.clone(),
                trade: Some(*p),
            });
        }
        if top_after != *top_before {
            self.dissemination.publish(&MarketEvent {
                kind: EventKind::Quote,
                symbol: symbol.clone(),
                step: self.step,
                quote: top_after,
                trade: None,
            });
        }
    }

    // ------------------------------------------------------------------
    // dissemination drain + callback dispatch
    // ------------------------------------------------------------------

    fn drain_dissemination(&mut self) {
        let step = self.step;
        for sub_id in self.dissemination.subscription_ids() {
            let Some(sub) = self.dissemination.subscription(sub_id) else {
                continue;
            };
            let agent = sub.agent_id.clone();
            let running = self
                .agents
                .get(&agent)
                .is_some_and(|e| e.state == AgentState::Running);
            if !running {
                continue;
            }
            let outcome = {
                let accounts = &mut self.accounts;
                let credits = &mut self.operator_feed_credits;
                let account = accounts.get_mut(&agent).expect("registered agent");
                let mut pay = |fee: Cash| -> bool {
                    if account.free_cash() < fee {
                        return false;
                    }
                    account.cash -= fee;
                    *credits += fee;
                    true
                };
                self.dissemination
                    .drain_due(sub_id, step, &mut pay)
                    .expect("live subscription")
            };
            for (delivery, fee) in outcome.delivered {
                self.append_log(
                    Some(agent.clone()),
                    LogPayload::QuoteDelivered {
                        subscription_id: sub_id,
                        symbol: delivery.event.symbol.clone(),
                        event_kind: delivery.event.kind,
                        event_step: delivery.event.step,
                        due_step: delivery.due_step,
                        fee,
                    },
                );
                self.pending
                    .push_back(Pending::Quote(agent.clone(), delivery.event));
            }
            if outcome.suspended_now {
                let text = format!(
                    "subscription {sub_id} of agent {agent} suspended: feed fee unaffordable"
                );
                self.log.append_error(self.action_wall, "dissemination", &text);
            }
        }
    }

    fn drain_ready(&mut self) {
        if self.dispatching {
            return;
        }
        self.dispatching = true;
        while let Some(item) = self.pending.pop_front() {
            self.dispatch_one(item);
        }
        self.dispatching = false;
    }

    fn dispatch_one(&mut self, item: Pending) {
        let agent_id = item.agent().clone();
        let Some(entry) = self.agents.get_mut(&agent_id) else {
            return;
        };
        match &mut entry.host {
            AgentHost::Remote(sink) => {
                let event = match item {
                    Pending::Quote(_, e) => AgentEvent::Quote(e),
                    Pending::OrderClosed(_, oid, fills) => AgentEvent::OrderClosed {
                        order_id: oid,
                        fills,
                    },
                    Pending::OrderCancelled(_, oid, reason) => AgentEvent::OrderCancelled {
                        order_id: oid,
                        reason,
                    },
                    // remote lifecycle is driven by the session itself
                    Pending::Initialize(_) | Pending::Start(_) | Pending::Stop(_) => return,
                };
                sink.deliver(event);
            }
            AgentHost::Local(slot) => {
                let Some(mut callbacks) = slot.take() else {
                    // re-entrant dispatch for the same agent cannot happen
                    // (queued, not recursive); a vacant slot means the
                    // agent is mid-teardown
                    return;
                };
                let mut ctx = AgentContext {
                    ats: self,
                    agent_id: agent_id.clone(),
                };
                match item {
                    Pending::Initialize(_) => callbacks.on_initialize(&mut ctx),
                    Pending::Start(_) => callbacks.on_start(&mut ctx),
                    Pending::Stop(_) => callbacks.on_stop(&mut ctx),
                    Pending::Quote(_, e) => callbacks.on_quote(&mut ctx, &e),
                    Pending::OrderClosed(_, oid, fills) => {
                        callbacks.on_order_closed(&mut ctx, oid, &fills)
                    }
                    Pending::OrderCancelled(_, oid, reason) => {
                        callbacks.on_order_cancelled(&mut ctx, oid, reason)
                    }
                }
                if let Some(entry) = self.agents.get_mut(&agent_id) {
                    if let AgentHost::Local(slot) = &mut entry.host {
                        *slot = Some(callbacks);
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // feed application
    // ------------------------------------------------------------------

    /// Apply one feed record as a sequenced market-data action: reseed
    /// the exchange side of the book and refresh the last print. Crossed
    /// records are rejected before any step is consumed.
    pub fn apply_feed_record(&mut self, record: &FeedRecord) -> Result<(), CrossedFeed> {
        let Some(inst) = self.market.instrument(&record.symbol) else {
            // parse-stage filtering keeps unknown symbols out; a stray one
            // is dropped the same way
            return Ok(());
        };
        let tick = inst.tick_size;
        let lot = inst.lot_size;
        let to_ticks = |minor: Option<u64>| -> Option<Price> {
            let t = minor_to_ticks(minor?, tick);
            (t >= 1).then_some(t)
        };
        let bid = to_ticks(record.bid_minor);
        let ask = to_ticks(record.ask_minor);
        let last = to_ticks(record.last_minor);
        if let (Some(b), Some(a)) = (bid, ask) {
            if b >= a {
                let err = CrossedFeed {
                    symbol: record.symbol.clone(),
                    bid_ticks: b,
                    ask_ticks: a,
                };
                self.log.append_error(
                    self.clock.now_millis(),
                    "feed",
                    &format!(
                        "crossed record skipped: {} bid {b} >= ask {a}",
                        record.symbol
                    ),
                );
                return Err(err);
            }
        }

        let symbol = record.symbol.clone();
        let exchange = AgentId::exchange();
        self.begin_action();
        let top_before = self.market.top_of_book(&symbol).expect("listed");

        // strike previous unexecuted exchange orders for this symbol
        let stale: Vec<OrderId> = self
            .market
            .open_orders_of(&exchange)
            .into_iter()
            .filter(|oid| self.market.order(*oid).expect("open").symbol == symbol)
            .collect();
        for oid in stale {
            self.cancel_open_order(oid, CancelReason::Reseed, false);
        }

        // fresh liquidity: asks best-first, then bids best-first; these go
        // through normal matching, so a moved market executes resting
        // agent orders it now crosses
        let mut prints = Vec::new();
        let params = self.config.seed;
        if let Some(a) = ask {
            for i in 0..params.levels {
                let px = a + i;
                let size = seed_level_size(&params, i, lot);
                prints.extend(self.seed_order(&symbol, Side::Sell, px, size));
            }
        }
        if let Some(b) = bid {
            for i in 0..params.levels {
                if b <= i {
                    break;
                }
                let px = b - i;
                let size = seed_level_size(&params, i, lot);
                prints.extend(self.seed_order(&symbol, Side::Buy, px, size));
            }
        }

        if let Some(l) = last {
            self.market.set_last_trade(&symbol, l);
        }
        self.publish_action_events(&symbol, &top_before, &prints);
        self.finish_action();
        Ok(())
    }

    fn seed_order(&mut self, symbol: &Symbol, side: Side, px: Price, qty: Qty) -> Vec<TradePrint> {
        let exchange = AgentId::exchange();
        self.next_order_id += 1;
        let order_id = OrderId(self.next_order_id);
        let result = self
            .market
            .submit(OrderSpec {
                order_id,
                agent_id: exchange.clone(),
                symbol: symbol.clone(),
                side,
                limit_price: px,
                quantity: qty,
            })
            .expect("seed order valid by construction");
        self.append_log(
            Some(exchange),
            LogPayload::OrderPlaced {
                order_id,
                symbol: symbol.clone(),
                side,
                price: px,
                quantity: qty,
            },
        );
        self.settle_trades(&result.trades)
    }

    // ------------------------------------------------------------------
    // reads, logs, reports
    // ------------------------------------------------------------------

    pub fn top_of_book(&self, symbol: &Symbol) -> Result<Quote, ApiError> {
        self.market
            .top_of_book(symbol)
            .map_err(|_| ApiError::UnknownInstrument(symbol.clone()))
    }

    pub fn depth_snapshot(
        &self,
        symbol: &Symbol,
        levels: core::num::NonZeroUsize,
    ) -> Result<Depth, ApiError> {
        self.market
            .depth_snapshot(symbol, levels)
            .map_err(|_| ApiError::UnknownInstrument(symbol.clone()))
    }

    pub fn market(&self) -> &Market {
        &self.market
    }

    pub fn account(&self, agent_id: &AgentId) -> Option<&Account> {
        self.accounts.get(agent_id)
    }

    pub fn accounts(&self) -> &BTreeMap<AgentId, Account> {
        &self.accounts
    }

    pub fn broker(&self, broker_id: &BrokerId) -> Option<&BrokerRecord> {
        self.brokers.get(broker_id)
    }

    pub fn brokers(&self) -> &BTreeMap<BrokerId, BrokerRecord> {
        &self.brokers
    }

    pub fn operator_feed_credits(&self) -> Cash {
        self.operator_feed_credits
    }

    pub fn trade_tape(&self) -> String {
        crate::market::trade_tape(&self.tape)
    }

    pub fn trades(&self) -> &[Trade] {
        &self.tape
    }

    pub fn config(&self) -> &RuntimeConfig {
        &self.config
    }

    fn visibility_of(&self, requester: &Requester) -> Visibility {
        match requester {
            Requester::Administrator => Visibility::All,
            Requester::Agent(a) => Visibility::of_agent(a),
            Requester::Broker(b) => Visibility::Agents(
                self.brokers
                    .get(b)
                    .map(|r| r.agent_ids.clone())
                    .unwrap_or_default(),
            ),
        }
    }

    pub fn query_log(
        &self,
        requester: &Requester,
        filter: &LogFilter,
    ) -> Result<Vec<LogEntry>, AuditError> {
        self.log.query(&self.visibility_of(requester), filter)
    }

    pub fn export_log_xml(
        &self,
        requester: &Requester,
        range: SeqRange,
    ) -> Result<String, AuditError> {
        self.log.export_xml(&self.visibility_of(requester), range)
    }

    pub fn export_errors_xml(
        &self,
        requester: &Requester,
        range: SeqRange,
    ) -> Result<String, AuditError> {
        if *requester != Requester::Administrator {
            return Err(AuditError::AccessDenied);
        }
        self.log.export_errors_xml(range)
    }

    pub fn log(&self) -> &AuditLog {
        &self.log
    }

    pub fn log_feed_warning(&mut self, text: &str) {
        let wall = self.clock.now_millis();
        self.log.append_error(wall, "feed", text);
    }

    /// Handle for an agent's SDK calls from outside callbacks (gateway
    /// sessions, tests). Calls made through it are sequenced exactly like
    /// in-callback calls.
    pub fn context(&mut self, agent_id: &AgentId) -> Result<AgentContext<'_>, ApiError> {
        if !self.agents.contains_key(agent_id) {
            return Err(ApiError::UnknownAgent(agent_id.clone()));
        }
        Ok(AgentContext {
            ats: self,
            agent_id: agent_id.clone(),
        })
    }
}

/// The agent's handle on the server: every operation is attributed to
/// exactly the one agent the context was issued for.
pub struct AgentContext<'a> {
    ats: &'a mut Ats,
    agent_id: AgentId,
}

impl AgentContext<'_> {
    pub fn agent_id(&self) -> &AgentId {
        &self.agent_id
    }

    fn state(&self) -> AgentState {
        self.ats.agents[&self.agent_id].state
    }

    /// Place a limit order; the server assigns the order id.
    pub fn create_order(
        &mut self,
        symbol: &Symbol,
        side: Side,
        limit_price: Price,
        quantity: Qty,
    ) -> Result<OrderId, ApiError> {
        if self.state() != AgentState::Running {
            return Err(ApiError::AgentNotRunning);
        }
        self.ats
            .place_order(&self.agent_id, symbol, side, limit_price, quantity)
    }

    /// Cancel an own order; `on_order_cancelled(AGENT_REQUEST)` is
    /// delivered when the removal completes.
    pub fn cancel_order(&mut self, order_id: OrderId) -> Result<(), ApiError> {
        if matches!(self.state(), AgentState::Created | AgentState::Killed) {
            return Err(ApiError::AgentNotRunning);
        }
        let order = self.ats.market.order(order_id).ok_or(ApiError::NotFound)?;
        if order.agent_id != self.agent_id {
            return Err(ApiError::NotOwner);
        }
        if order.status.is_closed() {
            return Err(ApiError::AlreadyClosed);
        }
        let symbol = order.symbol.clone();
        self.ats.begin_action();
        let top_before = self.ats.market.top_of_book(&symbol).expect("listed");
        self.ats
            .cancel_open_order(order_id, CancelReason::AgentRequest, true);
        self.ats.publish_action_events(&symbol, &top_before, &[]);
        self.ats.finish_action();
        Ok(())
    }

    pub fn get_quote(&self, symbol: &Symbol) -> Result<Quote, ApiError> {
        self.read_allowed()?;
        self.ats.top_of_book(symbol)
    }

    pub fn get_portfolio(&self) -> Result<BTreeMap<Symbol, i64>, ApiError> {
        self.read_allowed()?;
        Ok(self.ats.accounts[&self.agent_id].positions.clone())
    }

    pub fn get_cash(&self) -> Result<Cash, ApiError> {
        self.read_allowed()?;
        Ok(self.ats.accounts[&self.agent_id].cash)
    }

    fn read_allowed(&self) -> Result<(), ApiError> {
        if self.state() == AgentState::Created {
            return Err(ApiError::AgentNotRunning);
        }
        Ok(())
    }

    /// Subscribe to market events for a symbol set at a latency class.
    /// Re-subscribing a symbol replaces its class.
    pub fn subscribe(
        &mut self,
        symbols: &[Symbol],
        class: &ClassId,
    ) -> Result<SubscriptionId, ApiError> {
        if !matches!(self.state(), AgentState::Initialized | AgentState::Running) {
            return Err(ApiError::AgentNotRunning);
        }
        for s in symbols {
            if self.ats.market.instrument(s).is_none() {
                return Err(ApiError::UnknownInstrument(s.clone()));
            }
        }
        if self.ats.dissemination.class(class).is_none() {
            return Err(ApiError::UnknownLatencyClass(class.clone()));
        }
        let set: BTreeSet<Symbol> = symbols.iter().cloned().collect();
        let id = self
            .ats
            .dissemination
            .subscribe(self.agent_id.clone(), set, class.clone())
            .expect("class checked");
        Ok(id)
    }

    pub fn unsubscribe(&mut self, subscription: SubscriptionId) -> Result<(), ApiError> {
        let owned = self
            .ats
            .dissemination
            .subscription(subscription)
            .is_some_and(|s| s.agent_id == self.agent_id);
        if !owned {
            return Err(ApiError::NotFound);
        }
        self.ats
            .dissemination
            .unsubscribe(subscription)
            .expect("checked present");
        Ok(())
    }

    /// Append a free-text note to this agent's own action log.
    pub fn log_note(&mut self, text: &str) -> Result<u64, ApiError> {
        if matches!(self.state(), AgentState::Created | AgentState::Killed) {
            return Err(ApiError::AgentNotRunning);
        }
        self.ats.begin_action();
        self.ats.append_log(
            Some(self.agent_id.clone()),
            LogPayload::AgentNote {
                text: String::from(text),
            },
        );
        let seq = self.ats.log.last_seq();
        self.ats.finish_action();
        Ok(seq)
    }

    /// Read back this agent's own entries; other agents' activity is
    /// never visible here.
    pub fn read_own_log(&self, range: SeqRange) -> Result<Vec<LogEntry>, ApiError> {
        self.read_allowed()?;
        self.ats
            .log
            .read_own(&self.agent_id, range)
            .map_err(|_| ApiError::RangeInvalid)
    }
}
