//! Rebuild account state purely from an exported activity log.
//!
//! This is the completeness check for the audit trail: starting from the
//! configured balances and replaying only logged entries, the reducer
//! must land on exactly the live runtime's accounts, broker fee totals
//! and operator feed credits — integer-exact, or the log is missing
//! something.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;

use crate::account::{cash_reservation, Account, FeeSchedule};
use crate::agent::AgentState;
use crate::audit::{LogEntry, LogPayload};
use crate::market::Instrument;
use crate::types::{AgentId, BrokerId, Cash, OrderId, Price, Qty, Side, Symbol};

/// Static context the log alone cannot carry: the instrument grid,
/// starting balances and each agent's broker fee schedule.
pub struct ReducerInputs {
    pub universe: BTreeMap<Symbol, Instrument>,
    pub starting: BTreeMap<AgentId, (Cash, BTreeMap<Symbol, i64>)>,
    pub schedules: BTreeMap<AgentId, FeeSchedule>,
}

/// Accounts and fee totals reconstructed from the log.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct ReducedState {
    pub accounts: BTreeMap<AgentId, Account>,
    pub broker_fees: BTreeMap<BrokerId, Cash>,
    pub operator_feed_credits: Cash,
}

struct OrderTrack {
    agent: AgentId,
    symbol: Symbol,
    side: Side,
    limit: Price,
    remaining: Qty,
    open: bool,
}

/// Replay exported entries into account state.
pub fn reduce(entries: &[LogEntry], inputs: &ReducerInputs) -> Result<ReducedState, String> {
    let mut state = ReducedState::default();
    state.accounts.insert(
        AgentId::exchange(),
        starting_account(inputs, &AgentId::exchange()),
    );
    let mut orders: BTreeMap<OrderId, OrderTrack> = BTreeMap::new();

    for entry in entries {
        let agent = entry.agent_id.clone();
        match &entry.payload {
            LogPayload::AgentLifecycle { state: st } => {
                let a = agent.ok_or("lifecycle entry without agent")?;
                if *st == AgentState::Created {
                    state.accounts.insert(a.clone(), starting_account(inputs, &a));
                }
            }
            LogPayload::OrderPlaced {
                order_id,
                symbol,
                side,
                price,
                quantity,
            } => {
                let a = agent.ok_or("order entry without agent")?;
                let inst = instrument(inputs, symbol)?;
                if !a.is_exchange() {
                    let schedule = schedule_of(inputs, &a);
                    let account = account_mut(&mut state, &a)?;
                    account.reserved_cash += cash_reservation(
                        *side,
                        &schedule,
                        *price,
                        inst.tick_size,
                        inst.lot_size,
                        *quantity,
                    );
                    if *side == Side::Sell {
                        account.reserve_shares(symbol, *quantity);
                    }
                }
                orders.insert(
                    *order_id,
                    OrderTrack {
                        agent: a,
                        symbol: symbol.clone(),
                        side: *side,
                        limit: *price,
                        remaining: *quantity,
                        open: true,
                    },
                );
            }
            LogPayload::Trade {
                side,
                price,
                quantity,
                buy_order_id,
                sell_order_id,
                ..
            } => {
                let a = agent.ok_or("trade entry without agent")?;
                let oid = match side {
                    Side::Buy => *buy_order_id,
                    Side::Sell => *sell_order_id,
                };
                let track = orders
                    .get_mut(&oid)
                    .ok_or_else(|| format!("trade references unplaced order {oid}"))?;
                if track.agent != a {
                    return Err(format!("trade side owner mismatch for order {oid}"));
                }
                let inst = instrument(inputs, &track.symbol)?;
                let value = *price as Cash * inst.tick_size as Cash * *quantity as Cash;
                let rem_before = track.remaining;
                let rem_after = rem_before
                    .checked_sub(*quantity)
                    .ok_or_else(|| format!("overfill on order {oid}"))?;
                track.remaining = rem_after;
                if rem_after == 0 {
                    track.open = false;
                }
                let (symbol, limit, tside) = (track.symbol.clone(), track.limit, track.side);

                let release = if a.is_exchange() {
                    0
                } else {
                    let schedule = schedule_of(inputs, &a);
                    cash_reservation(
                        tside,
                        &schedule,
                        limit,
                        inst.tick_size,
                        inst.lot_size,
                        rem_before,
                    ) - cash_reservation(
                        tside,
                        &schedule,
                        limit,
                        inst.tick_size,
                        inst.lot_size,
                        rem_after,
                    )
                };
                let account = account_mut(&mut state, &a)?;
                account.reserved_cash -= release;
                match side {
                    Side::Buy => {
                        account.cash -= value;
                        account.add_position(&symbol, *quantity as i64);
                    }
                    Side::Sell => {
                        account.cash += value;
                        account.add_position(&symbol, -(*quantity as i64));
                        if !a.is_exchange() {
                            account.release_shares(&symbol, *quantity);
                        }
                    }
                }
            }
            LogPayload::Fee { amount, broker } => {
                let a = agent.ok_or("fee entry without agent")?;
                account_mut(&mut state, &a)?.cash -= amount;
                *state.broker_fees.entry(broker.clone()).or_insert(0) += amount;
            }
            LogPayload::QuoteDelivered { fee, .. } => {
                let a = agent.ok_or("delivery entry without agent")?;
                account_mut(&mut state, &a)?.cash -= fee;
                state.operator_feed_credits += fee;
            }
            LogPayload::OrderCancelled {
                order_id,
                cancelled_qty,
                ..
            } => {
                let track = orders
                    .get_mut(order_id)
                    .ok_or_else(|| format!("cancel references unplaced order {order_id}"))?;
                if !track.open {
                    return Err(format!("cancel of closed order {order_id}"));
                }
                if track.remaining != *cancelled_qty {
                    return Err(format!(
                        "cancel quantity mismatch on {order_id}: log {cancelled_qty}, replay {}",
                        track.remaining
                    ));
                }
                track.open = false;
                let a = track.agent.clone();
                if !a.is_exchange() {
                    let inst = instrument(inputs, &track.symbol)?;
                    let schedule = schedule_of(inputs, &a);
                    let release = cash_reservation(
                        track.side,
                        &schedule,
                        track.limit,
                        inst.tick_size,
                        inst.lot_size,
                        *cancelled_qty,
                    );
                    let (symbol, side) = (track.symbol.clone(), track.side);
                    let account = account_mut(&mut state, &a)?;
                    account.reserved_cash -= release;
                    if side == Side::Sell {
                        account.release_shares(&symbol, *cancelled_qty);
                    }
                }
            }
            LogPayload::OrderClosed { order_id, .. } => {
                if let Some(track) = orders.get_mut(order_id) {
                    if track.remaining != 0 {
                        return Err(format!(
                            "close of order {order_id} with replayed remaining {}",
                            track.remaining
                        ));
                    }
                    track.open = false;
                }
            }
            LogPayload::OrderPartial { .. }
            | LogPayload::AgentNote { .. }
            | LogPayload::AdminAction { .. } => {}
        }
    }
    Ok(state)
}

fn starting_account(inputs: &ReducerInputs, agent: &AgentId) -> Account {
    let Some((cash, positions)) = inputs.starting.get(agent) else {
        return Account::default();
    };
    let mut account = Account::with_cash(*cash);
    for (sym, pos) in positions {
        account.add_position(sym, *pos);
    }
    account
}

fn schedule_of(inputs: &ReducerInputs, agent: &AgentId) -> FeeSchedule {
    inputs
        .schedules
        .get(agent)
        .copied()
        .unwrap_or(FeeSchedule::ZERO)
}

fn instrument<'a>(inputs: &'a ReducerInputs, symbol: &Symbol) -> Result<&'a Instrument, String> {
    inputs
        .universe
        .get(symbol)
        .ok_or_else(|| format!("log references unknown instrument {symbol}"))
}

fn account_mut<'a>(state: &'a mut ReducedState, agent: &AgentId) -> Result<&'a mut Account, String> {
    state
        .accounts
        .get_mut(agent)
        .ok_or_else(|| format!("entry for agent {agent} before its lifecycle record"))
}
