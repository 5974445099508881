//! Agent accounts, brokerage fee arithmetic and cash/share reservations.
//!
//! Reservation rule: a BUY order reserves its worst-case cost (full
//! quantity at the limit price plus a provable upper bound on fees), a
//! SELL order reserves the shares plus the fee bound in cash. Settlement
//! can then never take an account negative, which keeps the cash-safety
//! invariant without any rollback machinery.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;

use crate::types::{AgentId, BrokerId, Cash, Price, Qty, Side, Symbol};

/// Broker fee schedule: a fixed amount per trade plus basis points of the
/// traded notional.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FeeSchedule {
    pub per_trade_fixed: Cash,
    pub per_notional_bps: u64,
}

impl FeeSchedule {
    pub const ZERO: FeeSchedule = FeeSchedule {
        per_trade_fixed: 0,
        per_notional_bps: 0,
    };

    pub fn is_zero(&self) -> bool {
        self.per_trade_fixed == 0 && self.per_notional_bps == 0
    }

    /// Fee for one trade of the given notional:
    /// `fixed + round_half_up(bps * notional / 10000)`.
    pub fn trade_fee(&self, notional: Cash) -> Cash {
        debug_assert!(notional >= 0);
        let bps_part = (self.per_notional_bps as i128 * notional as i128 + 5_000) / 10_000;
        self.per_trade_fixed + bps_part as Cash
    }

    /// Upper bound on total fees an order with `remaining` shares left can
    /// still incur, assuming worst case: every fill at the limit price and
    /// one trade per lot. Guaranteed to shrink by at least the actual fee
    /// of any single fill, so releasing `bound(before) - bound(after)` at
    /// settlement never under-releases.
    pub fn fee_bound(&self, limit_price: Price, tick_size: u64, lot_size: u64, remaining: Qty) -> Cash {
        if self.is_zero() {
            return 0;
        }
        let lots = (remaining / lot_size) as i128;
        if self.per_notional_bps == 0 {
            // fixed-only schedules have no rounding slop to cover
            return (self.per_trade_fixed as i128 * lots) as Cash;
        }
        let max_notional = limit_price as i128 * tick_size as i128 * remaining as i128;
        let fixed_part = (self.per_trade_fixed as i128 + 2) * lots;
        let bps_part = (self.per_notional_bps as i128 * max_notional + 9_999) / 10_000;
        (fixed_part + bps_part) as Cash
    }
}

/// Cash-side reservation held for an open order: limit notional for buys,
/// fee bound for both sides.
pub fn cash_reservation(
    side: Side,
    schedule: &FeeSchedule,
    limit_price: Price,
    tick_size: u64,
    lot_size: u64,
    remaining: Qty,
) -> Cash {
    let fees = schedule.fee_bound(limit_price, tick_size, lot_size, remaining);
    match side {
        Side::Buy => limit_price as Cash * tick_size as Cash * remaining as Cash + fees,
        Side::Sell => fees,
    }
}

/// Trade notional in minor currency units.
pub fn notional(price: Price, tick_size: u64, quantity: Qty) -> Cash {
    price as Cash * tick_size as Cash * quantity as Cash
}

/// Cash, positions and reservations of one agent (or the exchange
/// pseudo-account).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Account {
    pub cash: Cash,
    /// Signed share count per symbol. Only the exchange pseudo-account may
    /// go negative.
    pub positions: BTreeMap<Symbol, i64>,
    pub reserved_cash: Cash,
    pub reserved_shares: BTreeMap<Symbol, Qty>,
}

impl Account {
    pub fn with_cash(cash: Cash) -> Self {
        Account {
            cash,
            ..Account::default()
        }
    }

    pub fn free_cash(&self) -> Cash {
        self.cash - self.reserved_cash
    }

    pub fn position(&self, symbol: &Symbol) -> i64 {
        self.positions.get(symbol).copied().unwrap_or(0)
    }

    pub fn reserved_shares_of(&self, symbol: &Symbol) -> Qty {
        self.reserved_shares.get(symbol).copied().unwrap_or(0)
    }

    /// Shares available to commit to new SELL orders.
    pub fn free_shares(&self, symbol: &Symbol) -> i64 {
        self.position(symbol) - self.reserved_shares_of(symbol) as i64
    }

    pub fn add_position(&mut self, symbol: &Symbol, delta: i64) {
        let entry = self.positions.entry(symbol.clone()).or_insert(0);
        *entry += delta;
        if *entry == 0 {
            self.positions.remove(symbol);
        }
    }

    pub fn reserve_shares(&mut self, symbol: &Symbol, qty: Qty) {
        *self.reserved_shares.entry(symbol.clone()).or_insert(0) += qty;
    }

    pub fn release_shares(&mut self, symbol: &Symbol, qty: Qty) {
        let entry = self
            .reserved_shares
            .get_mut(symbol)
            .expect("releasing shares that were reserved");
        debug_assert!(*entry >= qty);
        *entry -= qty;
        if *entry == 0 {
            self.reserved_shares.remove(symbol);
        }
    }
}

/// Broker role record: fee schedule, member agents and accrued fees.
#[derive(Clone, Debug)]
pub struct BrokerRecord {
    pub broker_id: BrokerId,
    pub fee_schedule: FeeSchedule,
    pub agent_ids: BTreeSet<AgentId>,
    pub accrued_fees: Cash,
}

impl BrokerRecord {
    pub fn new(broker_id: BrokerId, fee_schedule: FeeSchedule) -> Self {
        BrokerRecord {
            broker_id,
            fee_schedule,
            agent_ids: BTreeSet::new(),
            accrued_fees: 0,
        }
    }
}
