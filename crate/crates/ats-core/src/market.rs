//! Per-symbol limit order books with deterministic price-time priority
//! matching.
//!
//! Matching rules, fixed once and for all so that any replay of the same
//! submit/cancel sequence produces the same trade tape:
//!
//! * resting orders are ranked by (better price, lower arrival seq);
//! * an incoming order trades while its limit crosses the best contra
//!   level, each fill executing at the *resting* order's price for the
//!   minimum of the two remainders;
//! * whatever is left rests in the book.
//!
//! The book is uncrossed after every completed operation. Order ids are
//! assigned by the caller (the server sequencer); arrival seq numbers are
//! stamped here at acceptance.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::num::NonZeroUsize;

use crate::types::{AgentId, OrderId, Price, Qty, Side, Symbol};

/// Tradable instrument definition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instrument {
    pub symbol: Symbol,
    /// Minor currency units per price tick. One share at price `p` ticks
    /// is worth `p * tick_size` minor units.
    pub tick_size: u64,
    /// Shares per round lot; all order quantities are multiples of this.
    pub lot_size: u64,
}

/// Order terminal/progress status.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OrderStatus {
    New,
    Partial,
    Filled,
    Cancelled,
}

impl OrderStatus {
    pub fn is_closed(self) -> bool {
        matches!(self, OrderStatus::Filled | OrderStatus::Cancelled)
    }
}

/// Parameters of an incoming order. `order_id` comes from the server
/// sequencer and must be fresh; the arrival seq is stamped at acceptance.
#[derive(Clone, Debug)]
pub struct OrderSpec {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub symbol: Symbol,
    pub side: Side,
    pub limit_price: Price,
    pub quantity: Qty,
}

/// Full record of an order known to the market, resting or closed.
#[derive(Clone, Debug)]
pub struct OrderState {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub symbol: Symbol,
    pub side: Side,
    pub limit_price: Price,
    pub quantity: Qty,
    pub remaining: Qty,
    /// Global arrival sequence number, strictly increasing in acceptance order.
    pub seq: u64,
    pub status: OrderStatus,
}

impl OrderState {
    /// Shares filled so far. `remaining` keeps counting the unfilled part
    /// after a cancel, so filled + live_remaining + cancelled_qty always
    /// equals the original quantity.
    pub fn filled(&self) -> Qty {
        self.quantity - self.remaining
    }

    /// Shares still live in the book (zero once the order is closed).
    pub fn live_remaining(&self) -> Qty {
        if self.status.is_closed() {
            0
        } else {
            self.remaining
        }
    }

    /// Shares struck from the book by a cancel.
    pub fn cancelled_qty(&self) -> Qty {
        match self.status {
            OrderStatus::Cancelled => self.remaining,
            _ => 0,
        }
    }
}

/// An executed fill linking two orders.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trade {
    pub trade_id: u64,
    pub symbol: Symbol,
    /// Execution price: always the resting order's limit.
    pub price: Price,
    pub quantity: Qty,
    pub buy_order_id: OrderId,
    pub sell_order_id: OrderId,
    pub aggressor_side: Side,
    /// Global trade sequence number; consecutive across all symbols.
    pub seq: u64,
}

impl Trade {
    /// Canonical trade-tape line:
    /// `TRADE <seq> <symbol> <price_ticks> <qty> <buy_order_id> <sell_order_id> <aggressor>`
    pub fn tape_line(&self) -> String {
        format!(
            "TRADE {} {} {} {} {} {} {}",
            self.seq,
            self.symbol,
            self.price,
            self.quantity,
            self.buy_order_id,
            self.sell_order_id,
            self.aggressor_side
        )
    }
}

/// Render a trade list in the canonical newline-delimited tape format.
pub fn trade_tape(trades: &[Trade]) -> String {
    let mut out = String::new();
    for t in trades {
        out.push_str(&t.tape_line());
        out.push('\n');
    }
    out
}

/// Where an accepted order ended up.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Disposition {
    /// Some quantity rests in the book (possibly after partial fills).
    Resting,
    /// Fully executed on entry.
    Filled,
}

/// Result of a submit: the fills it produced, in execution order.
#[derive(Clone, Debug)]
pub struct MatchResult {
    pub order_id: OrderId,
    pub trades: Vec<Trade>,
    pub disposition: Disposition,
}

/// Result of a cancel: how many shares were struck from the book.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CancelAck {
    pub order_id: OrderId,
    pub cancelled_qty: Qty,
}

/// Best bid/ask and last trade price for one symbol.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Quote {
    pub bid: Option<(Price, Qty)>,
    pub ask: Option<(Price, Qty)>,
    pub last: Option<Price>,
}

/// Aggregated depth: per-price total resting size, best first.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Depth {
    pub bids: Vec<(Price, Qty)>,
    pub asks: Vec<(Price, Qty)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MarketError {
    UnknownInstrument(Symbol),
    DuplicateInstrument(Symbol),
    InvalidInstrument(&'static str),
    DuplicateOrderId(OrderId),
    InvalidQuantity(Qty),
    InvalidPrice(Price),
    NotFound(OrderId),
    AlreadyClosed(OrderId),
    NotOwner(OrderId),
}

impl fmt::Display for MarketError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketError::UnknownInstrument(s) => write!(f, "unknown instrument {s}"),
            MarketError::DuplicateInstrument(s) => write!(f, "instrument {s} already listed"),
            MarketError::InvalidInstrument(why) => write!(f, "invalid instrument: {why}"),
            MarketError::DuplicateOrderId(id) => write!(f, "order id {id} already used"),
            MarketError::InvalidQuantity(q) => write!(f, "invalid quantity {q}"),
            MarketError::InvalidPrice(p) => write!(f, "invalid price {p}"),
            MarketError::NotFound(id) => write!(f, "order {id} not found"),
            MarketError::AlreadyClosed(id) => write!(f, "order {id} already closed"),
            MarketError::NotOwner(id) => write!(f, "order {id} belongs to another agent"),
        }
    }
}

impl core::error::Error for MarketError {}

/// One side of a book: price level -> FIFO of order ids. Bids iterate
/// descending, asks ascending; both use the same map with side-aware
/// traversal.
#[derive(Default, Debug)]
struct BookSide {
    levels: BTreeMap<Price, VecDeque<OrderId>>,
}

impl BookSide {
    fn best(&self, side: Side) -> Option<Price> {
        match side {
            Side::Buy => self.levels.keys().next_back().copied(),
            Side::Sell => self.levels.keys().next().copied(),
        }
    }

    fn push(&mut self, price: Price, id: OrderId) {
        self.levels.entry(price).or_default().push_back(id);
    }

    fn remove(&mut self, price: Price, id: OrderId) {
        if let Some(q) = self.levels.get_mut(&price) {
            q.retain(|x| *x != id);
            if q.is_empty() {
                self.levels.remove(&price);
            }
        }
    }

    /// Front order id of the best level.
    fn front(&self, side: Side) -> Option<OrderId> {
        let price = self.best(side)?;
        self.levels.get(&price).and_then(|q| q.front().copied())
    }

    fn pop_front(&mut self, side: Side) {
        if let Some(price) = self.best(side) {
            if let Some(q) = self.levels.get_mut(&price) {
                q.pop_front();
                if q.is_empty() {
                    self.levels.remove(&price);
                }
            }
        }
    }
}

#[derive(Default, Debug)]
struct Book {
    bids: BookSide,
    asks: BookSide,
    last_trade: Option<Price>,
}

impl Book {
    fn side(&self, side: Side) -> &BookSide {
        match side {
            Side::Buy => &self.bids,
            Side::Sell => &self.asks,
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut BookSide {
        match side {
            Side::Buy => &mut self.bids,
            Side::Sell => &mut self.asks,
        }
    }
}

/// The matching substrate: every listed instrument's book plus the full
/// order history of the session.
#[derive(Default, Debug)]
pub struct Market {
    instruments: BTreeMap<Symbol, Instrument>,
    books: BTreeMap<Symbol, Book>,
    orders: BTreeMap<OrderId, OrderState>,
    next_arrival_seq: u64,
    next_trade_seq: u64,
}

impl Market {
    pub fn new() -> Self {
        Market::default()
    }

    pub fn add_instrument(&mut self, inst: Instrument) -> Result<(), MarketError> {
        if inst.symbol.as_str().is_empty() {
            return Err(MarketError::InvalidInstrument("empty symbol"));
        }
        if inst.tick_size < 1 {
            return Err(MarketError::InvalidInstrument("tick_size must be >= 1"));
        }
        if inst.lot_size < 1 {
            return Err(MarketError::InvalidInstrument("lot_size must be >= 1"));
        }
        if self.instruments.contains_key(&inst.symbol) {
            return Err(MarketError::DuplicateInstrument(inst.symbol));
        }
        self.books.insert(inst.symbol.clone(), Book::default());
        self.instruments.insert(inst.symbol.clone(), inst);
        Ok(())
    }

    pub fn instrument(&self, symbol: &Symbol) -> Option<&Instrument> {
        self.instruments.get(symbol)
    }

    pub fn instruments(&self) -> impl Iterator<Item = &Instrument> {
        self.instruments.values()
    }

    pub fn order(&self, id: OrderId) -> Option<&OrderState> {
        self.orders.get(&id)
    }

    /// Ids of all open (NEW or PARTIAL) orders owned by `agent`, in
    /// ascending order id.
    pub fn open_orders_of(&self, agent: &AgentId) -> Vec<OrderId> {
        self.orders
            .values()
            .filter(|r| !r.status.is_closed() && r.agent_id == *agent)
            .map(|r| r.order_id)
            .collect()
    }

    /// Resting order ids for one side of a book, in priority order
    /// (best price first, then arrival).
    pub fn resting_orders(&self, symbol: &Symbol, side: Side) -> Vec<OrderId> {
        let Some(book) = self.books.get(symbol) else {
            return Vec::new();
        };
        let bs = book.side(side);
        let mut out = Vec::new();
        match side {
            Side::Buy => {
                for (_, q) in bs.levels.iter().rev() {
                    out.extend(q.iter().copied());
                }
            }
            Side::Sell => {
                for q in bs.levels.values() {
                    out.extend(q.iter().copied());
                }
            }
        }
        out
    }

    /// Check a spec against listing, id freshness, lot grid and price
    /// floor without touching the book.
    pub fn validate_order(&self, spec: &OrderSpec) -> Result<(), MarketError> {
        self.validate(spec).map(|_| ())
    }

    /// Stamp the public last-trade price (feed replay refreshes this from
    /// the delayed real-market print).
    pub fn set_last_trade(&mut self, symbol: &Symbol, price: Price) {
        if let Some(book) = self.books.get_mut(symbol) {
            book.last_trade = Some(price);
        }
    }

    fn validate(&self, spec: &OrderSpec) -> Result<&Instrument, MarketError> {
        let inst = self
            .instruments
            .get(&spec.symbol)
            .ok_or_else(|| MarketError::UnknownInstrument(spec.symbol.clone()))?;
        if self.orders.contains_key(&spec.order_id) {
            return Err(MarketError::DuplicateOrderId(spec.order_id));
        }
        if spec.quantity == 0 || !spec.quantity.is_multiple_of(inst.lot_size) {
            return Err(MarketError::InvalidQuantity(spec.quantity));
        }
        if spec.limit_price < 1 {
            return Err(MarketError::InvalidPrice(spec.limit_price));
        }
        Ok(inst)
    }

    /// Sequence an order into the book. Rejections leave the book and all
    /// counters untouched.
    pub fn submit(&mut self, spec: OrderSpec) -> Result<MatchResult, MarketError> {
        self.validate(&spec)?;

        self.next_arrival_seq += 1;
        let mut incoming = OrderState {
            order_id: spec.order_id,
            agent_id: spec.agent_id,
            symbol: spec.symbol.clone(),
            side: spec.side,
            limit_price: spec.limit_price,
            quantity: spec.quantity,
            remaining: spec.quantity,
            seq: self.next_arrival_seq,
            status: OrderStatus::New,
        };

        let mut trades = Vec::new();
        let book = self.books.get_mut(&spec.symbol).expect("validated symbol");
        let contra = spec.side.opposite();

        while incoming.remaining > 0 {
            let Some(best) = book.side(contra).best(contra) else {
                break;
            };
            let crosses = match spec.side {
                Side::Buy => best <= spec.limit_price,
                Side::Sell => best >= spec.limit_price,
            };
            if !crosses {
                break;
            }
            let resting_id = book.side(contra).front(contra).expect("non-empty level");
            let resting = self
                .orders
                .get_mut(&resting_id)
                .expect("book references live order");

            let fill = core::cmp::min(incoming.remaining, resting.remaining);
            incoming.remaining -= fill;
            resting.remaining -= fill;
            resting.status = if resting.remaining == 0 {
                OrderStatus::Filled
            } else {
                OrderStatus::Partial
            };

            self.next_trade_seq += 1;
            let (buy_id, sell_id) = match spec.side {
                Side::Buy => (incoming.order_id, resting_id),
                Side::Sell => (resting_id, incoming.order_id),
            };
            trades.push(Trade {
                trade_id: self.next_trade_seq,
                symbol: spec.symbol.clone(),
                price: best,
                quantity: fill,
                buy_order_id: buy_id,
                sell_order_id: sell_id,
                aggressor_side: spec.side,
                seq: self.next_trade_seq,
            });
            book.last_trade = Some(best);

            if self.orders[&resting_id].remaining == 0 {
                book.side_mut(contra).pop_front(contra);
            }
        }

        let disposition = if incoming.remaining == 0 {
            incoming.status = OrderStatus::Filled;
            Disposition::Filled
        } else {
            if incoming.remaining < incoming.quantity {
                incoming.status = OrderStatus::Partial;
            }
            book.side_mut(spec.side).push(spec.limit_price, spec.order_id);
            Disposition::Resting
        };

        let order_id = incoming.order_id;
        self.orders.insert(order_id, incoming);
        Ok(MatchResult {
            order_id,
            trades,
            disposition,
        })
    }

    /// Cancel the unfilled remainder of an order owned by `requester`.
    pub fn cancel(&mut self, order_id: OrderId, requester: &AgentId) -> Result<CancelAck, MarketError> {
        let rec = self.orders.get(&order_id).ok_or(MarketError::NotFound(order_id))?;
        if rec.agent_id != *requester {
            return Err(MarketError::NotOwner(order_id));
        }
        self.strike(order_id)
    }

    /// Cancel without an ownership check. Used by the administrator path,
    /// agent kills and exchange book reseeding.
    pub fn force_cancel(&mut self, order_id: OrderId) -> Result<CancelAck, MarketError> {
        if !self.orders.contains_key(&order_id) {
            return Err(MarketError::NotFound(order_id));
        }
        self.strike(order_id)
    }

    fn strike(&mut self, order_id: OrderId) -> Result<CancelAck, MarketError> {
        let rec = self.orders.get_mut(&order_id).expect("checked present");
        if rec.status.is_closed() {
            return Err(MarketError::AlreadyClosed(order_id));
        }
        let cancelled = rec.remaining;
        rec.status = OrderStatus::Cancelled;
        let (symbol, side, price) = (rec.symbol.clone(), rec.side, rec.limit_price);
        let book = self.books.get_mut(&symbol).expect("order symbol listed");
        book.side_mut(side).remove(price, order_id);
        Ok(CancelAck {
            order_id,
            cancelled_qty: cancelled,
        })
    }

    pub fn top_of_book(&self, symbol: &Symbol) -> Result<Quote, MarketError> {
        let book = self
            .books
            .get(symbol)
            .ok_or_else(|| MarketError::UnknownInstrument(symbol.clone()))?;
        let level = |bs: &BookSide, side: Side| -> Option<(Price, Qty)> {
            let price = bs.best(side)?;
            let size = bs.levels[&price]
                .iter()
                .map(|id| self.orders[id].remaining)
                .sum();
            Some((price, size))
        };
        Ok(Quote {
            bid: level(&book.bids, Side::Buy),
            ask: level(&book.asks, Side::Sell),
            last: book.last_trade,
        })
    }

    /// Aggregated per-price depth, at most `levels` prices per side,
    /// ordered best-to-worse.
    pub fn depth_snapshot(&self, symbol: &Symbol, levels: NonZeroUsize) -> Result<Depth, MarketError> {
        let book = self
            .books
            .get(symbol)
            .ok_or_else(|| MarketError::UnknownInstrument(symbol.clone()))?;
        let take = levels.get();
        let sum = |q: &VecDeque<OrderId>| -> Qty {
            q.iter().map(|id| self.orders[id].remaining).sum()
        };
        Ok(Depth {
            bids: book
                .bids
                .levels
                .iter()
                .rev()
                .take(take)
                .map(|(p, q)| (*p, sum(q)))
                .collect(),
            asks: book
                .asks
                .levels
                .iter()
                .take(take)
                .map(|(p, q)| (*p, sum(q)))
                .collect(),
        })
    }

    /// True when best bid < best ask (or either side empty) for every book.
    pub fn is_uncrossed(&self) -> bool {
        self.books.values().all(|b| {
            match (b.bids.best(Side::Buy), b.asks.best(Side::Sell)) {
                (Some(bid), Some(ask)) => bid < ask,
                _ => true,
            }
        })
    }
}
