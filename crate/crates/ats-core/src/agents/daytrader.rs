//! Momentum daytrader: watches the last print over a sliding window and
//! joins the touch when the move exceeds the threshold.
//!
//! Never more than one open order; an order that has not resolved after
//! `stale_after` further quote events is cancelled, so a full run
//! exercises the cancel path as well as fills.

use alloc::collections::VecDeque;

use crate::agent::{AgentCallbacks, CancelReason, Fill, MarketEvent};
use crate::runtime::AgentContext;
use crate::types::{ClassId, OrderId, Price, Qty, Side, Symbol};

#[derive(Clone, Debug)]
pub struct DaytraderConfig {
    pub symbol: Symbol,
    /// Number of observed last prices the momentum is measured over.
    pub window: usize,
    /// Minimum move in ticks across the window that triggers an order.
    pub rise_threshold: Price,
    pub order_size: Qty,
    /// Instrument tick size in minor units, used for the cash guard.
    pub tick_size: u64,
    pub latency_class: ClassId,
    /// Cancel an unresolved order after this many further quote events.
    pub stale_after: usize,
}

pub struct Daytrader {
    config: DaytraderConfig,
    prices: VecDeque<Price>,
    open_order: Option<OrderId>,
    quotes_since_order: usize,
}

impl Daytrader {
    pub fn new(config: DaytraderConfig) -> Result<Daytrader, &'static str> {
        if config.window < 2 {
            return Err("window must be >= 2");
        }
        if config.order_size == 0 {
            return Err("order size must be positive");
        }
        Ok(Daytrader {
            config,
            prices: VecDeque::new(),
            open_order: None,
            quotes_since_order: 0,
        })
    }
}

impl AgentCallbacks for Daytrader {
    fn on_start(&mut self, ctx: &mut AgentContext<'_>) {
        let symbols = [self.config.symbol.clone()];
        ctx.subscribe(&symbols, &self.config.latency_class.clone())
            .expect("configured symbol and class");
    }

    fn on_quote(&mut self, ctx: &mut AgentContext<'_>, event: &MarketEvent) {
        if event.symbol != self.config.symbol {
            return;
        }
        if let Some(order_id) = self.open_order {
            self.quotes_since_order += 1;
            if self.quotes_since_order >= self.config.stale_after {
                // unresolved for too long; pull it and start fresh
                let _ = ctx.cancel_order(order_id);
            }
            return;
        }

        let Some(last) = event.quote.last else {
            return;
        };
        self.prices.push_back(last);
        while self.prices.len() > self.config.window {
            self.prices.pop_front();
        }
        if self.prices.len() < self.config.window {
            return;
        }
        let oldest = *self.prices.front().expect("non-empty window");
        let newest = *self.prices.back().expect("non-empty window");

        let action = if newest >= oldest + self.config.rise_threshold {
            event.quote.bid.map(|(px, _)| (Side::Buy, px))
        } else if oldest >= newest + self.config.rise_threshold {
            event.quote.ask.map(|(px, _)| (Side::Sell, px))
        } else {
            None
        };
        let Some((side, px)) = action else {
            return;
        };

        // budget and position guards keep every scripted run free of
        // funds rejections
        let qty = self.config.order_size;
        match side {
            Side::Buy => {
                let cost = px as i64 * self.config.tick_size as i64 * qty as i64;
                // double the notional leaves room for any fee schedule
                if ctx.get_cash().unwrap_or(0) < cost * 2 {
                    return;
                }
            }
            Side::Sell => {
                let held = ctx
                    .get_portfolio()
                    .ok()
                    .and_then(|p| p.get(&self.config.symbol).copied())
                    .unwrap_or(0);
                if held < qty as i64 {
                    return;
                }
            }
        }
        if let Ok(order_id) = ctx.create_order(&self.config.symbol.clone(), side, px, qty) {
            self.open_order = Some(order_id);
            self.quotes_since_order = 0;
            self.prices.clear();
        }
    }

    fn on_order_closed(&mut self, _ctx: &mut AgentContext<'_>, order_id: OrderId, _fills: &[Fill]) {
        if self.open_order == Some(order_id) {
            self.open_order = None;
            self.quotes_since_order = 0;
        }
    }

    fn on_order_cancelled(
        &mut self,
        _ctx: &mut AgentContext<'_>,
        order_id: OrderId,
        _reason: CancelReason,
    ) {
        if self.open_order == Some(order_id) {
            self.open_order = None;
            self.quotes_since_order = 0;
        }
    }
}
