//! Stop-loss guard: sells a protected position at the best bid the first
//! time the bid drops below the stop price, and never acts again.

use crate::agent::{AgentCallbacks, MarketEvent};
use crate::runtime::AgentContext;
use crate::types::{ClassId, Price, Qty, Side, Symbol};

#[derive(Clone, Debug)]
pub struct StopLossConfig {
    pub symbol: Symbol,
    /// Trigger: best bid strictly below this many ticks.
    pub stop_price: Price,
    pub position_to_protect: Qty,
    /// Instrument lot size; sale quantity is clamped to this grid.
    pub lot_size: u64,
    pub latency_class: ClassId,
}

pub struct StopLoss {
    config: StopLossConfig,
    triggered: bool,
}

impl StopLoss {
    pub fn new(config: StopLossConfig) -> Result<StopLoss, &'static str> {
        if config.stop_price < 1 {
            return Err("stop price must be >= 1 tick");
        }
        Ok(StopLoss {
            config,
            triggered: false,
        })
    }
}

impl AgentCallbacks for StopLoss {
    fn on_start(&mut self, ctx: &mut AgentContext<'_>) {
        let symbols = [self.config.symbol.clone()];
        ctx.subscribe(&symbols, &self.config.latency_class.clone())
            .expect("configured symbol and class");
    }

    fn on_quote(&mut self, ctx: &mut AgentContext<'_>, event: &MarketEvent) {
        if self.triggered || event.symbol != self.config.symbol {
            return;
        }
        let Some((bid, _)) = event.quote.bid else {
            return;
        };
        if bid >= self.config.stop_price {
            return;
        }
        // fire once, whatever happens to the order
        self.triggered = true;
        let held = ctx
            .get_portfolio()
            .ok()
            .and_then(|p| p.get(&self.config.symbol).copied())
            .unwrap_or(0);
        let lot = self.config.lot_size.max(1);
        let qty = self.config.position_to_protect.min(held.max(0) as Qty) / lot * lot;
        if qty == 0 {
            return;
        }
        let _ = ctx.create_order(&self.config.symbol.clone(), Side::Sell, bid, qty);
    }
}
