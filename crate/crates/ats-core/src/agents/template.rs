//! Template agent compiled from a declarative questionnaire: symbols, a
//! total budget, per-symbol position caps and buy-below / sell-above
//! price levels. One lot per trigger, one open order per symbol.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::agent::{AgentCallbacks, CancelReason, Fill, MarketEvent};
use crate::feed::minor_to_ticks;
use crate::market::Instrument;
use crate::runtime::AgentContext;
use crate::types::{Cash, ClassId, OrderId, Price, Qty, Side, Symbol};

/// One row of the questionnaire. Price levels are in minor currency
/// units and must sit on the instrument's tick grid.
#[derive(Clone, Debug)]
pub struct TemplateRule {
    pub symbol: Symbol,
    pub max_position: Qty,
    pub buy_below_minor: Option<u64>,
    pub sell_above_minor: Option<u64>,
}

/// The investor's declarative preferences.
#[derive(Clone, Debug)]
pub struct TemplateQuestionnaire {
    pub budget: Cash,
    pub rules: Vec<TemplateRule>,
    pub latency_class: ClassId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompileError {
    UnknownSymbol(Symbol),
    LevelOffTickGrid { symbol: Symbol, minor: u64 },
    BudgetExceedsCash { budget: Cash, cash: Cash },
    DuplicateRule(Symbol),
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompileError::UnknownSymbol(s) => write!(f, "rule references unknown symbol {s}"),
            CompileError::LevelOffTickGrid { symbol, minor } => {
                write!(f, "level {minor} for {symbol} is not on the tick grid")
            }
            CompileError::BudgetExceedsCash { budget, cash } => {
                write!(f, "budget {budget} exceeds starting cash {cash}")
            }
            CompileError::DuplicateRule(s) => write!(f, "two rules for symbol {s}"),
        }
    }
}

impl core::error::Error for CompileError {}

struct CompiledRule {
    max_position: Qty,
    buy_below: Option<Price>,
    sell_above: Option<Price>,
    lot_size: Qty,
    tick_size: u64,
    open_order: Option<OrderId>,
}

/// Rule-driven agent produced by [`compile`].
pub struct TemplateAgent {
    budget_left: Cash,
    latency_class: ClassId,
    rules: BTreeMap<Symbol, CompiledRule>,
}

/// Check the questionnaire against the instrument universe and the
/// agent's starting cash, producing a runnable agent.
pub fn compile(
    questionnaire: &TemplateQuestionnaire,
    universe: &[Instrument],
    starting_cash: Cash,
) -> Result<TemplateAgent, CompileError> {
    if questionnaire.budget > starting_cash {
        return Err(CompileError::BudgetExceedsCash {
            budget: questionnaire.budget,
            cash: starting_cash,
        });
    }
    let by_symbol: BTreeMap<&Symbol, &Instrument> =
        universe.iter().map(|i| (&i.symbol, i)).collect();
    let mut rules = BTreeMap::new();
    for rule in &questionnaire.rules {
        let inst = by_symbol
            .get(&rule.symbol)
            .ok_or_else(|| CompileError::UnknownSymbol(rule.symbol.clone()))?;
        let to_ticks = |minor: Option<u64>| -> Result<Option<Price>, CompileError> {
            let Some(m) = minor else { return Ok(None) };
            if m % inst.tick_size != 0 {
                return Err(CompileError::LevelOffTickGrid {
                    symbol: rule.symbol.clone(),
                    minor: m,
                });
            }
            Ok(Some(minor_to_ticks(m, inst.tick_size)))
        };
        let compiled = CompiledRule {
            max_position: rule.max_position,
            buy_below: to_ticks(rule.buy_below_minor)?,
            sell_above: to_ticks(rule.sell_above_minor)?,
            lot_size: inst.lot_size,
            tick_size: inst.tick_size,
            open_order: None,
        };
        if rules.insert(rule.symbol.clone(), compiled).is_some() {
            return Err(CompileError::DuplicateRule(rule.symbol.clone()));
        }
    }
    Ok(TemplateAgent {
        budget_left: questionnaire.budget,
        latency_class: questionnaire.latency_class.clone(),
        rules,
    })
}

impl AgentCallbacks for TemplateAgent {
    fn on_start(&mut self, ctx: &mut AgentContext<'_>) {
        let symbols: Vec<Symbol> = self.rules.keys().cloned().collect();
        if symbols.is_empty() {
            return;
        }
        ctx.subscribe(&symbols, &self.latency_class.clone())
            .expect("compiled symbols and configured class");
    }

    fn on_quote(&mut self, ctx: &mut AgentContext<'_>, event: &MarketEvent) {
        let Some(rule) = self.rules.get_mut(&event.symbol) else {
            return;
        };
        if rule.open_order.is_some() {
            return;
        }
        let position = ctx
            .get_portfolio()
            .ok()
            .and_then(|p| p.get(&event.symbol).copied())
            .unwrap_or(0);

        // buy one lot under the buy-below level, within budget and cap
        if let (Some(level), Some((ask, _))) = (rule.buy_below, event.quote.ask) {
            if ask <= level && (position + rule.lot_size as i64) <= rule.max_position as i64 {
                let cost = ask as Cash * rule.tick_size as Cash * rule.lot_size as Cash;
                if cost <= self.budget_left && ctx.get_cash().unwrap_or(0) >= cost * 2 {
                    if let Ok(id) =
                        ctx.create_order(&event.symbol.clone(), Side::Buy, ask, rule.lot_size)
                    {
                        rule.open_order = Some(id);
                        self.budget_left -= cost;
                    }
                    return;
                }
            }
        }
        // sell one lot above the sell-above level while holding
        if let (Some(level), Some((bid, _))) = (rule.sell_above, event.quote.bid) {
            if bid >= level && position >= rule.lot_size as i64 {
                if let Ok(id) =
                    ctx.create_order(&event.symbol.clone(), Side::Sell, bid, rule.lot_size)
                {
                    rule.open_order = Some(id);
                }
            }
        }
    }

    fn on_order_closed(&mut self, _ctx: &mut AgentContext<'_>, order_id: OrderId, _fills: &[Fill]) {
        for rule in self.rules.values_mut() {
            if rule.open_order == Some(order_id) {
                rule.open_order = None;
            }
        }
    }

    fn on_order_cancelled(
        &mut self,
        _ctx: &mut AgentContext<'_>,
        order_id: OrderId,
        _reason: CancelReason,
    ) {
        for rule in self.rules.values_mut() {
            if rule.open_order == Some(order_id) {
                rule.open_order = None;
            }
        }
    }
}
