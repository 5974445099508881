//! Test support for the trade server: a brute-force matching oracle that
//! shares no code or data structures with the engine, a seeded random
//! scenario generator, and fixture helpers for registering agents.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ats_core::agent::AgentDescriptor;
use ats_core::cert::{manifest_digest, sign_bytes, verifying_key_of};
use ats_core::market::{OrderSpec, Trade};
use ats_core::types::{AgentId, BrokerId, DeveloperId, OrderId, Price, Qty, Side, Symbol};

/// Flat-list matcher: every resting order in one vector, matching by a
/// full linear scan for the best (price, seq) contra order. Deliberately
/// naive — this is the oracle the engine's tape is judged against, so it
/// must not share the engine's book structures.
#[derive(Default)]
pub struct NaiveMatcher {
    resting: Vec<NaiveOrder>,
    next_arrival: u64,
    next_trade: u64,
    pub trades: Vec<Trade>,
}

#[derive(Clone, Debug)]
pub struct NaiveOrder {
    pub order_id: OrderId,
    pub agent_id: AgentId,
    pub symbol: Symbol,
    pub side: Side,
    pub limit_price: Price,
    pub remaining: Qty,
    pub seq: u64,
}

impl NaiveMatcher {
    pub fn new() -> Self {
        NaiveMatcher::default()
    }

    /// Submit an order, producing trades in deterministic order. The
    /// caller is responsible for feeding only orders the engine also
    /// accepted (same validation outcome).
    pub fn submit(&mut self, spec: &OrderSpec) -> Vec<Trade> {
        self.next_arrival += 1;
        let mut incoming = NaiveOrder {
            order_id: spec.order_id,
            agent_id: spec.agent_id.clone(),
            symbol: spec.symbol.clone(),
            side: spec.side,
            limit_price: spec.limit_price,
            remaining: spec.quantity,
            seq: self.next_arrival,
        };
        let mut out = Vec::new();
        while incoming.remaining > 0 {
            // full scan for the best contra order that crosses
            let mut best: Option<usize> = None;
            for (i, r) in self.resting.iter().enumerate() {
                if r.symbol != incoming.symbol || r.side != incoming.side.opposite() || r.remaining == 0
                {
                    continue;
                }
                let crosses = match incoming.side {
                    Side::Buy => r.limit_price <= incoming.limit_price,
                    Side::Sell => r.limit_price >= incoming.limit_price,
                };
                if !crosses {
                    continue;
                }
                best = Some(match best {
                    None => i,
                    Some(j) => {
                        let better = match incoming.side {
                            Side::Buy => {
                                (r.limit_price, r.seq) < (self.resting[j].limit_price, self.resting[j].seq)
                            }
                            Side::Sell => {
                                r.limit_price > self.resting[j].limit_price
                                    || (r.limit_price == self.resting[j].limit_price
                                        && r.seq < self.resting[j].seq)
                            }
                        };
                        if better {
                            i
                        } else {
                            j
                        }
                    }
                });
            }
            let Some(i) = best else { break };
            let fill = incoming.remaining.min(self.resting[i].remaining);
            let price = self.resting[i].limit_price;
            self.resting[i].remaining -= fill;
            incoming.remaining -= fill;
            self.next_trade += 1;
            let (buy, sell) = match incoming.side {
                Side::Buy => (incoming.order_id, self.resting[i].order_id),
                Side::Sell => (self.resting[i].order_id, incoming.order_id),
            };
            out.push(Trade {
                trade_id: self.next_trade,
                symbol: incoming.symbol.clone(),
                price,
                quantity: fill,
                buy_order_id: buy,
                sell_order_id: sell,
                aggressor_side: incoming.side,
                seq: self.next_trade,
            });
        }
        self.resting.retain(|r| r.remaining > 0);
        if incoming.remaining > 0 {
            self.resting.push(incoming);
        }
        self.trades.extend(out.iter().cloned());
        out
    }

    /// Strike whatever remains of an order.
    pub fn cancel(&mut self, order_id: OrderId) -> Qty {
        let mut struck = 0;
        self.resting.retain(|r| {
            if r.order_id == order_id {
                struck = r.remaining;
                false
            } else {
                true
            }
        });
        struck
    }

    pub fn resting(&self) -> &[NaiveOrder] {
        &self.resting
    }

    pub fn tape(&self) -> String {
        ats_core::market::trade_tape(&self.trades)
    }
}

/// One scripted primitive for randomized scenarios.
#[derive(Clone, Debug)]
pub enum ScriptOp {
    Order {
        agent: usize,
        symbol: Symbol,
        side: Side,
        price: Price,
        quantity: Qty,
    },
    /// Cancel the n-th still-open order of the given agent (if any).
    Cancel { agent: usize, pick: usize },
    /// A market-data record reseeding the exchange side of one book.
    /// Prices are ticks (the scenario universe uses tick size 1).
    Feed {
        symbol: Symbol,
        bid: Price,
        ask: Price,
    },
}

/// A randomized scenario: the agent count plus the op script. Prices in
/// 1..=100 ticks, quantities on the lot grid.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub symbols: Vec<Symbol>,
    pub agent_count: usize,
    pub ops: Vec<ScriptOp>,
}

/// Generate a reproducible random scenario.
pub fn random_scenario(seed: u64, max_orders: usize, symbol_count: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all = ["ERIC", "NOKI", "VOLV", "ABBA", "SEBA"];
    let symbol_count = symbol_count.clamp(1, all.len());
    let symbols: Vec<Symbol> = all[..symbol_count].iter().map(|s| Symbol::new(*s)).collect();
    let agent_count = rng.gen_range(2..=4);
    let op_count = rng.gen_range(max_orders / 2..=max_orders);
    let mut ops = Vec::with_capacity(op_count);
    for _ in 0..op_count {
        let roll: f64 = rng.gen();
        if roll < 0.12 {
            ops.push(ScriptOp::Cancel {
                agent: rng.gen_range(0..agent_count),
                pick: rng.gen_range(0..8),
            });
        } else if roll < 0.22 {
            let bid = rng.gen_range(20..=90);
            ops.push(ScriptOp::Feed {
                symbol: symbols[rng.gen_range(0..symbols.len())].clone(),
                bid,
                ask: bid + rng.gen_range(2..=6),
            });
        } else {
            ops.push(ScriptOp::Order {
                agent: rng.gen_range(0..agent_count),
                symbol: symbols[rng.gen_range(0..symbols.len())].clone(),
                side: if rng.gen_bool(0.5) { Side::Buy } else { Side::Sell },
                price: rng.gen_range(1..=100),
                quantity: rng.gen_range(1..=10) * 100,
            });
        }
    }
    Scenario {
        symbols,
        agent_count,
        ops,
    }
}

/// Deterministic signing seed for a fixture developer.
pub fn dev_seed(n: u8) -> [u8; 32] {
    let mut seed = [0u8; 32];
    seed[0] = n;
    seed[31] = 0xA5;
    seed
}

/// A correctly signed descriptor for fixture agents.
pub fn signed_descriptor(
    agent: &str,
    developer: &str,
    broker: &str,
    seed: &[u8; 32],
    manifest: &[u8],
) -> AgentDescriptor {
    let digest = manifest_digest(manifest);
    AgentDescriptor {
        agent_id: AgentId::new(agent),
        owner_id: DeveloperId::new(developer),
        broker_id: BrokerId::new(broker),
        version: String::from("1.0"),
        manifest_digest: digest,
        signature: sign_bytes(seed, &digest),
    }
}

/// Verification key for a fixture seed (register this for the developer).
pub fn dev_key(seed: &[u8; 32]) -> [u8; 32] {
    verifying_key_of(seed)
}

/// Starting positions map used by randomized scenarios: a deep pile of
/// every symbol so sells never bounce.
pub fn ample_positions(symbols: &[Symbol], per_symbol: i64) -> BTreeMap<Symbol, i64> {
    symbols.iter().map(|s| (s.clone(), per_symbol)).collect()
}
