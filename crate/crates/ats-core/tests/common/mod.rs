//! Shared fixture: a small universe, two brokers (zero-fee and fixed+bps),
//! two registered developers, and recording agent shells.

// not every test file uses every helper
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use ats_core::agent::{AgentCallbacks, CancelReason, Fill, MarketEvent};
use ats_core::dissemination::LatencyClass;
use ats_core::market::Instrument;
use ats_core::runtime::{AgentContext, Ats, FixedClock, RuntimeConfig, StartingBalances};
use ats_core::types::*;
use ats_core::FeeSchedule;
use ats_testkit::{dev_key, dev_seed, signed_descriptor};

pub const STARTING_CASH: Cash = 10_000_000;

pub fn universe() -> Vec<Instrument> {
    vec![
        Instrument {
            symbol: Symbol::new("ERIC"),
            tick_size: 5,
            lot_size: 1,
        },
        Instrument {
            symbol: Symbol::new("NOKI"),
            tick_size: 1,
            lot_size: 10,
        },
        Instrument {
            symbol: Symbol::new("VOLV"),
            tick_size: 100,
            lot_size: 100,
        },
    ]
}

pub fn classes() -> Vec<LatencyClass> {
    vec![
        LatencyClass {
            class_id: ClassId::new("instant"),
            delay_steps: 0,
            fee_per_event: 2,
        },
        LatencyClass {
            class_id: ClassId::new("mid"),
            delay_steps: 2,
            fee_per_event: 1,
        },
        LatencyClass {
            class_id: ClassId::new("slow"),
            delay_steps: 5,
            fee_per_event: 0,
        },
    ]
}

pub fn fixture() -> Ats {
    let (mut ats, warnings) = Ats::new(
        RuntimeConfig {
            universe: universe(),
            latency_classes: classes(),
            starting_cash: STARTING_CASH,
            seed: ats_core::SeedParams {
                levels: 3,
                base_size: 100,
            },
        },
        Box::new(FixedClock(0)),
    )
    .expect("valid fixture config");
    assert!(warnings.is_empty(), "fixture config should not warn: {warnings:?}");
    ats.add_broker(BrokerId::new("alpha"), FeeSchedule::ZERO)
        .unwrap();
    ats.add_broker(
        BrokerId::new("beta"),
        FeeSchedule {
            per_trade_fixed: 5,
            per_notional_bps: 10,
        },
    )
    .unwrap();
    ats.register_developer(DeveloperId::new("dev1"), &dev_key(&dev_seed(1)))
        .unwrap();
    ats.register_developer(DeveloperId::new("dev2"), &dev_key(&dev_seed(2)))
        .unwrap();
    ats
}

/// Everything an agent shell observed, shared with the test body.
#[derive(Default)]
pub struct Recorder {
    pub initialized: usize,
    pub started: usize,
    pub stopped: usize,
    pub quotes: Vec<MarketEvent>,
    pub closed: Vec<(OrderId, Vec<Fill>)>,
    pub cancelled: Vec<(OrderId, CancelReason)>,
}

pub type SharedRecorder = Arc<Mutex<Recorder>>;

/// Records every callback; optionally runs a closure on each quote.
pub struct RecordingAgent {
    pub rec: SharedRecorder,
    #[allow(clippy::type_complexity)]
    pub on_quote_action: Option<Box<dyn FnMut(&mut AgentContext<'_>, &MarketEvent) + Send>>,
}

impl RecordingAgent {
    pub fn new(rec: SharedRecorder) -> Self {
        RecordingAgent {
            rec,
            on_quote_action: None,
        }
    }
}

impl AgentCallbacks for RecordingAgent {
    fn on_initialize(&mut self, _ctx: &mut AgentContext<'_>) {
        self.rec.lock().unwrap().initialized += 1;
    }
    fn on_start(&mut self, _ctx: &mut AgentContext<'_>) {
        self.rec.lock().unwrap().started += 1;
    }
    fn on_stop(&mut self, _ctx: &mut AgentContext<'_>) {
        self.rec.lock().unwrap().stopped += 1;
    }
    fn on_quote(&mut self, ctx: &mut AgentContext<'_>, event: &MarketEvent) {
        self.rec.lock().unwrap().quotes.push(event.clone());
        if let Some(action) = &mut self.on_quote_action {
            action(ctx, event);
        }
    }
    fn on_order_closed(&mut self, _ctx: &mut AgentContext<'_>, order_id: OrderId, fills: &[Fill]) {
        self.rec.lock().unwrap().closed.push((order_id, fills.to_vec()));
    }
    fn on_order_cancelled(
        &mut self,
        _ctx: &mut AgentContext<'_>,
        order_id: OrderId,
        reason: CancelReason,
    ) {
        self.rec.lock().unwrap().cancelled.push((order_id, reason));
    }
}

/// Register + record: returns the shared recorder.
pub fn register_recorder(
    ats: &mut Ats,
    agent: &str,
    developer: &str,
    broker: &str,
    balances: Option<StartingBalances>,
) -> SharedRecorder {
    let rec: SharedRecorder = Arc::new(Mutex::new(Recorder::default()));
    let seed = match developer {
        "dev1" => dev_seed(1),
        "dev2" => dev_seed(2),
        other => panic!("unknown fixture developer {other}"),
    };
    let desc = signed_descriptor(agent, developer, broker, &seed, b"{\"kind\":\"test\"}");
    ats.register_local_agent(desc, Box::new(RecordingAgent::new(rec.clone())), balances)
        .expect("fixture registration");
    rec
}

pub fn balances(cash: Cash, positions: &[(&str, i64)]) -> StartingBalances {
    StartingBalances {
        cash,
        positions: positions
            .iter()
            .map(|(s, p)| (Symbol::new(*s), *p))
            .collect::<BTreeMap<_, _>>(),
    }
}

pub fn sym(s: &str) -> Symbol {
    Symbol::new(s)
}

pub fn agent(s: &str) -> AgentId {
    AgentId::new(s)
}
