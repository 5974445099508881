//! Scenario machinery shared by the acceptance criteria: the scripted
//! end-to-end run (in-process or through the gateway) and the randomized
//! runtime-vs-oracle runner.

// not every test file uses every helper
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use ats_core::account::{Account, FeeSchedule};
use ats_core::agent::NullAgent;
use ats_core::audit::SeqRange;
use ats_core::feed::{parse_feed, seed_level_size, FeedRecord};
use ats_core::market::{Instrument, OrderSpec};
use ats_core::runtime::{Ats, FixedClock, Requester, RuntimeConfig, StartingBalances};

use ats_core::types::*;
use ats_core::{LatencyClass, SeedParams};
use ats_testkit::{dev_key, dev_seed, random_scenario, signed_descriptor, NaiveMatcher, ScriptOp};

use ats_server::config::{
    BrokerConfig, DeveloperConfig, FeedConfig, InstrumentConfig, LatencyClassConfig, ServerConfig,
};
use ats_server::gateway::{Gateway, Server};
use ats_server::manifest::DescriptorJson;
use ats_server::RemoteShell;

pub const SCENARIO_CLOCK: u64 = 1_042_000_000_000;

/// The scripted scenario's universe: mixed tick and lot sizes.
pub fn scenario_universe() -> Vec<Instrument> {
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

pub fn scenario_config() -> ServerConfig {
    ServerConfig {
        listen: "127.0.0.1:0".to_string(),
        admin_token: "admin-secret".to_string(),
        starting_cash: 10_000_000,
        universe: vec![
            InstrumentConfig {
                symbol: "ERIC".into(),
                tick_size: 5,
                lot_size: 1,
            },
            InstrumentConfig {
                symbol: "NOKI".into(),
                tick_size: 1,
                lot_size: 10,
            },
            InstrumentConfig {
                symbol: "VOLV".into(),
                tick_size: 100,
                lot_size: 100,
            },
        ],
        latency_classes: vec![
            LatencyClassConfig {
                class_id: "instant".into(),
                delay_steps: 0,
                fee_per_event: 2,
            },
            LatencyClassConfig {
                class_id: "mid".into(),
                delay_steps: 2,
                fee_per_event: 1,
            },
            LatencyClassConfig {
                class_id: "slow".into(),
                delay_steps: 5,
                fee_per_event: 0,
            },
        ],
        brokers: vec![
            BrokerConfig {
                broker_id: "alpha".into(),
                token: "alpha-secret".into(),
                per_trade_fixed: 0,
                per_notional_bps: 0,
            },
            BrokerConfig {
                broker_id: "beta".into(),
                token: "beta-secret".into(),
                per_trade_fixed: 5,
                per_notional_bps: 10,
            },
        ],
        developers: vec![
            DeveloperConfig {
                developer_id: "dev1".into(),
                key: hex::encode(dev_key(&dev_seed(1))),
            },
            DeveloperConfig {
                developer_id: "dev2".into(),
                key: hex::encode(dev_key(&dev_seed(2))),
            },
            DeveloperConfig {
                developer_id: "dev3".into(),
                key: hex::encode(dev_key(&dev_seed(3))),
            },
        ],
        agent_overrides: BTreeMap::from([(
            "guard1".to_string(),
            ats_server::config::BalanceOverride {
                cash: None,
                positions: BTreeMap::from([("NOKI".to_string(), 100)]),
            },
        )]),
        seed_levels: 3,
        seed_base_size: 100,
        grace_ms: 300,
        heartbeat_interval_ms: 60_000,
        heartbeat_timeout_ms: 120_000,
        feed: Some(FeedConfig {
            file: "data/sample_feed.csv".into(),
            speed: 60.0,
            delay_secs: 900,
        }),
    }
}

pub fn scenario_server() -> Arc<Server> {
    let (server, warnings) =
        Server::with_clock(scenario_config(), Box::new(FixedClock(SCENARIO_CLOCK)))
            .expect("scenario config builds");
    assert!(warnings.is_empty(), "scenario config warned: {warnings:?}");
    Arc::new(server)
}

pub fn descriptor_json(
    agent: &str,
    developer: &str,
    broker: &str,
    seed: &[u8; 32],
    manifest: &[u8],
) -> DescriptorJson {
    let desc = signed_descriptor(agent, developer, broker, seed, manifest);
    DescriptorJson {
        agent_id: agent.to_string(),
        owner_id: developer.to_string(),
        broker_id: broker.to_string(),
        version: "1.0".into(),
        manifest_digest: hex::encode(desc.manifest_digest),
        signature: hex::encode(&desc.signature),
    }
}

pub fn sample_feed_records() -> Vec<FeedRecord> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/sample_feed.csv");
    let text = std::fs::read_to_string(path).expect("sample feed ships with the repo");
    let universe = scenario_universe().into_iter().map(|i| i.symbol).collect();
    let (records, warnings) = parse_feed(&text, &universe).expect("sample feed parses");
    assert!(warnings.is_empty());
    assert!(records.len() >= 100, "sample feed must hold >= 100 records");
    records
}

/// Everything the criteria compare between runs.
pub struct ScenarioOutput {
    pub tape: String,
    pub xml: String,
    pub log_entries: u64,
    pub accounts: BTreeMap<AgentId, Account>,
    pub broker_fees: BTreeMap<BrokerId, Cash>,
    pub operator_credits: Cash,
    pub starting_balances: BTreeMap<AgentId, (Cash, BTreeMap<Symbol, i64>)>,
    pub fee_schedules: BTreeMap<AgentId, FeeSchedule>,
}

const DAYTRADER_MANIFEST: &[u8] = br#"{ "kind": "daytrader", "config": {
  "symbol": "ERIC", "window": 3, "rise_threshold": 2, "order_size": 100,
  "latency_class": "instant", "stale_after": 20 } }"#;

const STOPLOSS_MANIFEST: &[u8] = br#"{ "kind": "stoploss", "config": {
  "symbol": "NOKI", "stop_price": 9400, "position_to_protect": 100,
  "latency_class": "instant" } }"#;

const REMOTE_MANIFEST: &[u8] = br#"{ "kind": "remote" }"#;

/// The scripted scenario behind criteria 1, 7 and 9: sample feed replay
/// with the daytrader and stop-loss agents in process plus one scripted
/// agent hosted either through the gateway (`via_gateway`) or as an
/// in-process shell driven through the SDK at exactly the same points.
pub fn scripted_scenario(via_gateway: bool) -> ScenarioOutput {
    let server = scenario_server();
    let gateway = if via_gateway {
        Some(Gateway::spawn(server.clone()).expect("gateway binds"))
    } else {
        None
    };

    server
        .submit_agent(
            &descriptor_json("daytrader1", "dev1", "beta", &dev_seed(1), DAYTRADER_MANIFEST),
            DAYTRADER_MANIFEST,
        )
        .expect("daytrader registers");
    server
        .submit_agent(
            &descriptor_json("guard1", "dev2", "beta", &dev_seed(2), STOPLOSS_MANIFEST),
            STOPLOSS_MANIFEST,
        )
        .expect("stoploss registers");

    let records = sample_feed_records();
    let apply = |range: std::ops::Range<usize>| {
        let mut ats = server.state.lock().unwrap();
        for record in &records[range] {
            ats.apply_feed_record(record).expect("sample feed is uncrossed");
        }
    };

    apply(0..30);

    // the scripted third agent joins
    let remote_desc = descriptor_json("remote1", "dev3", "alpha", &dev_seed(3), REMOTE_MANIFEST);
    let remote_agent = AgentId::new("remote1");
    let mut shell = None;
    if let Some(gw) = &gateway {
        server
            .submit_agent(&remote_desc, REMOTE_MANIFEST)
            .expect("remote registers");
        let connected = RemoteShell::connect(&gw.addr.to_string(), "remote1", &dev_seed(3))
            .expect("remote authenticates");
        shell = Some(connected);
    } else {
        // in-process twin: same descriptor, hosted as a local shell and
        // driven through the SDK
        let desc = remote_desc.to_descriptor().unwrap();
        {
            let mut ats = server.state.lock().unwrap();
            ats.register_local_agent(desc, Box::new(NullAgent), None)
                .expect("local twin registers");
            ats.log_admin_action("submit-agent", "remote1");
            ats.start_agent(&remote_agent).unwrap();
        }
    }

    // subscribe to VOLV ticks, buy the touch, leave a note
    let sub_id;
    let order_aggressive;
    if let Some(shell) = shell.as_mut() {
        sub_id = shell.subscribe(&["VOLV"], "instant").expect("subscribe acked");
        order_aggressive = shell.order("VOLV", "BUY", 205, 100).expect("order acked");
        shell.log_note("volv position opened").expect("note acked");
    } else {
        let mut ats = server.state.lock().unwrap();
        sub_id = ats
            .context(&remote_agent)
            .unwrap()
            .subscribe(&[Symbol::new("VOLV")], &ClassId::new("instant"))
            .unwrap();
        order_aggressive = ats
            .context(&remote_agent)
            .unwrap()
            .create_order(&Symbol::new("VOLV"), Side::Buy, 205, 100)
            .unwrap()
            .0;
        ats.context(&remote_agent)
            .unwrap()
            .log_note("volv position opened")
            .unwrap();
    }
    assert!(sub_id > 0);
    assert!(order_aggressive > 0);

    apply(30..60);

    // park a passive bid, then pull it
    if let Some(shell) = shell.as_mut() {
        let resting = shell.order("VOLV", "BUY", 150, 100).expect("passive order acked");
        let reason = shell.cancel(resting).expect("cancel acknowledged by event");
        assert_eq!(reason, "AGENT_REQUEST");
    } else {
        let mut ats = server.state.lock().unwrap();
        let resting = ats
            .context(&remote_agent)
            .unwrap()
            .create_order(&Symbol::new("VOLV"), Side::Buy, 150, 100)
            .unwrap();
        ats.context(&remote_agent)
            .unwrap()
            .cancel_order(resting)
            .unwrap();
    }

    apply(60..90);

    // scripted agent leaves gracefully
    if let Some(shell) = shell.take() {
        shell.stop().expect("clean close after STOP");
    } else {
        server
            .state
            .lock()
            .unwrap()
            .stop_agent(&remote_agent)
            .unwrap();
    }

    apply(90..120);

    // surveillance action closes the session's story
    {
        let mut ats = server.state.lock().unwrap();
        ats.kill_agent(&AgentId::new("daytrader1"), &Requester::Administrator)
            .unwrap();
    }

    let ats = server.state.lock().unwrap();
    let tape = ats.trade_tape();
    let xml = ats
        .export_log_xml(&Requester::Administrator, SeqRange::all())
        .unwrap();
    let zero = FeeSchedule::ZERO;
    let beta = FeeSchedule {
        per_trade_fixed: 5,
        per_notional_bps: 10,
    };
    let output = ScenarioOutput {
        tape,
        log_entries: ats.log().last_seq(),
        xml,
        accounts: ats.accounts().clone(),
        broker_fees: ats
            .brokers()
            .iter()
            .filter(|(_, b)| b.accrued_fees != 0)
            .map(|(id, b)| (id.clone(), b.accrued_fees))
            .collect(),
        operator_credits: ats.operator_feed_credits(),
        starting_balances: BTreeMap::from([
            (AgentId::exchange(), (0, BTreeMap::new())),
            (AgentId::new("daytrader1"), (10_000_000, BTreeMap::new())),
            (
                AgentId::new("guard1"),
                (10_000_000, BTreeMap::from([(Symbol::new("NOKI"), 100)])),
            ),
            (AgentId::new("remote1"), (10_000_000, BTreeMap::new())),
        ]),
        fee_schedules: BTreeMap::from([
            (AgentId::new("daytrader1"), beta),
            (AgentId::new("guard1"), beta),
            (AgentId::new("remote1"), zero),
        ]),
    };
    drop(ats);
    if let Some(gw) = gateway {
        gw.stop();
    }
    output
}

// ---------------------------------------------------------------------
// randomized runtime scenarios vs the oracle
// ---------------------------------------------------------------------

/// Flat universe for randomized runs: tick 1, lot 100.
pub fn flat_universe(symbols: &[Symbol]) -> Vec<Instrument> {
    symbols
        .iter()
        .map(|s| Instrument {
            symbol: s.clone(),
            tick_size: 1,
            lot_size: 100,
        })
        .collect()
}

pub const RANDOM_SEED_PARAMS: SeedParams = SeedParams {
    levels: 2,
    base_size: 200,
};

pub fn bare_runtime(fee: FeeSchedule) -> Ats {
    let symbols: Vec<Symbol> = ["ERIC", "NOKI", "VOLV", "ABBA", "SEBA"]
        .iter()
        .map(|s| Symbol::new(*s))
        .collect();
    let (mut ats, _) = Ats::new(
        RuntimeConfig {
            universe: flat_universe(&symbols),
            latency_classes: vec![LatencyClass {
                class_id: ClassId::new("paid"),
                delay_steps: 1,
                fee_per_event: 1,
            }],
            starting_cash: 1_000_000_000_000,
            seed: RANDOM_SEED_PARAMS,
        },
        Box::new(FixedClock(7)),
    )
    .unwrap();
    ats.add_broker(BrokerId::new("house"), fee).unwrap();
    ats.register_developer(DeveloperId::new("dev1"), &dev_key(&dev_seed(1)))
        .unwrap();
    ats
}

pub fn register_null_agent(ats: &mut Ats, name: &str, _n: u8) {
    let desc = signed_descriptor(name, "dev1", "house", &dev_seed(1), b"{}");
    let symbols: Vec<Symbol> = ["ERIC", "NOKI", "VOLV", "ABBA", "SEBA"]
        .iter()
        .map(|s| Symbol::new(*s))
        .collect();
    ats.register_local_agent(
        desc,
        Box::new(NullAgent),
        Some(StartingBalances {
            cash: 1_000_000_000_000,
            positions: symbols.iter().map(|s| (s.clone(), 1_000_000_000)).collect(),
        }),
    )
    .expect("fixture registration");
}

pub fn feed_record(symbol: &str, bid: u64, ask: u64) -> FeedRecord {
    FeedRecord {
        wall_ms: 0,
        symbol: Symbol::new(symbol),
        bid_minor: Some(bid),
        ask_minor: Some(ask),
        last_minor: None,
        volume: 0,
    }
}

pub struct RuntimeRun {
    pub engine_tape: String,
    pub oracle_tape: String,
    pub initial_total_cash: Cash,
    pub final_total_cash: Cash,
    pub final_broker_fees: Cash,
    pub final_operator_credits: Cash,
    pub initial_positions: BTreeMap<Symbol, i64>,
    pub final_positions: BTreeMap<Symbol, i64>,
}

/// Replay one randomized script through the full runtime (orders,
/// cancels, feed reseeds) and mirror the exact same book operations into
/// the naive matcher. With `check_priority`, the price-time property is
/// asserted after every sequenced event.
pub fn run_runtime_scenario(
    seed: u64,
    max_orders: usize,
    symbols: usize,
    fee: FeeSchedule,
    check_priority: bool,
) -> RuntimeRun {
    let scenario = random_scenario(seed, max_orders, symbols);
    let mut ats = bare_runtime(fee);
    let with_subscriber = !fee.is_zero();
    for i in 0..scenario.agent_count {
        register_null_agent(&mut ats, &format!("agent{i}"), i as u8);
        ats.start_agent(&AgentId::new(format!("agent{i}"))).unwrap();
    }
    if with_subscriber {
        // one billed subscriber makes the operator-credit term non-zero
        let watcher = AgentId::new("agent0");
        let all: Vec<Symbol> = scenario.symbols.clone();
        ats.context(&watcher)
            .unwrap()
            .subscribe(&all, &ClassId::new("paid"))
            .unwrap();
    }

    let totals = |ats: &Ats| -> (Cash, BTreeMap<Symbol, i64>) {
        let cash = ats.accounts().values().map(|a| a.cash).sum();
        let mut positions = BTreeMap::new();
        for sym in &scenario.symbols {
            let total: i64 = ats.accounts().values().map(|a| a.position(sym)).sum();
            positions.insert(sym.clone(), total);
        }
        (cash, positions)
    };
    let (initial_total_cash, initial_positions) = totals(&ats);

    let mut oracle = NaiveMatcher::new();
    let mut mirror_next_id = 0u64;
    let exchange = AgentId::exchange();

    for op in &scenario.ops {
        let trades_before = ats.trades().len();
        match op {
            ScriptOp::Order {
                agent,
                symbol,
                side,
                price,
                quantity,
            } => {
                let agent_id = AgentId::new(format!("agent{agent}"));
                mirror_next_id += 1;
                let oid = ats
                    .context(&agent_id)
                    .unwrap()
                    .create_order(symbol, *side, *price, *quantity)
                    .expect("ample balances never reject");
                assert_eq!(oid.0, mirror_next_id, "order id mirror out of sync");
                oracle.submit(&OrderSpec {
                    order_id: oid,
                    agent_id,
                    symbol: symbol.clone(),
                    side: *side,
                    limit_price: *price,
                    quantity: *quantity,
                });
            }
            ScriptOp::Cancel { agent, pick } => {
                let agent_id = AgentId::new(format!("agent{agent}"));
                let open = ats.market().open_orders_of(&agent_id);
                if open.is_empty() {
                    continue;
                }
                let oid = open[pick % open.len()];
                ats.context(&agent_id).unwrap().cancel_order(oid).unwrap();
                oracle.cancel(oid);
            }
            ScriptOp::Feed { symbol, bid, ask } => {
                // mirror the reseed: strike open exchange orders for the
                // symbol, then seed asks best-first and bids best-first
                // with the same geometric sizes and the same ids
                let stale: Vec<OrderId> = ats
                    .market()
                    .open_orders_of(&exchange)
                    .into_iter()
                    .filter(|oid| ats.market().order(*oid).unwrap().symbol == *symbol)
                    .collect();
                ats.apply_feed_record(&feed_record(symbol.as_str(), *bid, *ask))
                    .expect("generated records are uncrossed");
                for oid in stale {
                    oracle.cancel(oid);
                }
                for i in 0..RANDOM_SEED_PARAMS.levels {
                    mirror_next_id += 1;
                    oracle.submit(&OrderSpec {
                        order_id: OrderId(mirror_next_id),
                        agent_id: exchange.clone(),
                        symbol: symbol.clone(),
                        side: Side::Sell,
                        limit_price: ask + i,
                        quantity: seed_level_size(&RANDOM_SEED_PARAMS, i, 100),
                    });
                }
                for i in 0..RANDOM_SEED_PARAMS.levels {
                    if *bid <= i {
                        break;
                    }
                    mirror_next_id += 1;
                    oracle.submit(&OrderSpec {
                        order_id: OrderId(mirror_next_id),
                        agent_id: exchange.clone(),
                        symbol: symbol.clone(),
                        side: Side::Buy,
                        limit_price: bid - i,
                        quantity: seed_level_size(&RANDOM_SEED_PARAMS, i, 100),
                    });
                }
            }
        }
        assert!(ats.market().is_uncrossed(), "book crossed during scenario");
        if check_priority {
            assert_priority(&ats, trades_before);
        }
    }

    // exactly-once settlement: one FEE entry per non-exchange trade side
    // under a charging schedule, none under a zero schedule
    let fee_entries = ats
        .query_log(
            &Requester::Administrator,
            &ats_core::audit::LogFilter {
                kind: Some(ats_core::audit::LogKind::Fee),
                ..Default::default()
            },
        )
        .unwrap()
        .len();
    let expected_fee_entries: usize = if fee.is_zero() {
        0
    } else {
        ats.trades()
            .iter()
            .map(|t| {
                let buyer = &ats.market().order(t.buy_order_id).unwrap().agent_id;
                let seller = &ats.market().order(t.sell_order_id).unwrap().agent_id;
                usize::from(!buyer.is_exchange()) + usize::from(!seller.is_exchange())
            })
            .sum()
    };
    assert_eq!(fee_entries, expected_fee_entries, "fee entry count per trade side");

    let (final_total_cash, final_positions) = totals(&ats);
    RuntimeRun {
        engine_tape: ats.trade_tape(),
        oracle_tape: oracle.tape(),
        initial_total_cash,
        final_total_cash,
        final_broker_fees: ats.brokers().values().map(|b| b.accrued_fees).sum(),
        final_operator_credits: ats.operator_feed_credits(),
        initial_positions,
        final_positions,
    }
}

/// No contra-side resting order with strictly better (price, seq) than a
/// filled order may retain shares after the event that filled it.
fn assert_priority(ats: &Ats, trades_from: usize) {
    for t in &ats.trades()[trades_from..] {
        let resting_id = match t.aggressor_side {
            Side::Buy => t.sell_order_id,
            Side::Sell => t.buy_order_id,
        };
        let resting = ats.market().order(resting_id).expect("traded order");
        let contra = t.aggressor_side.opposite();
        let Some(best_id) = ats.market().resting_orders(&t.symbol, contra).first().copied()
        else {
            continue;
        };
        let best = ats.market().order(best_id).expect("resting order");
        let better = match contra {
            Side::Sell => {
                best.limit_price < resting.limit_price
                    || (best.limit_price == resting.limit_price && best.seq < resting.seq)
            }
            Side::Buy => {
                best.limit_price > resting.limit_price
                    || (best.limit_price == resting.limit_price && best.seq < resting.seq)
            }
        };
        assert!(
            !better,
            "better-priority contra order {best_id} still resting after {resting_id} filled"
        );
    }
}
