//! Runtime behavior: certification gate, lifecycle, order placement and
//! settlement, broker powers, dissemination billing, log access and the
//! event-sourcing reconstruction.

mod common;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use ats_core::agent::{AgentCallbacks, AgentState, CancelReason};
use ats_core::audit::{LogFilter, LogKind, LogPayload, SeqRange};
use ats_core::feed::FeedRecord;
use ats_core::runtime::{AgentContext, ApiError, Requester, RuntimeError};
use ats_core::sourcing::{reduce, ReducerInputs};
use ats_core::types::*;
use ats_core::FeeSchedule;
use ats_testkit::{dev_seed, signed_descriptor};
use common::*;

// ---------------------------------------------------------------------
// registration & certification
// ---------------------------------------------------------------------

#[test]
fn valid_descriptor_registers_and_logs_lifecycle() {
    let mut ats = fixture();
    register_recorder(&mut ats, "a1", "dev1", "alpha", None);
    assert_eq!(ats.agent_state(&agent("a1")), Some(AgentState::Created));
    assert_eq!(ats.account(&agent("a1")).unwrap().cash, STARTING_CASH);
    let entries = ats
        .query_log(
            &Requester::Administrator,
            &LogFilter {
                kind: Some(LogKind::AgentLifecycle),
                ..LogFilter::default()
            },
        )
        .unwrap();
    assert_eq!(entries.len(), 1);
}

#[test]
fn one_bit_digest_flip_is_rejected() {
    let mut ats = fixture();
    let mut desc = signed_descriptor("a1", "dev1", "alpha", &dev_seed(1), b"manifest");
    desc.manifest_digest[7] ^= 0x20;
    let err = ats
        .register_local_agent(desc, Box::new(ats_core::agent::NullAgent), None)
        .unwrap_err();
    assert_eq!(err, RuntimeError::SignatureInvalid);
    assert!(ats.agent_state(&agent("a1")).is_none());
}

#[test]
fn developer_revoked_after_signing_blocks_registration() {
    let mut ats = fixture();
    let desc = signed_descriptor("a1", "dev1", "alpha", &dev_seed(1), b"manifest");
    assert!(ats.verify_descriptor(&desc).is_ok());
    ats.revoke_developer(&DeveloperId::new("dev1")).unwrap();
    let err = ats
        .register_local_agent(desc, Box::new(ats_core::agent::NullAgent), None)
        .unwrap_err();
    assert_eq!(err, RuntimeError::DeveloperRevoked);
}

#[test]
fn unknown_broker_rejected() {
    let mut ats = fixture();
    let desc = signed_descriptor("a1", "dev1", "gamma", &dev_seed(1), b"manifest");
    assert!(matches!(
        ats.register_local_agent(desc, Box::new(ats_core::agent::NullAgent), None),
        Err(RuntimeError::UnknownBroker(_))
    ));
}

#[test]
fn duplicate_and_reserved_agent_ids_rejected() {
    let mut ats = fixture();
    register_recorder(&mut ats, "a1", "dev1", "alpha", None);
    let dup = signed_descriptor("a1", "dev1", "alpha", &dev_seed(1), b"manifest");
    assert!(matches!(
        ats.register_local_agent(dup, Box::new(ats_core::agent::NullAgent), None),
        Err(RuntimeError::DuplicateAgent(_))
    ));
    let reserved = signed_descriptor("EXCHANGE", "dev1", "alpha", &dev_seed(1), b"manifest");
    assert!(matches!(
        ats.register_local_agent(reserved, Box::new(ats_core::agent::NullAgent), None),
        Err(RuntimeError::DuplicateAgent(_))
    ));
}

// ---------------------------------------------------------------------
// lifecycle
// ---------------------------------------------------------------------

#[test]
fn start_runs_initialize_then_start_and_logs_twice() {
    let mut ats = fixture();
    let rec = register_recorder(&mut ats, "a1", "dev1", "alpha", None);
    ats.start_agent(&agent("a1")).unwrap();
    assert_eq!(ats.agent_state(&agent("a1")), Some(AgentState::Running));
    assert_eq!(rec.lock().unwrap().initialized, 1);
    assert_eq!(rec.lock().unwrap().started, 1);
    let lifecycle = ats
        .query_log(
            &Requester::Administrator,
            &LogFilter {
                agent: Some(agent("a1")),
                kind: Some(LogKind::AgentLifecycle),
                ..LogFilter::default()
            },
        )
        .unwrap();
    let states: Vec<String> = lifecycle
        .iter()
        .map(|e| match &e.payload {
            LogPayload::AgentLifecycle { state } => state.as_str().to_string(),
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(states, vec!["CREATED", "INITIALIZED", "RUNNING"]);
    // the INITIALIZED and RUNNING records belong to the same start action
    assert_eq!(lifecycle[1].step, lifecycle[2].step);
}

#[test]
fn double_start_is_illegal_transition() {
    let mut ats = fixture();
    register_recorder(&mut ats, "a1", "dev1", "alpha", None);
    ats.start_agent(&agent("a1")).unwrap();
    assert!(matches!(
        ats.start_agent(&agent("a1")),
        Err(RuntimeError::IllegalTransition { .. })
    ));
}

#[test]
fn stop_leaves_resting_orders_in_book() {
    let mut ats = fixture();
    let rec = register_recorder(&mut ats, "a1", "dev1", "alpha", None);
    ats.start_agent(&agent("a1")).unwrap();
    let oid = ats
        .context(&agent("a1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    ats.stop_agent(&agent("a1")).unwrap();
    assert_eq!(rec.lock().unwrap().stopped, 1);
    assert_eq!(ats.agent_state(&agent("a1")), Some(AgentState::Stopped));
    // order still resting
    let q = ats.top_of_book(&sym("ERIC")).unwrap();
    assert_eq!(q.bid, Some((50, 100)));
    assert!(!ats
        .market()
        .order(oid)
        .unwrap()
        .status
        .is_closed());
    // no further transitions from STOPPED
    assert!(matches!(
        ats.stop_agent(&agent("a1")),
        Err(RuntimeError::IllegalTransition { .. })
    ));
}

struct OrderOnInitialize {
    outcome: Arc<Mutex<Option<Result<OrderId, ApiError>>>>,
}

impl AgentCallbacks for OrderOnInitialize {
    fn on_initialize(&mut self, ctx: &mut AgentContext<'_>) {
        *self.outcome.lock().unwrap() = Some(ctx.create_order(&sym("ERIC"), Side::Buy, 50, 100));
    }
}

#[test]
fn create_order_before_running_is_rejected() {
    let mut ats = fixture();
    let outcome = Arc::new(Mutex::new(None));
    let desc = signed_descriptor("a1", "dev1", "alpha", &dev_seed(1), b"manifest");
    ats.register_local_agent(
        desc,
        Box::new(OrderOnInitialize {
            outcome: outcome.clone(),
        }),
        None,
    )
    .unwrap();
    ats.start_agent(&agent("a1")).unwrap();
    assert_eq!(
        outcome.lock().unwrap().clone(),
        Some(Err(ApiError::AgentNotRunning))
    );
}

// ---------------------------------------------------------------------
// orders: reservations, fills, cancels
// ---------------------------------------------------------------------

fn started(ats: &mut ats_core::Ats, name: &str, broker: &str, bal: Option<ats_core::StartingBalances>) -> SharedRecorder {
    let rec = register_recorder(ats, name, "dev1", broker, bal);
    ats.start_agent(&agent(name)).unwrap();
    rec
}

#[test]
fn buy_reservation_boundary_is_exact_with_zero_fees() {
    let mut ats = fixture();
    // ERIC tick 5: 100 sh @ 50 ticks = 25_000 minor units
    started(&mut ats, "poor", "alpha", Some(balances(24_999, &[])));
    let err = ats
        .context(&agent("poor"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap_err();
    assert_eq!(err, ApiError::InsufficientFunds);
    assert_eq!(ats.top_of_book(&sym("ERIC")).unwrap().bid, None);

    started(&mut ats, "exact", "alpha", Some(balances(25_000, &[])));
    ats.context(&agent("exact"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    let acct = ats.account(&agent("exact")).unwrap();
    assert_eq!(acct.reserved_cash, 25_000);
    assert_eq!(acct.free_cash(), 0);
}

#[test]
fn sell_without_shares_is_rejected() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    let err = ats
        .context(&agent("a1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 100)
        .unwrap_err();
    assert_eq!(err, ApiError::InsufficientShares);
}

#[test]
fn validation_failures_wrap_market_errors() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    let mut ctx = ats.context(&agent("a1")).unwrap();
    assert!(matches!(
        ctx.create_order(&sym("ZZZZ"), Side::Buy, 50, 100),
        Err(ApiError::ValidationFailed(_))
    ));
    assert!(matches!(
        ctx.create_order(&sym("ERIC"), Side::Buy, 0, 100),
        Err(ApiError::ValidationFailed(_))
    ));
    assert!(matches!(
        ctx.create_order(&sym("NOKI"), Side::Buy, 50, 15), // lot 10
        Err(ApiError::ValidationFailed(_))
    ));
}

#[test]
fn fill_settles_cash_position_and_callbacks() {
    let mut ats = fixture();
    let seller = started(
        &mut ats,
        "seller",
        "alpha",
        Some(balances(STARTING_CASH, &[("ERIC", 100)])),
    );
    let buyer = started(&mut ats, "buyer", "alpha", None);

    let sell_id = ats
        .context(&agent("seller"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 100)
        .unwrap();
    let buy_id = ats
        .context(&agent("buyer"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 52, 100)
        .unwrap();

    // executes at the resting price, 50 ticks * 5 = 250 minor per share
    let cost = 50 * 5 * 100;
    let b = ats.account(&agent("buyer")).unwrap();
    assert_eq!(b.cash, STARTING_CASH - cost);
    assert_eq!(b.position(&sym("ERIC")), 100);
    assert_eq!(b.reserved_cash, 0);
    let s = ats.account(&agent("seller")).unwrap();
    assert_eq!(s.cash, STARTING_CASH + cost);
    assert_eq!(s.position(&sym("ERIC")), 0);
    assert_eq!(s.reserved_shares_of(&sym("ERIC")), 0);

    assert_eq!(buyer.lock().unwrap().closed.len(), 1);
    assert_eq!(seller.lock().unwrap().closed.len(), 1);
    let (oid, fills) = buyer.lock().unwrap().closed[0].clone();
    assert_eq!(oid, buy_id);
    assert_eq!(fills.len(), 1);
    assert_eq!((fills[0].price, fills[0].quantity), (50, 100));
    let (oid, _) = seller.lock().unwrap().closed[0].clone();
    assert_eq!(oid, sell_id);

    // tape carries the aggressor
    assert_eq!(
        ats.trade_tape(),
        format!("TRADE 1 ERIC 50 100 {} {} BUY\n", buy_id, sell_id)
    );
}

#[test]
fn fees_follow_schedule_and_accrue_to_broker() {
    let mut ats = fixture();
    // VOLV tick 100: 100 sh @ 5 ticks -> notional 50_000; beta fee 5 + 10bps = 55
    started(
        &mut ats,
        "seller",
        "beta",
        Some(balances(STARTING_CASH, &[("VOLV", 100)])),
    );
    started(&mut ats, "buyer", "beta", None);
    ats.context(&agent("seller"))
        .unwrap()
        .create_order(&sym("VOLV"), Side::Sell, 5, 100)
        .unwrap();
    ats.context(&agent("buyer"))
        .unwrap()
        .create_order(&sym("VOLV"), Side::Buy, 5, 100)
        .unwrap();

    let notional = 5 * 100 * 100;
    assert_eq!(
        ats.account(&agent("buyer")).unwrap().cash,
        STARTING_CASH - notional - 55
    );
    assert_eq!(
        ats.account(&agent("seller")).unwrap().cash,
        STARTING_CASH + notional - 55
    );
    assert_eq!(ats.broker(&BrokerId::new("beta")).unwrap().accrued_fees, 110);
    // nothing left reserved
    assert_eq!(ats.account(&agent("buyer")).unwrap().reserved_cash, 0);
    assert_eq!(ats.account(&agent("seller")).unwrap().reserved_cash, 0);

    let fees = ats
        .query_log(
            &Requester::Administrator,
            &LogFilter {
                kind: Some(LogKind::Fee),
                ..LogFilter::default()
            },
        )
        .unwrap();
    assert_eq!(fees.len(), 2);
}

#[test]
fn self_trade_nets_to_zero_and_is_tagged() {
    let mut ats = fixture();
    started(
        &mut ats,
        "solo",
        "alpha",
        Some(balances(STARTING_CASH, &[("ERIC", 100)])),
    );
    ats.context(&agent("solo"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 100)
        .unwrap();
    ats.context(&agent("solo"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();

    let acct = ats.account(&agent("solo")).unwrap();
    assert_eq!(acct.cash, STARTING_CASH);
    assert_eq!(acct.position(&sym("ERIC")), 100);

    let trades = ats
        .query_log(
            &Requester::Administrator,
            &LogFilter {
                kind: Some(LogKind::Trade),
                ..LogFilter::default()
            },
        )
        .unwrap();
    assert_eq!(trades.len(), 2);
    for e in &trades {
        match &e.payload {
            LogPayload::Trade { self_trade, .. } => assert!(self_trade),
            _ => unreachable!(),
        }
    }
}

#[test]
fn cancel_own_resting_order_delivers_callback() {
    let mut ats = fixture();
    let rec = started(&mut ats, "a1", "alpha", None);
    let oid = ats
        .context(&agent("a1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    ats.context(&agent("a1")).unwrap().cancel_order(oid).unwrap();
    assert_eq!(
        rec.lock().unwrap().cancelled,
        vec![(oid, CancelReason::AgentRequest)]
    );
    // reservation released in full
    assert_eq!(ats.account(&agent("a1")).unwrap().reserved_cash, 0);
}

#[test]
fn cancel_other_agents_order_is_not_owner() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    started(&mut ats, "a2", "alpha", None);
    let oid = ats
        .context(&agent("a1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    assert_eq!(
        ats.context(&agent("a2")).unwrap().cancel_order(oid),
        Err(ApiError::NotOwner)
    );
}

#[test]
fn cancel_after_full_fill_is_already_closed() {
    let mut ats = fixture();
    let seller = started(
        &mut ats,
        "seller",
        "alpha",
        Some(balances(STARTING_CASH, &[("ERIC", 100)])),
    );
    started(&mut ats, "buyer", "alpha", None);
    let sell_id = ats
        .context(&agent("seller"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 100)
        .unwrap();
    ats.context(&agent("buyer"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    // terminal callback already delivered, now the cancel bounces
    assert_eq!(seller.lock().unwrap().closed.len(), 1);
    assert_eq!(
        ats.context(&agent("seller")).unwrap().cancel_order(sell_id),
        Err(ApiError::AlreadyClosed)
    );
}

#[test]
fn cancel_after_partial_fill_strikes_remainder_only() {
    let mut ats = fixture();
    let seller = started(
        &mut ats,
        "seller",
        "alpha",
        Some(balances(STARTING_CASH, &[("ERIC", 100)])),
    );
    started(&mut ats, "buyer", "alpha", None);
    let sell_id = ats
        .context(&agent("seller"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 100)
        .unwrap();
    ats.context(&agent("buyer"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 40)
        .unwrap();
    ats.context(&agent("seller")).unwrap().cancel_order(sell_id).unwrap();

    let st = ats.market().order(sell_id).unwrap();
    assert_eq!(st.filled(), 40);
    assert_eq!(st.cancelled_qty(), 60);
    let s = ats.account(&agent("seller")).unwrap();
    assert_eq!(s.position(&sym("ERIC")), 60);
    assert_eq!(s.reserved_shares_of(&sym("ERIC")), 0);
    assert_eq!(seller.lock().unwrap().cancelled.len(), 1);
    assert_eq!(seller.lock().unwrap().closed.len(), 0); // never both terminals
}

// ---------------------------------------------------------------------
// reads
// ---------------------------------------------------------------------

#[test]
fn reads_reflect_settled_state() {
    let mut ats = fixture();
    started(
        &mut ats,
        "seller",
        "alpha",
        Some(balances(STARTING_CASH, &[("ERIC", 70)])),
    );
    started(&mut ats, "buyer", "alpha", None);
    assert_eq!(
        ats.context(&agent("buyer")).unwrap().get_cash().unwrap(),
        STARTING_CASH
    );
    ats.context(&agent("seller"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 40, 70)
        .unwrap();
    ats.context(&agent("buyer"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 40, 70)
        .unwrap();
    let ctx = ats.context(&agent("buyer")).unwrap();
    assert_eq!(ctx.get_cash().unwrap(), STARTING_CASH - 40 * 5 * 70);
    assert_eq!(ctx.get_portfolio().unwrap()[&sym("ERIC")], 70);
    assert_eq!(
        ctx.get_quote(&sym("ZZZZ")),
        Err(ApiError::UnknownInstrument(sym("ZZZZ")))
    );
}

// ---------------------------------------------------------------------
// subscriptions & dissemination through the runtime
// ---------------------------------------------------------------------

#[test]
fn subscribe_unknown_symbol_or_class_rejected() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    let mut ctx = ats.context(&agent("a1")).unwrap();
    assert_eq!(
        ctx.subscribe(&[sym("ZZZZ")], &ClassId::new("instant")),
        Err(ApiError::UnknownInstrument(sym("ZZZZ")))
    );
    assert_eq!(
        ctx.subscribe(&[sym("ERIC")], &ClassId::new("warp")),
        Err(ApiError::UnknownLatencyClass(ClassId::new("warp")))
    );
}

#[test]
fn zero_delay_subscription_delivers_within_the_same_step() {
    let mut ats = fixture();
    let rec = started(&mut ats, "watcher", "alpha", None);
    ats.context(&agent("watcher"))
        .unwrap()
        .subscribe(&[sym("ERIC")], &ClassId::new("instant"))
        .unwrap();
    started(&mut ats, "mover", "alpha", None);
    ats.context(&agent("mover"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    let publish_step = ats.current_step();
    let quotes = rec.lock().unwrap().quotes.clone();
    assert_eq!(quotes.len(), 1);
    assert_eq!(quotes[0].step, publish_step);
    // billing: instant class charges 2 per event
    assert_eq!(
        ats.account(&agent("watcher")).unwrap().cash,
        STARTING_CASH - 2
    );
    assert_eq!(ats.operator_feed_credits(), 2);
}

#[test]
fn delayed_subscription_delivers_at_publish_plus_delay() {
    let mut ats = fixture();
    let rec = started(&mut ats, "watcher", "alpha", None);
    ats.context(&agent("watcher"))
        .unwrap()
        .subscribe(&[sym("ERIC")], &ClassId::new("mid")) // delay 2
        .unwrap();
    started(&mut ats, "mover", "alpha", None);
    ats.context(&agent("mover"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    let publish_step = ats.current_step();
    assert!(rec.lock().unwrap().quotes.is_empty());

    // two more sequenced actions advance the clock to publish+2
    ats.context(&agent("mover")).unwrap().log_note("tick").unwrap();
    assert!(rec.lock().unwrap().quotes.is_empty());
    ats.context(&agent("mover")).unwrap().log_note("tock").unwrap();
    let quotes = rec.lock().unwrap().quotes.clone();
    assert_eq!(quotes.len(), 1);
    assert_eq!(quotes[0].step, publish_step);
    assert_eq!(ats.current_step(), publish_step + 2);

    let delivered = ats
        .query_log(
            &Requester::Administrator,
            &LogFilter {
                kind: Some(LogKind::QuoteDelivered),
                ..LogFilter::default()
            },
        )
        .unwrap();
    assert_eq!(delivered.len(), 1);
    match &delivered[0].payload {
        LogPayload::QuoteDelivered {
            event_step,
            due_step,
            ..
        } => {
            assert_eq!(*event_step, publish_step);
            assert_eq!(*due_step, publish_step + 2);
        }
        _ => unreachable!(),
    }
}

// ---------------------------------------------------------------------
// notes and own-log access
// ---------------------------------------------------------------------

#[test]
fn notes_round_trip_and_stay_private() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    started(&mut ats, "a2", "alpha", None);
    ats.context(&agent("a1")).unwrap().log_note("mine one").unwrap();
    ats.context(&agent("a2")).unwrap().log_note("theirs").unwrap();
    ats.context(&agent("a1")).unwrap().log_note("mine two").unwrap();

    let own = ats
        .context(&agent("a1"))
        .unwrap()
        .read_own_log(SeqRange::all())
        .unwrap();
    let notes: Vec<String> = own
        .iter()
        .filter_map(|e| match &e.payload {
            LogPayload::AgentNote { text } => Some(text.clone()),
            _ => None,
        })
        .collect();
    assert_eq!(notes, vec!["mine one", "mine two"]);
    assert!(own.windows(2).all(|w| w[0].seq < w[1].seq));
    assert!(own.iter().all(|e| e.agent_id == Some(agent("a1"))));

    assert_eq!(
        ats.context(&agent("a1"))
            .unwrap()
            .read_own_log(SeqRange { from: 9, to: 3 }),
        Err(ApiError::RangeInvalid)
    );
}

// ---------------------------------------------------------------------
// kill switch
// ---------------------------------------------------------------------

#[test]
fn broker_kill_cancels_all_orders_in_one_step() {
    let mut ats = fixture();
    started(&mut ats, "victim", "beta", Some(balances(STARTING_CASH, &[("NOKI", 500)])));
    ats.context(&agent("victim"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    ats.context(&agent("victim"))
        .unwrap()
        .create_order(&sym("NOKI"), Side::Sell, 80, 200)
        .unwrap();

    let report = ats
        .kill_agent(&agent("victim"), &Requester::Broker(BrokerId::new("beta")))
        .unwrap();
    assert_eq!(report.cancelled_orders.len(), 2);
    assert_eq!(ats.agent_state(&agent("victim")), Some(AgentState::Killed));

    let kill_step = ats.current_step();
    let entries = ats
        .query_log(&Requester::Administrator, &LogFilter::default())
        .unwrap();
    let cancels: Vec<_> = entries
        .iter()
        .filter(|e| e.kind() == LogKind::OrderCancelled)
        .collect();
    assert_eq!(cancels.len(), 2);
    assert!(cancels.iter().all(|e| e.step == kill_step));
    // reservations fully released, account frozen against new actions
    let acct = ats.account(&agent("victim")).unwrap();
    assert_eq!(acct.reserved_cash, 0);
    assert_eq!(acct.reserved_shares_of(&sym("NOKI")), 0);
    assert_eq!(
        ats.context(&agent("victim"))
            .unwrap()
            .create_order(&sym("ERIC"), Side::Buy, 50, 100),
        Err(ApiError::AgentNotRunning)
    );

    // post-kill silence: nothing for the victim after the kill step
    let later: Vec<_> = entries
        .iter()
        .filter(|e| e.agent_id == Some(agent("victim")) && e.step > kill_step)
        .collect();
    assert!(later.is_empty());
}

#[test]
fn unrelated_broker_cannot_kill() {
    let mut ats = fixture();
    started(&mut ats, "victim", "beta", None);
    assert_eq!(
        ats.kill_agent(&agent("victim"), &Requester::Broker(BrokerId::new("alpha"))),
        Err(RuntimeError::NotAuthorized)
    );
    assert_eq!(
        ats.kill_agent(&agent("victim"), &Requester::Agent(agent("victim"))),
        Err(RuntimeError::NotAuthorized)
    );
}

#[test]
fn kill_is_idempotent() {
    let mut ats = fixture();
    started(&mut ats, "victim", "beta", None);
    ats.kill_agent(&agent("victim"), &Requester::Administrator)
        .unwrap();
    let before = ats.log().last_seq();
    let report = ats
        .kill_agent(&agent("victim"), &Requester::Administrator)
        .unwrap();
    assert!(report.cancelled_orders.is_empty());
    assert_eq!(ats.log().last_seq(), before);
    assert!(matches!(
        ats.kill_agent(&agent("ghost"), &Requester::Administrator),
        Err(RuntimeError::UnknownAgent(_))
    ));
}

// ---------------------------------------------------------------------
// feed seeding through the runtime
// ---------------------------------------------------------------------

fn record(symbol: &str, bid: Option<u64>, ask: Option<u64>, last: Option<u64>) -> FeedRecord {
    FeedRecord {
        wall_ms: 0,
        symbol: sym(symbol),
        bid_minor: bid,
        ask_minor: ask,
        last_minor: last,
        volume: 1000,
    }
}

#[test]
fn seeding_places_geometric_levels_and_reseeds_cleanly() {
    let mut ats = fixture();
    // VOLV tick 100 lot 100, seed levels 3 base 100
    ats.apply_feed_record(&record("VOLV", Some(20_000), Some(20_200), Some(20_100)))
        .unwrap();
    let depth = ats
        .depth_snapshot(&sym("VOLV"), std::num::NonZeroUsize::new(5).unwrap())
        .unwrap();
    assert_eq!(depth.bids, vec![(200, 100), (199, 200), (198, 400)]);
    assert_eq!(depth.asks, vec![(202, 100), (203, 200), (204, 400)]);
    let q = ats.top_of_book(&sym("VOLV")).unwrap();
    assert_eq!(q.last, Some(201));

    // reseed at new prices: old exchange orders replaced, not stacked
    ats.apply_feed_record(&record("VOLV", Some(19_900), Some(20_100), None))
        .unwrap();
    let depth = ats
        .depth_snapshot(&sym("VOLV"), std::num::NonZeroUsize::new(5).unwrap())
        .unwrap();
    assert_eq!(depth.bids, vec![(199, 100), (198, 200), (197, 400)]);
    assert_eq!(depth.asks, vec![(201, 100), (202, 200), (203, 400)]);
    assert!(ats.market().is_uncrossed());
    // last survives from the first record
    assert_eq!(ats.top_of_book(&sym("VOLV")).unwrap().last, Some(201));
}

#[test]
fn crossed_record_is_skipped_and_logged() {
    let mut ats = fixture();
    ats.apply_feed_record(&record("VOLV", Some(20_000), Some(20_200), None))
        .unwrap();
    let before = ats
        .depth_snapshot(&sym("VOLV"), std::num::NonZeroUsize::new(5).unwrap())
        .unwrap();
    let err = ats
        .apply_feed_record(&record("VOLV", Some(20_300), Some(20_200), None))
        .unwrap_err();
    assert_eq!(err.symbol, sym("VOLV"));
    let after = ats
        .depth_snapshot(&sym("VOLV"), std::num::NonZeroUsize::new(5).unwrap())
        .unwrap();
    assert_eq!(before, after);
    assert_eq!(ats.log().errors().len(), 1);
    assert!(ats.log().errors()[0].text.contains("crossed"));
}

#[test]
fn reseeding_never_touches_agent_orders_and_can_fill_them() {
    let mut ats = fixture();
    ats.apply_feed_record(&record("VOLV", Some(20_000), Some(20_200), None))
        .unwrap();
    let rec = started(&mut ats, "a1", "alpha", None);
    // passive agent bid below the market
    let oid = ats
        .context(&agent("a1"))
        .unwrap()
        .create_order(&sym("VOLV"), Side::Buy, 199, 100)
        .unwrap();
    // reseed higher: agent order untouched
    ats.apply_feed_record(&record("VOLV", Some(20_100), Some(20_300), None))
        .unwrap();
    assert!(!ats.market().order(oid).unwrap().status.is_closed());

    // market falls through the agent's bid: the new exchange ask at 198
    // crosses it and executes
    ats.apply_feed_record(&record("VOLV", Some(19_700), Some(19_800), None))
        .unwrap();
    assert_eq!(
        ats.market().order(oid).unwrap().status,
        ats_core::OrderStatus::Filled
    );
    assert_eq!(rec.lock().unwrap().closed.len(), 1);
    // the agent's resting bid was the maker: execution at its limit
    assert_eq!(rec.lock().unwrap().closed[0].1[0].price, 199);
    assert!(ats.market().is_uncrossed());
}

// ---------------------------------------------------------------------
// log access control through the runtime
// ---------------------------------------------------------------------

#[test]
fn broker_sees_member_agents_only() {
    let mut ats = fixture();
    started(&mut ats, "a1", "alpha", None);
    started(&mut ats, "b1", "beta", None);
    ats.context(&agent("a1")).unwrap().log_note("alpha note").unwrap();
    ats.context(&agent("b1")).unwrap().log_note("beta note").unwrap();

    let seen = ats
        .query_log(&Requester::Broker(BrokerId::new("alpha")), &LogFilter::default())
        .unwrap();
    assert!(seen.iter().all(|e| e.agent_id == Some(agent("a1"))));
    assert!(!seen.is_empty());

    let err = ats
        .query_log(
            &Requester::Agent(agent("a1")),
            &LogFilter {
                agent: Some(agent("b1")),
                ..LogFilter::default()
            },
        )
        .unwrap_err();
    assert_eq!(err, ats_core::audit::AuditError::AccessDenied);
}

// ---------------------------------------------------------------------
// event sourcing: log replay equals live accounts
// ---------------------------------------------------------------------

#[test]
fn exported_log_reconstructs_live_accounts_exactly() {
    let mut ats = fixture();
    started(
        &mut ats,
        "s1",
        "beta",
        Some(balances(STARTING_CASH, &[("ERIC", 1_000), ("VOLV", 1_000)])),
    );
    let rec = started(&mut ats, "b1", "beta", None);
    started(&mut ats, "watcher", "alpha", None);
    ats.context(&agent("watcher"))
        .unwrap()
        .subscribe(&[sym("ERIC"), sym("VOLV")], &ClassId::new("instant"))
        .unwrap();

    // a busy little session: fills, partials, cancels, seeds, notes, a kill
    ats.apply_feed_record(&record("VOLV", Some(20_000), Some(20_200), Some(20_100)))
        .unwrap();
    ats.context(&agent("s1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Sell, 50, 300)
        .unwrap();
    ats.context(&agent("b1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 52, 100)
        .unwrap();
    let resting = ats
        .context(&agent("b1"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 40, 60)
        .unwrap();
    ats.context(&agent("b1")).unwrap().log_note("bought a chunk").unwrap();
    ats.context(&agent("b1")).unwrap().cancel_order(resting).unwrap();
    ats.context(&agent("b1"))
        .unwrap()
        .create_order(&sym("VOLV"), Side::Buy, 202, 100)
        .unwrap(); // takes the seeded ask
    ats.apply_feed_record(&record("VOLV", Some(19_900), Some(20_100), None))
        .unwrap();
    ats.kill_agent(&agent("s1"), &Requester::Administrator).unwrap();
    assert!(!rec.lock().unwrap().closed.is_empty());

    // export as administrator, parse back, reduce, compare
    let doc = ats
        .export_log_xml(&Requester::Administrator, SeqRange::all())
        .unwrap();
    let entries = ats_core::audit::import_xml(&doc).unwrap();
    assert_eq!(entries.len(), ats.log().entries().len());

    let beta = FeeSchedule {
        per_trade_fixed: 5,
        per_notional_bps: 10,
    };
    let inputs = ReducerInputs {
        universe: universe().into_iter().map(|i| (i.symbol.clone(), i)).collect(),
        starting: BTreeMap::from([
            (AgentId::exchange(), (0, BTreeMap::new())),
            (
                agent("s1"),
                (
                    STARTING_CASH,
                    BTreeMap::from([(sym("ERIC"), 1_000), (sym("VOLV"), 1_000)]),
                ),
            ),
            (agent("b1"), (STARTING_CASH, BTreeMap::new())),
            (agent("watcher"), (STARTING_CASH, BTreeMap::new())),
        ]),
        schedules: BTreeMap::from([
            (agent("s1"), beta),
            (agent("b1"), beta),
            (agent("watcher"), FeeSchedule::ZERO),
        ]),
    };
    let reduced = reduce(&entries, &inputs).expect("log replays cleanly");

    for (id, live) in ats.accounts() {
        let replayed = reduced
            .accounts
            .get(id)
            .unwrap_or_else(|| panic!("missing account {id}"));
        assert_eq!(replayed, live, "account mismatch for {id}");
    }
    assert_eq!(reduced.accounts.len(), ats.accounts().len());
    for (bid, broker) in ats.brokers() {
        assert_eq!(
            reduced.broker_fees.get(bid).copied().unwrap_or(0),
            broker.accrued_fees,
            "broker fee mismatch for {bid}"
        );
    }
    assert_eq!(reduced.operator_feed_credits, ats.operator_feed_credits());
}

#[test]
fn unsubscribe_stops_deliveries() {
    let mut ats = fixture();
    let rec = started(&mut ats, "watcher", "alpha", None);
    started(&mut ats, "mover", "alpha", None);
    let sub = ats
        .context(&agent("watcher"))
        .unwrap()
        .subscribe(&[sym("ERIC")], &ClassId::new("instant"))
        .unwrap();
    ats.context(&agent("mover"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 50, 100)
        .unwrap();
    assert_eq!(rec.lock().unwrap().quotes.len(), 1);

    ats.context(&agent("watcher")).unwrap().unsubscribe(sub).unwrap();
    ats.context(&agent("mover"))
        .unwrap()
        .create_order(&sym("ERIC"), Side::Buy, 51, 100)
        .unwrap();
    assert_eq!(rec.lock().unwrap().quotes.len(), 1, "no deliveries after unsubscribe");

    // double-unsubscribe and foreign unsubscribe are NotFound
    assert_eq!(
        ats.context(&agent("watcher")).unwrap().unsubscribe(sub),
        Err(ApiError::NotFound)
    );
    let other = ats
        .context(&agent("mover"))
        .unwrap()
        .subscribe(&[sym("ERIC")], &ClassId::new("instant"))
        .unwrap();
    assert_eq!(
        ats.context(&agent("watcher")).unwrap().unsubscribe(other),
        Err(ApiError::NotFound)
    );
}
