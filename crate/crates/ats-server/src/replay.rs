//! Wall-clock feed replay: parses a feed file, builds the schedule and
//! drives records into the runtime at the configured speed factor.
//!
//! Speed is feed seconds per wall second, so two records 60 feed-seconds
//! apart replay ~1 s apart at speed 60. The driver is the only producer
//! of market-data actions and never touches state outside the lock.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::Result;

use ats_core::feed::{parse_feed, ReplaySchedule};
use ats_core::runtime::Ats;
use ats_core::types::Symbol;

#[derive(Debug, Default)]
pub struct ReplayStats {
    pub applied: usize,
    pub skipped_crossed: usize,
    pub warnings: usize,
}

/// Parse and replay a feed text against the runtime. `delay_ms` is the
/// uniform dissemination delay applied to the schedule; the wall pace is
/// `speed` feed-seconds per wall second.
pub fn replay_text(
    state: &Arc<Mutex<Ats>>,
    text: &str,
    speed: f64,
    delay_ms: u64,
) -> Result<ReplayStats> {
    let universe: BTreeSet<Symbol> = {
        let ats = state.lock().unwrap();
        ats.market().instruments().map(|i| i.symbol.clone()).collect()
    };
    let (records, warnings) = parse_feed(text, &universe)?;
    {
        let mut ats = state.lock().unwrap();
        for w in &warnings {
            ats.log_feed_warning(w);
        }
    }
    if records.is_empty() {
        return Ok(ReplayStats {
            warnings: warnings.len(),
            ..ReplayStats::default()
        });
    }
    let schedule = ReplaySchedule::new(records, delay_ms)?;
    let stats = run_schedule(state, &schedule, speed, std::thread::sleep);
    Ok(ReplayStats {
        applied: stats.applied,
        skipped_crossed: stats.skipped_crossed,
        warnings: warnings.len(),
    })
}

/// Drive an already-built schedule. The sleeper is injectable so tests
/// replay instantly.
pub fn run_schedule(
    state: &Arc<Mutex<Ats>>,
    schedule: &ReplaySchedule,
    speed: f64,
    mut sleeper: impl FnMut(Duration),
) -> ReplayStats {
    let mut stats = ReplayStats::default();
    let start = Instant::now();
    let base = schedule.emit_offset_ms(0);
    for (i, record) in schedule.records().iter().enumerate() {
        let feed_offset = schedule.emit_offset_ms(i) - base;
        let wall_offset = Duration::from_millis((feed_offset as f64 / speed) as u64);
        let elapsed = start.elapsed();
        if wall_offset > elapsed {
            sleeper(wall_offset - elapsed);
        }
        let mut ats = state.lock().unwrap();
        match ats.apply_feed_record(record) {
            Ok(()) => stats.applied += 1,
            Err(_) => stats.skipped_crossed += 1,
        }
    }
    stats
}
