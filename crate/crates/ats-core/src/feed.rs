//! Delayed market data: CSV parsing, replay scheduling and the
//! book-seeding scheme that turns feed quotes into simulated liquidity.
//!
//! Feed CSV, one record per line:
//!
//! ```text
//! ISO8601_time,SYMBOL,bid,ask,last,volume
//! ```
//!
//! `#` begins a comment line. Prices are decimal currency with at most
//! two decimals and convert to integer minor units (x100), then to ticks
//! rounded to nearest with ties up. An empty bid/ask/last field means the
//! value is absent. Parsing is strict: any malformed field rejects the
//! whole file with its line number; records for symbols outside the
//! universe are dropped with a warning.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::types::{Price, Qty, Symbol};

/// One parsed feed record. Prices in minor currency units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedRecord {
    /// Feed timestamp as epoch milliseconds.
    pub wall_ms: u64,
    pub symbol: Symbol,
    pub bid_minor: Option<u64>,
    pub ask_minor: Option<u64>,
    pub last_minor: Option<u64>,
    pub volume: Qty,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeedError {
    MalformedRecord { line: usize, reason: String },
    OutOfOrder { line_time: u64, prev_time: u64 },
    Empty,
}

impl fmt::Display for FeedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedError::MalformedRecord { line, reason } => {
                write!(f, "malformed feed record at line {line}: {reason}")
            }
            FeedError::OutOfOrder {
                line_time,
                prev_time,
            } => write!(
                f,
                "records out of time order ({line_time} after {prev_time})"
            ),
            FeedError::Empty => f.write_str("empty replay schedule"),
        }
    }
}

impl core::error::Error for FeedError {}

/// Parse a feed file. Returns the records for known symbols plus one
/// warning line per dropped unknown-symbol record.
pub fn parse_feed(
    text: &str,
    universe: &BTreeSet<Symbol>,
) -> Result<(Vec<FeedRecord>, Vec<String>), FeedError> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec = parse_record(trimmed, line)?;
        if !universe.contains(&rec.symbol) {
            warnings.push(format!(
                "line {line}: dropping record for unknown symbol {}",
                rec.symbol
            ));
            continue;
        }
        records.push(rec);
    }
    Ok((records, warnings))
}

fn parse_record(line_text: &str, line: usize) -> Result<FeedRecord, FeedError> {
    let bad = |reason: String| FeedError::MalformedRecord { line, reason };
    let fields: Vec<&str> = line_text.split(',').collect();
    if fields.len() != 6 {
        return Err(bad(format!("expected 6 fields, found {}", fields.len())));
    }
    let wall_ms = parse_iso8601_ms(fields[0])
        .ok_or_else(|| bad(format!("bad timestamp '{}'", fields[0])))?;
    let symbol = fields[1].trim();
    if symbol.is_empty() {
        return Err(bad(String::from("empty symbol")));
    }
    let price_field = |s: &str, name: &str| -> Result<Option<u64>, FeedError> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(None);
        }
        decimal_to_minor(s)
            .map(Some)
            .ok_or_else(|| bad(format!("bad {name} price '{s}'")))
    };
    let bid_minor = price_field(fields[2], "bid")?;
    let ask_minor = price_field(fields[3], "ask")?;
    let last_minor = price_field(fields[4], "last")?;
    // crossed records (bid >= ask) are structurally fine here; the seeding
    // stage rejects them per record so one bad print cannot corrupt a book
    let volume: Qty = fields[5]
        .trim()
        .parse()
        .map_err(|_| bad(format!("bad volume '{}'", fields[5])))?;
    Ok(FeedRecord {
        wall_ms,
        symbol: Symbol::new(symbol),
        bid_minor,
        ask_minor,
        last_minor,
        volume,
    })
}

/// Decimal currency string to integer minor units (x100). At most two
/// decimals; no signs, no thousands separators.
pub fn decimal_to_minor(s: &str) -> Option<u64> {
    let (whole, frac) = match s.split_once('.') {
        Some((w, f)) => (w, f),
        None => (s, ""),
    };
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 2 {
        return None;
    }
    let whole_val: u64 = if whole.is_empty() {
        0
    } else {
        if !whole.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        whole.parse().ok()?
    };
    let frac_val: u64 = if frac.is_empty() {
        0
    } else {
        if !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let v: u64 = frac.parse().ok()?;
        if frac.len() == 1 {
            v * 10
        } else {
            v
        }
    };
    whole_val.checked_mul(100)?.checked_add(frac_val)
}

/// Minor units to ticks, rounded to nearest with ties up.
pub fn minor_to_ticks(minor: u64, tick_size: u64) -> Price {
    (2 * minor + tick_size) / (2 * tick_size)
}

/// Parse `YYYY-MM-DDTHH:MM:SS` (optional trailing `Z`) to epoch ms.
pub fn parse_iso8601_ms(s: &str) -> Option<u64> {
    let s = s.trim();
    let s = s.strip_suffix('Z').unwrap_or(s);
    let b = s.as_bytes();
    if b.len() != 19 || b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || b[13] != b':' || b[16] != b':'
    {
        return None;
    }
    let num = |r: core::ops::Range<usize>| -> Option<u64> {
        let part = &s[r];
        if !part.bytes().all(|c| c.is_ascii_digit()) {
            return None;
        }
        part.parse().ok()
    };
    let year = num(0..4)?;
    let month = num(5..7)?;
    let day = num(8..10)?;
    let hour = num(11..13)?;
    let minute = num(14..16)?;
    let second = num(17..19)?;
    if !(1..=12).contains(&month) || !(1..=31).contains(&day) {
        return None;
    }
    if hour > 23 || minute > 59 || second > 59 {
        return None;
    }
    let days = days_from_civil(year as i64, month as i64, day as i64);
    if days < 0 {
        return None;
    }
    Some((((days as u64 * 24 + hour) * 60 + minute) * 60 + second) * 1000)
}

/// Render records back to the CSV wire format. `parse_feed` of the
/// output yields the same records.
pub fn serialize_feed(records: &[FeedRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format_iso8601(r.wall_ms));
        out.push(',');
        out.push_str(r.symbol.as_str());
        let price = |v: Option<u64>| match v {
            Some(m) => format!("{}.{:02}", m / 100, m % 100),
            None => String::new(),
        };
        out.push_str(&format!(
            ",{},{},{},{}\n",
            price(r.bid_minor),
            price(r.ask_minor),
            price(r.last_minor),
            r.volume
        ));
    }
    out
}

/// Epoch milliseconds to `YYYY-MM-DDTHH:MM:SS` (whole seconds).
pub fn format_iso8601(wall_ms: u64) -> String {
    let secs = wall_ms / 1000;
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (y, m, d) = civil_from_days(days);
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
        y,
        m,
        d,
        rem / 3600,
        (rem / 60) % 60,
        rem % 60
    )
}

// Howard Hinnant's civil-days algorithms.
fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1_460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Replay plan: records in time order plus the uniform dissemination
/// delay (default 15 feed minutes). Emission offsets are in feed-time
/// milliseconds; the host replay driver divides by its speed factor.
#[derive(Clone, Debug)]
pub struct ReplaySchedule {
    records: Vec<FeedRecord>,
    pub delay_ms: u64,
}

pub const DEFAULT_FEED_DELAY_MS: u64 = 15 * 60 * 1000;

impl ReplaySchedule {
    /// Build a schedule, rejecting records out of time order.
    pub fn new(records: Vec<FeedRecord>, delay_ms: u64) -> Result<ReplaySchedule, FeedError> {
        if records.is_empty() {
            return Err(FeedError::Empty);
        }
        for w in records.windows(2) {
            if w[1].wall_ms < w[0].wall_ms {
                return Err(FeedError::OutOfOrder {
                    line_time: w[1].wall_ms,
                    prev_time: w[0].wall_ms,
                });
            }
        }
        Ok(ReplaySchedule { records, delay_ms })
    }

    pub fn records(&self) -> &[FeedRecord] {
        &self.records
    }

    /// Feed-time offset (ms from schedule start) at which record `i` is
    /// emitted: record time plus the uniform delay, rebased to the first
    /// record.
    pub fn emit_offset_ms(&self, i: usize) -> u64 {
        self.records[i].wall_ms - self.records[0].wall_ms + self.delay_ms
    }
}

/// Book seeding parameters: `levels` price levels per side, level `i`
/// sized `base_size * 2^i` shares (rounded to the lot grid).
#[derive(Clone, Copy, Debug)]
pub struct SeedParams {
    pub levels: u64,
    pub base_size: Qty,
}

/// Level sizes for one side under the geometric seeding scheme.
pub fn seed_level_size(params: &SeedParams, level: u64, lot_size: u64) -> Qty {
    let raw = params.base_size.max(lot_size) << level;
    let rounded = ((raw + lot_size / 2) / lot_size) * lot_size;
    rounded.max(lot_size)
}
