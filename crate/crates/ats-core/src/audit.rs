//! Append-only activity log plus the separate error stream.
//!
//! All logging in the server funnels through this module: other modules
//! emit entries, nothing else writes. Entries are immutable once
//! appended, carry a gapless global seq, and serialize to the XML schema
//! shipped in `docs/atslog.dtd`. The error stream (internal faults,
//! parser complaints, callback panics) is kept fully separate from the
//! activity document.
//!
//! Access control is role-total: an agent reads only entries bearing its
//! own id, a broker the entries of its member agents, the administrator
//! everything.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::agent::{AgentState, CancelReason, EventKind};
use crate::types::{AgentId, BrokerId, Cash, OrderId, Price, Qty, Side, Step, Symbol, WallTime};
use crate::xml;

/// Activity entry kinds.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LogKind {
    OrderPlaced,
    OrderPartial,
    OrderClosed,
    OrderCancelled,
    Trade,
    Fee,
    QuoteDelivered,
    AgentLifecycle,
    AdminAction,
    AgentNote,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::OrderPlaced => "ORDER_PLACED",
            LogKind::OrderPartial => "ORDER_PARTIAL",
            LogKind::OrderClosed => "ORDER_CLOSED",
            LogKind::OrderCancelled => "ORDER_CANCELLED",
            LogKind::Trade => "TRADE",
            LogKind::Fee => "FEE",
            LogKind::QuoteDelivered => "QUOTE_DELIVERED",
            LogKind::AgentLifecycle => "AGENT_LIFECYCLE",
            LogKind::AdminAction => "ADMIN_ACTION",
            LogKind::AgentNote => "AGENT_NOTE",
        }
    }

    pub fn parse(s: &str) -> Option<LogKind> {
        Some(match s {
            "ORDER_PLACED" => LogKind::OrderPlaced,
            "ORDER_PARTIAL" => LogKind::OrderPartial,
            "ORDER_CLOSED" => LogKind::OrderClosed,
            "ORDER_CANCELLED" => LogKind::OrderCancelled,
            "TRADE" => LogKind::Trade,
            "FEE" => LogKind::Fee,
            "QUOTE_DELIVERED" => LogKind::QuoteDelivered,
            "AGENT_LIFECYCLE" => LogKind::AgentLifecycle,
            "ADMIN_ACTION" => LogKind::AdminAction,
            "AGENT_NOTE" => LogKind::AgentNote,
            _ => return None,
        })
    }
}

/// Kind-specific payload. A trade is logged once per side (the entry's
/// agent is that side's owner), so self-trades show up as two entries
/// both flagged `self_trade`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogPayload {
    OrderPlaced {
        order_id: OrderId,
        symbol: Symbol,
        side: Side,
        price: Price,
        quantity: Qty,
    },
    OrderPartial {
        order_id: OrderId,
        price: Price,
        quantity: Qty,
        remaining: Qty,
    },
    OrderClosed {
        order_id: OrderId,
        quantity: Qty,
    },
    OrderCancelled {
        order_id: OrderId,
        cancelled_qty: Qty,
        reason: CancelReason,
    },
    Trade {
        trade_seq: u64,
        side: Side,
        price: Price,
        quantity: Qty,
        buy_order_id: OrderId,
        sell_order_id: OrderId,
        self_trade: bool,
    },
    Fee {
        amount: Cash,
        broker: BrokerId,
    },
    QuoteDelivered {
        subscription_id: u64,
        symbol: Symbol,
        event_kind: EventKind,
        event_step: Step,
        due_step: Step,
        fee: Cash,
    },
    AgentLifecycle {
        state: AgentState,
    },
    AdminAction {
        action: String,
        target: String,
    },
    AgentNote {
        text: String,
    },
}

impl LogPayload {
    pub fn kind(&self) -> LogKind {
        match self {
            LogPayload::OrderPlaced { .. } => LogKind::OrderPlaced,
            LogPayload::OrderPartial { .. } => LogKind::OrderPartial,
            LogPayload::OrderClosed { .. } => LogKind::OrderClosed,
            LogPayload::OrderCancelled { .. } => LogKind::OrderCancelled,
            LogPayload::Trade { .. } => LogKind::Trade,
            LogPayload::Fee { .. } => LogKind::Fee,
            LogPayload::QuoteDelivered { .. } => LogKind::QuoteDelivered,
            LogPayload::AgentLifecycle { .. } => LogKind::AgentLifecycle,
            LogPayload::AdminAction { .. } => LogKind::AdminAction,
            LogPayload::AgentNote { .. } => LogKind::AgentNote,
        }
    }

    /// Completeness check applied at append time.
    fn validate(&self, agent: Option<&AgentId>) -> Result<(), AuditError> {
        let incomplete = |what: &'static str| Err(AuditError::PayloadIncomplete(what));
        if agent.is_none() && self.kind() != LogKind::AdminAction {
            return incomplete("agent id required for this kind");
        }
        match self {
            LogPayload::OrderPlaced {
                order_id,
                symbol,
                quantity,
                ..
            } => {
                if order_id.0 == 0 {
                    return incomplete("order id missing");
                }
                if symbol.as_str().is_empty() {
                    return incomplete("symbol missing");
                }
                if *quantity == 0 {
                    return incomplete("quantity missing");
                }
            }
            LogPayload::OrderPartial {
                order_id, quantity, ..
            }
            | LogPayload::OrderClosed {
                order_id, quantity, ..
            } => {
                if order_id.0 == 0 {
                    return incomplete("order id missing");
                }
                if *quantity == 0 {
                    return incomplete("quantity missing");
                }
            }
            LogPayload::OrderCancelled {
                order_id,
                cancelled_qty,
                ..
            } => {
                if order_id.0 == 0 {
                    return incomplete("order id missing");
                }
                if *cancelled_qty == 0 {
                    return incomplete("cancelled quantity missing");
                }
            }
            LogPayload::Trade {
                trade_seq,
                quantity,
                buy_order_id,
                sell_order_id,
                ..
            } => {
                if *trade_seq == 0 || buy_order_id.0 == 0 || sell_order_id.0 == 0 {
                    return incomplete("trade ids missing");
                }
                if buy_order_id == sell_order_id {
                    return incomplete("buy and sell order ids equal");
                }
                if *quantity == 0 {
                    return incomplete("quantity missing");
                }
            }
            LogPayload::Fee { amount, broker } => {
                if broker.as_str().is_empty() {
                    return incomplete("broker missing");
                }
                if *amount < 0 {
                    return incomplete("negative fee");
                }
            }
            LogPayload::QuoteDelivered {
                subscription_id,
                symbol,
                ..
            } => {
                if *subscription_id == 0 {
                    return incomplete("subscription id missing");
                }
                if symbol.as_str().is_empty() {
                    return incomplete("symbol missing");
                }
            }
            LogPayload::AdminAction { action, .. } => {
                if action.is_empty() {
                    return incomplete("action missing");
                }
            }
            LogPayload::AgentLifecycle { .. } | LogPayload::AgentNote { .. } => {}
        }
        Ok(())
    }
}

/// One immutable activity record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    /// Gapless global sequence, starting at 1.
    pub seq: u64,
    pub wall_time: WallTime,
    /// Logical step of the action this entry records.
    pub step: Step,
    /// Owning agent; absent only for system-level entries.
    pub agent_id: Option<AgentId>,
    pub payload: LogPayload,
}

impl LogEntry {
    pub fn kind(&self) -> LogKind {
        self.payload.kind()
    }
}

/// One record on the separate error stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErrorEntry {
    pub seq: u64,
    pub wall_time: WallTime,
    pub origin: String,
    pub text: String,
}

/// Inclusive seq range for reads and exports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeqRange {
    pub from: u64,
    pub to: u64,
}

impl SeqRange {
    pub fn all() -> SeqRange {
        SeqRange {
            from: 1,
            to: u64::MAX,
        }
    }

    pub fn contains(&self, seq: u64) -> bool {
        seq >= self.from && seq <= self.to
    }
}

/// What a requester is allowed to see.
#[derive(Clone, Debug)]
pub enum Visibility {
    /// Administrator: everything.
    All,
    /// A fixed set of agent ids (the agent itself, or a broker's members).
    Agents(BTreeSet<AgentId>),
}

impl Visibility {
    pub fn of_agent(agent: &AgentId) -> Visibility {
        Visibility::Agents(BTreeSet::from([agent.clone()]))
    }

    pub fn can_see(&self, entry: &LogEntry) -> bool {
        match self {
            Visibility::All => true,
            Visibility::Agents(set) => entry
                .agent_id
                .as_ref()
                .is_some_and(|a| set.contains(a)),
        }
    }
}

/// Query filter: all fields conjunctive.
#[derive(Clone, Debug, Default)]
pub struct LogFilter {
    pub agent: Option<AgentId>,
    pub kind: Option<LogKind>,
    pub step_range: Option<(Step, Step)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditError {
    PayloadIncomplete(&'static str),
    AccessDenied,
    RangeInvalid,
    SchemaViolation(String),
}

impl fmt::Display for AuditError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuditError::PayloadIncomplete(what) => write!(f, "payload incomplete: {what}"),
            AuditError::AccessDenied => write!(f, "access denied"),
            AuditError::RangeInvalid => write!(f, "invalid range"),
            AuditError::SchemaViolation(why) => write!(f, "schema violation: {why}"),
        }
    }
}

impl core::error::Error for AuditError {}

/// The append-only log pair: activity entries and the error stream.
#[derive(Default)]
pub struct AuditLog {
    entries: Vec<LogEntry>,
    errors: Vec<ErrorEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        AuditLog::default()
    }

    /// Append one activity entry, assigning the next seq.
    pub fn append(
        &mut self,
        wall_time: WallTime,
        step: Step,
        agent_id: Option<AgentId>,
        payload: LogPayload,
    ) -> Result<u64, AuditError> {
        payload.validate(agent_id.as_ref())?;
        let seq = self.entries.len() as u64 + 1;
        self.entries.push(LogEntry {
            seq,
            wall_time,
            step,
            agent_id,
            payload,
        });
        Ok(seq)
    }

    pub fn append_error(&mut self, wall_time: WallTime, origin: &str, text: &str) -> u64 {
        let seq = self.errors.len() as u64 + 1;
        self.errors.push(ErrorEntry {
            seq,
            wall_time,
            origin: origin.to_string(),
            text: text.to_string(),
        });
        seq
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn errors(&self) -> &[ErrorEntry] {
        &self.errors
    }

    pub fn last_seq(&self) -> u64 {
        self.entries.len() as u64
    }

    /// Role-checked query. Asking explicitly for an agent outside the
    /// requester's visibility is denied rather than silently empty.
    pub fn query(
        &self,
        visibility: &Visibility,
        filter: &LogFilter,
    ) -> Result<Vec<LogEntry>, AuditError> {
        if let (Some(agent), Visibility::Agents(set)) = (&filter.agent, visibility) {
            if !set.contains(agent) {
                return Err(AuditError::AccessDenied);
            }
        }
        if let Some((from, to)) = filter.step_range {
            if from > to {
                return Err(AuditError::RangeInvalid);
            }
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| visibility.can_see(e))
            .filter(|e| filter.agent.as_ref().is_none_or(|a| e.agent_id.as_ref() == Some(a)))
            .filter(|e| filter.kind.is_none_or(|k| e.kind() == k))
            .filter(|e| {
                filter
                    .step_range
                    .is_none_or(|(from, to)| e.step >= from && e.step <= to)
            })
            .cloned()
            .collect())
    }

    /// Entries of one agent within a seq range, oldest first.
    pub fn read_own(&self, agent: &AgentId, range: SeqRange) -> Result<Vec<LogEntry>, AuditError> {
        if range.from > range.to {
            return Err(AuditError::RangeInvalid);
        }
        Ok(self
            .entries
            .iter()
            .filter(|e| range.contains(e.seq) && e.agent_id.as_ref() == Some(agent))
            .cloned()
            .collect())
    }

    /// Export a seq range as an XML document. The requester must be
    /// allowed to see every entry in the range.
    pub fn export_xml(&self, visibility: &Visibility, range: SeqRange) -> Result<String, AuditError> {
        if range.from > range.to {
            return Err(AuditError::RangeInvalid);
        }
        let in_range: Vec<&LogEntry> = self
            .entries
            .iter()
            .filter(|e| range.contains(e.seq))
            .collect();
        if in_range.iter().any(|e| !visibility.can_see(e)) {
            return Err(AuditError::AccessDenied);
        }
        Ok(entries_to_xml(in_range.into_iter()))
    }

    /// Export the error stream (administrator only; enforced by caller).
    pub fn export_errors_xml(&self, range: SeqRange) -> Result<String, AuditError> {
        if range.from > range.to {
            return Err(AuditError::RangeInvalid);
        }
        let errs: Vec<&ErrorEntry> = self
            .errors
            .iter()
            .filter(|e| range.contains(e.seq))
            .collect();
        if errs.is_empty() {
            return Ok(String::from("<atserrors/>\n"));
        }
        let mut out = String::from("<atserrors>\n");
        for e in errs {
            out.push_str(&alloc::format!(
                "  <error seq=\"{}\" t=\"{}\" origin=\"{}\">{}</error>\n",
                e.seq,
                e.wall_time,
                xml::escape(&e.origin),
                xml::escape(&e.text)
            ));
        }
        out.push_str("</atserrors>\n");
        Ok(out)
    }
}

/// Build the activity document for an arbitrary entry list (used both by
/// range export and by filtered CLI export).
pub fn entries_to_xml<'a>(entries: impl Iterator<Item = &'a LogEntry>) -> String {
    let mut body = String::new();
    let mut any = false;
    for e in entries {
        any = true;
        body.push_str("  <entry seq=\"");
        body.push_str(&e.seq.to_string());
        body.push_str("\" step=\"");
        body.push_str(&e.step.to_string());
        body.push_str("\" t=\"");
        body.push_str(&e.wall_time.to_string());
        body.push('"');
        if let Some(agent) = &e.agent_id {
            body.push_str(" agent=\"");
            body.push_str(&xml::escape(agent.as_str()));
            body.push('"');
        }
        body.push_str(" kind=\"");
        body.push_str(e.kind().as_str());
        body.push_str("\">");
        body.push_str(&payload_to_xml(&e.payload));
        body.push_str("</entry>\n");
    }
    if !any {
        return String::from("<atslog version=\"1\"/>\n");
    }
    let mut out = String::from("<atslog version=\"1\">\n");
    out.push_str(&body);
    out.push_str("</atslog>\n");
    out
}

fn payload_to_xml(p: &LogPayload) -> String {
    use alloc::format;
    match p {
        LogPayload::OrderPlaced {
            order_id,
            symbol,
            side,
            price,
            quantity,
        } => format!(
            "<order id=\"{}\" symbol=\"{}\" side=\"{}\" px=\"{}\" qty=\"{}\"/>",
            order_id,
            xml::escape(symbol.as_str()),
            side,
            price,
            quantity
        ),
        LogPayload::OrderPartial {
            order_id,
            price,
            quantity,
            remaining,
        } => format!(
            "<fill id=\"{order_id}\" px=\"{price}\" qty=\"{quantity}\" remaining=\"{remaining}\"/>"
        ),
        LogPayload::OrderClosed { order_id, quantity } => {
            format!("<close id=\"{order_id}\" qty=\"{quantity}\"/>")
        }
        LogPayload::OrderCancelled {
            order_id,
            cancelled_qty,
            reason,
        } => format!(
            "<cancel id=\"{}\" qty=\"{}\" reason=\"{}\"/>",
            order_id,
            cancelled_qty,
            reason.as_str()
        ),
        LogPayload::Trade {
            trade_seq,
            side,
            price,
            quantity,
            buy_order_id,
            sell_order_id,
            self_trade,
        } => format!(
            "<trade id=\"{trade_seq}\" side=\"{side}\" px=\"{price}\" qty=\"{quantity}\" buy=\"{buy_order_id}\" sell=\"{sell_order_id}\" self=\"{self_trade}\"/>"
        ),
        LogPayload::Fee { amount, broker } => format!(
            "<fee amount=\"{}\" broker=\"{}\"/>",
            amount,
            xml::escape(broker.as_str())
        ),
        LogPayload::QuoteDelivered {
            subscription_id,
            symbol,
            event_kind,
            event_step,
            due_step,
            fee,
        } => format!(
            "<delivery sub=\"{}\" symbol=\"{}\" kind=\"{}\" event=\"{}\" due=\"{}\" fee=\"{}\"/>",
            subscription_id,
            xml::escape(symbol.as_str()),
            event_kind.as_str(),
            event_step,
            due_step,
            fee
        ),
        LogPayload::AgentLifecycle { state } => {
            format!("<lifecycle state=\"{}\"/>", state.as_str())
        }
        LogPayload::AdminAction { action, target } => format!(
            "<admin action=\"{}\" target=\"{}\"/>",
            xml::escape(action),
            xml::escape(target)
        ),
        LogPayload::AgentNote { text } => format!("<note>{}</note>", xml::escape(text)),
    }
}

/// Parse an activity document back into entries. Strict: unknown
/// elements, unknown or missing attributes, and malformed values are all
/// schema violations.
pub fn import_xml(doc: &str) -> Result<Vec<LogEntry>, AuditError> {
    let violation = |why: &str| AuditError::SchemaViolation(String::from(why));
    let mut cur = xml::Cursor::new(doc);
    let root = cur
        .expect_open()
        .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
    if root.name != "atslog" {
        return Err(violation("root element must be atslog"));
    }
    check_attrs(&root, &["version"])?;
    if root.attr("version") != Some("1") {
        return Err(violation("unsupported atslog version"));
    }
    let mut entries = Vec::new();
    if root.self_closing {
        if !cur.at_end() {
            return Err(violation("content after self-closed root"));
        }
        return Ok(entries);
    }
    while !cur.peek_close("atslog") {
        if cur.at_end() {
            return Err(violation("unterminated atslog document"));
        }
        let tag = cur
            .expect_open()
            .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
        if tag.name != "entry" || tag.self_closing {
            return Err(violation("expected <entry> element"));
        }
        entries.push(parse_entry(&tag, &mut cur)?);
        cur.expect_close("entry")
            .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
    }
    cur.expect_close("atslog")
        .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
    if !cur.at_end() {
        return Err(violation("content after closing root"));
    }
    Ok(entries)
}

fn check_attrs(tag: &xml::Tag, allowed: &[&str]) -> Result<(), AuditError> {
    for (name, _) in &tag.attrs {
        if !allowed.contains(&name.as_str()) {
            return Err(AuditError::SchemaViolation(alloc::format!(
                "unexpected attribute '{name}' on <{}>",
                tag.name
            )));
        }
    }
    Ok(())
}

fn req<'t>(tag: &'t xml::Tag, name: &str) -> Result<&'t str, AuditError> {
    tag.attr(name).ok_or_else(|| {
        AuditError::SchemaViolation(alloc::format!(
            "missing attribute '{name}' on <{}>",
            tag.name
        ))
    })
}

fn req_u64(tag: &xml::Tag, name: &str) -> Result<u64, AuditError> {
    req(tag, name)?
        .parse::<u64>()
        .map_err(|_| AuditError::SchemaViolation(alloc::format!("attribute '{name}' not a number")))
}

fn req_i64(tag: &xml::Tag, name: &str) -> Result<i64, AuditError> {
    req(tag, name)?
        .parse::<i64>()
        .map_err(|_| AuditError::SchemaViolation(alloc::format!("attribute '{name}' not a number")))
}

fn parse_entry(tag: &xml::Tag, cur: &mut xml::Cursor<'_>) -> Result<LogEntry, AuditError> {
    check_attrs(tag, &["seq", "step", "t", "agent", "kind"])?;
    let seq = req_u64(tag, "seq")?;
    let step = req_u64(tag, "step")?;
    let wall_time = req_u64(tag, "t")?;
    let agent_id = tag.attr("agent").map(AgentId::new);
    let kind = LogKind::parse(req(tag, "kind")?)
        .ok_or_else(|| AuditError::SchemaViolation(String::from("unknown entry kind")))?;

    let child = cur
        .expect_open()
        .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
    let payload = parse_payload(kind, &child, cur)?;
    if payload.kind() != kind {
        return Err(AuditError::SchemaViolation(String::from(
            "payload element does not match entry kind",
        )));
    }
    Ok(LogEntry {
        seq,
        wall_time,
        step,
        agent_id,
        payload,
    })
}

fn parse_payload(
    kind: LogKind,
    tag: &xml::Tag,
    cur: &mut xml::Cursor<'_>,
) -> Result<LogPayload, AuditError> {
    let violation = |why: &str| AuditError::SchemaViolation(String::from(why));
    let expect_name = |want: &str| -> Result<(), AuditError> {
        if tag.name != want {
            return Err(AuditError::SchemaViolation(alloc::format!(
                "expected <{want}> child for {} entry, found <{}>",
                kind.as_str(),
                tag.name
            )));
        }
        if !tag.self_closing && want != "note" {
            return Err(AuditError::SchemaViolation(alloc::format!(
                "<{want}> must be self-closing"
            )));
        }
        Ok(())
    };
    match kind {
        LogKind::OrderPlaced => {
            expect_name("order")?;
            check_attrs(tag, &["id", "symbol", "side", "px", "qty"])?;
            Ok(LogPayload::OrderPlaced {
                order_id: OrderId(req_u64(tag, "id")?),
                symbol: Symbol::new(req(tag, "symbol")?),
                side: Side::parse(req(tag, "side")?).ok_or_else(|| violation("bad side"))?,
                price: req_u64(tag, "px")?,
                quantity: req_u64(tag, "qty")?,
            })
        }
        LogKind::OrderPartial => {
            expect_name("fill")?;
            check_attrs(tag, &["id", "px", "qty", "remaining"])?;
            Ok(LogPayload::OrderPartial {
                order_id: OrderId(req_u64(tag, "id")?),
                price: req_u64(tag, "px")?,
                quantity: req_u64(tag, "qty")?,
                remaining: req_u64(tag, "remaining")?,
            })
        }
        LogKind::OrderClosed => {
            expect_name("close")?;
            check_attrs(tag, &["id", "qty"])?;
            Ok(LogPayload::OrderClosed {
                order_id: OrderId(req_u64(tag, "id")?),
                quantity: req_u64(tag, "qty")?,
            })
        }
        LogKind::OrderCancelled => {
            expect_name("cancel")?;
            check_attrs(tag, &["id", "qty", "reason"])?;
            Ok(LogPayload::OrderCancelled {
                order_id: OrderId(req_u64(tag, "id")?),
                cancelled_qty: req_u64(tag, "qty")?,
                reason: CancelReason::parse(req(tag, "reason")?)
                    .ok_or_else(|| violation("bad cancel reason"))?,
            })
        }
        LogKind::Trade => {
            expect_name("trade")?;
            check_attrs(tag, &["id", "side", "px", "qty", "buy", "sell", "self"])?;
            let self_trade = match req(tag, "self")? {
                "true" => true,
                "false" => false,
                _ => return Err(violation("bad self flag")),
            };
            Ok(LogPayload::Trade {
                trade_seq: req_u64(tag, "id")?,
                side: Side::parse(req(tag, "side")?).ok_or_else(|| violation("bad side"))?,
                price: req_u64(tag, "px")?,
                quantity: req_u64(tag, "qty")?,
                buy_order_id: OrderId(req_u64(tag, "buy")?),
                sell_order_id: OrderId(req_u64(tag, "sell")?),
                self_trade,
            })
        }
        LogKind::Fee => {
            expect_name("fee")?;
            check_attrs(tag, &["amount", "broker"])?;
            Ok(LogPayload::Fee {
                amount: req_i64(tag, "amount")?,
                broker: BrokerId::new(req(tag, "broker")?),
            })
        }
        LogKind::QuoteDelivered => {
            expect_name("delivery")?;
            check_attrs(tag, &["sub", "symbol", "kind", "event", "due", "fee"])?;
            Ok(LogPayload::QuoteDelivered {
                subscription_id: req_u64(tag, "sub")?,
                symbol: Symbol::new(req(tag, "symbol")?),
                event_kind: EventKind::parse(req(tag, "kind")?)
                    .ok_or_else(|| violation("bad event kind"))?,
                event_step: req_u64(tag, "event")?,
                due_step: req_u64(tag, "due")?,
                fee: req_i64(tag, "fee")?,
            })
        }
        LogKind::AgentLifecycle => {
            expect_name("lifecycle")?;
            check_attrs(tag, &["state"])?;
            Ok(LogPayload::AgentLifecycle {
                state: AgentState::parse(req(tag, "state")?)
                    .ok_or_else(|| violation("bad lifecycle state"))?,
            })
        }
        LogKind::AdminAction => {
            expect_name("admin")?;
            check_attrs(tag, &["action", "target"])?;
            Ok(LogPayload::AdminAction {
                action: String::from(req(tag, "action")?),
                target: String::from(req(tag, "target")?),
            })
        }
        LogKind::AgentNote => {
            expect_name("note")?;
            check_attrs(tag, &[])?;
            if tag.self_closing {
                return Ok(LogPayload::AgentNote {
                    text: String::new(),
                });
            }
            let text = cur
                .read_text()
                .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
            cur.expect_close("note")
                .map_err(|e| AuditError::SchemaViolation(e.to_string()))?;
            Ok(LogPayload::AgentNote { text })
        }
    }
}
