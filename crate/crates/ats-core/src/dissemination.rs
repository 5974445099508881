//! Latency-tiered fan-out of market events to subscribers.
//!
//! Every published event is queued once per matching subscription with a
//! due step of `event step + class delay`, so all subscribers of one
//! class see any given event at exactly the same logical step. Draining
//! bills the class fee per delivered event through a caller-supplied
//! payment hook; an unaffordable fee suspends (never drops) the rest of
//! the queue and marks the subscription delinquent until a later drain
//! succeeds again.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};
use core::fmt;

use crate::agent::MarketEvent;
use crate::types::{AgentId, Cash, ClassId, Step, Symbol};

/// A dissemination tier: delivery delay in logical steps and the fee
/// billed per delivered event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatencyClass {
    pub class_id: ClassId,
    pub delay_steps: u64,
    pub fee_per_event: Cash,
}

/// Subscription id, unique per runtime.
pub type SubscriptionId = u64;

/// An agent's standing interest in a set of symbols at one latency class.
#[derive(Clone, Debug)]
pub struct Subscription {
    pub subscription_id: SubscriptionId,
    pub agent_id: AgentId,
    pub symbols: BTreeSet<Symbol>,
    pub latency_class_id: ClassId,
    pub delinquent: bool,
}

/// A queued delivery: the event plus the step at which it becomes due.
#[derive(Clone, Debug)]
pub struct Delivery {
    pub due_step: Step,
    pub event: MarketEvent,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DisseminationError {
    UnknownLatencyClass(ClassId),
    UnknownSubscription(SubscriptionId),
    DuplicateClass(ClassId),
}

impl fmt::Display for DisseminationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisseminationError::UnknownLatencyClass(c) => write!(f, "unknown latency class {c}"),
            DisseminationError::UnknownSubscription(s) => write!(f, "unknown subscription {s}"),
            DisseminationError::DuplicateClass(c) => write!(f, "latency class {c} defined twice"),
        }
    }
}

impl core::error::Error for DisseminationError {}

/// Result of draining one subscription.
#[derive(Debug, Default)]
pub struct DrainOutcome {
    /// Delivered events with the fee billed for each, in due order.
    pub delivered: Vec<(Delivery, Cash)>,
    /// True when an unaffordable fee suspended delivery mid-queue. Set
    /// exactly on the transition into delinquency.
    pub suspended_now: bool,
}

struct SubState {
    sub: Subscription,
    queue: Vec<Delivery>,
}

/// The fan-out core: configured latency classes plus all live
/// subscriptions and their pending delivery queues.
pub struct Dissemination {
    classes: BTreeMap<ClassId, LatencyClass>,
    subs: BTreeMap<SubscriptionId, SubState>,
    next_subscription_id: SubscriptionId,
}

impl Dissemination {
    /// Build from the configured classes. Returns the fan-out plus
    /// non-fatal configuration warnings (a cheaper class with a lower
    /// delay than a costlier one is suspicious but allowed).
    pub fn new(classes: Vec<LatencyClass>) -> Result<(Self, Vec<String>), DisseminationError> {
        let mut map = BTreeMap::new();
        for c in classes {
            if map.contains_key(&c.class_id) {
                return Err(DisseminationError::DuplicateClass(c.class_id));
            }
            map.insert(c.class_id.clone(), c);
        }
        let mut warnings = Vec::new();
        let all: Vec<&LatencyClass> = map.values().collect();
        for a in &all {
            for b in &all {
                if a.fee_per_event < b.fee_per_event && a.delay_steps < b.delay_steps {
                    warnings.push(format!(
                        "latency class {} is cheaper and faster than {}",
                        a.class_id, b.class_id
                    ));
                }
            }
        }
        Ok((
            Dissemination {
                classes: map,
                subs: BTreeMap::new(),
                next_subscription_id: 0,
            },
            warnings,
        ))
    }

    pub fn class(&self, id: &ClassId) -> Option<&LatencyClass> {
        self.classes.get(id)
    }

    pub fn subscription(&self, id: SubscriptionId) -> Option<&Subscription> {
        self.subs.get(&id).map(|s| &s.sub)
    }

    pub fn subscription_ids(&self) -> Vec<SubscriptionId> {
        self.subs.keys().copied().collect()
    }

    /// Open a subscription. Re-subscribing to a symbol replaces its
    /// latency class: the symbol is moved out of any older subscription
    /// of the same agent (already-queued deliveries stay queued at the
    /// delay they were published under).
    pub fn subscribe(
        &mut self,
        agent_id: AgentId,
        symbols: BTreeSet<Symbol>,
        class_id: ClassId,
    ) -> Result<SubscriptionId, DisseminationError> {
        if !self.classes.contains_key(&class_id) {
            return Err(DisseminationError::UnknownLatencyClass(class_id));
        }
        let mut emptied = vec![];
        for (id, st) in self.subs.iter_mut() {
            if st.sub.agent_id == agent_id {
                for sym in &symbols {
                    st.sub.symbols.remove(sym);
                }
                if st.sub.symbols.is_empty() {
                    emptied.push(*id);
                }
            }
        }
        for id in emptied {
            self.subs.remove(&id);
        }
        self.next_subscription_id += 1;
        let id = self.next_subscription_id;
        self.subs.insert(
            id,
            SubState {
                sub: Subscription {
                    subscription_id: id,
                    agent_id,
                    symbols,
                    latency_class_id: class_id,
                    delinquent: false,
                },
                queue: Vec::new(),
            },
        );
        Ok(id)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> Result<(), DisseminationError> {
        self.subs
            .remove(&id)
            .map(|_| ())
            .ok_or(DisseminationError::UnknownSubscription(id))
    }

    /// Drop every subscription of an agent (stop/kill path). Pending
    /// undelivered events are discarded unbilled.
    pub fn remove_agent(&mut self, agent_id: &AgentId) {
        self.subs.retain(|_, st| st.sub.agent_id != *agent_id);
    }

    /// Fan one event out to every matching subscription.
    pub fn publish(&mut self, event: &MarketEvent) {
        for st in self.subs.values_mut() {
            if !st.sub.symbols.contains(&event.symbol) {
                continue;
            }
            let delay = self.classes[&st.sub.latency_class_id].delay_steps;
            let delivery = Delivery {
                due_step: event.step + delay,
                event: event.clone(),
            };
            // keep the queue ordered by (due_step, event step); a
            // re-subscription at a shorter delay can make a fresh event
            // due before older queued ones
            let at = st
                .queue
                .iter()
                .rposition(|d| {
                    (d.due_step, d.event.step) <= (delivery.due_step, delivery.event.step)
                })
                .map(|i| i + 1)
                .unwrap_or(0);
            st.queue.insert(at, delivery);
        }
    }

    /// Deliver every queued event due at or before `now_step`, billing
    /// `fee_per_event` per event through `pay`. `pay` returns false when
    /// the subscriber cannot afford the fee; delivery then suspends with
    /// the remaining queue intact.
    pub fn drain_due(
        &mut self,
        id: SubscriptionId,
        now_step: Step,
        pay: &mut dyn FnMut(Cash) -> bool,
    ) -> Result<DrainOutcome, DisseminationError> {
        let st = self
            .subs
            .get_mut(&id)
            .ok_or(DisseminationError::UnknownSubscription(id))?;
        let fee = self.classes[&st.sub.latency_class_id].fee_per_event;
        let mut out = DrainOutcome::default();
        while let Some(front) = st.queue.first() {
            if front.due_step > now_step {
                break;
            }
            if !pay(fee) {
                if !st.sub.delinquent {
                    st.sub.delinquent = true;
                    out.suspended_now = true;
                }
                return Ok(out);
            }
            st.sub.delinquent = false;
            out.delivered.push((st.queue.remove(0), fee));
        }
        Ok(out)
    }

    /// Total queued deliveries across all subscriptions (diagnostics).
    pub fn pending(&self) -> usize {
        self.subs.values().map(|s| s.queue.len()).sum()
    }
}
