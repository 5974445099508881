//! Server configuration file: documented JSON covering the instrument
//! universe, starting balances, broker fee schedules and tokens, latency
//! classes, grace periods, the feed source and the listen address.
//!
//! ```json
//! {
//!   "listen": "127.0.0.1:7450",
//!   "admin_token": "admin-secret",
//!   "starting_cash": 10000000,
//!   "universe": [ { "symbol": "ERIC", "tick_size": 5, "lot_size": 1 } ],
//!   "latency_classes": [ { "class_id": "instant", "delay_steps": 0, "fee_per_event": 2 } ],
//!   "brokers": [ { "broker_id": "alpha", "token": "alpha-secret",
//!                  "per_trade_fixed": 0, "per_notional_bps": 0 } ],
//!   "developers": [ { "developer_id": "dev1", "key": "<64 hex chars>" } ],
//!   "agent_overrides": { "guard1": { "cash": 5000000, "positions": { "NOKI": 100 } } },
//!   "seed_levels": 3,
//!   "seed_base_size": 100,
//!   "grace_ms": 1000,
//!   "heartbeat_interval_ms": 5000,
//!   "heartbeat_timeout_ms": 15000,
//!   "feed": { "file": "data/sample_feed.csv", "speed": 60.0, "delay_secs": 900 }
//! }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ats_core::dissemination::LatencyClass;
use ats_core::market::Instrument;
use ats_core::runtime::{RuntimeConfig, StartingBalances};
use ats_core::types::{BrokerId, Cash, ClassId, DeveloperId, Symbol};
use ats_core::{FeeSchedule, SeedParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstrumentConfig {
    pub symbol: String,
    pub tick_size: u64,
    pub lot_size: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatencyClassConfig {
    pub class_id: String,
    pub delay_steps: u64,
    pub fee_per_event: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BrokerConfig {
    pub broker_id: String,
    /// Role credential presented on the operator command channel.
    pub token: String,
    #[serde(default)]
    pub per_trade_fixed: i64,
    #[serde(default)]
    pub per_notional_bps: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeveloperConfig {
    pub developer_id: String,
    /// Hex-encoded 32-byte verification key.
    pub key: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct BalanceOverride {
    pub cash: Option<Cash>,
    #[serde(default)]
    pub positions: BTreeMap<String, i64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedConfig {
    pub file: String,
    /// Replay speed factor: feed seconds per wall second.
    #[serde(default = "default_speed")]
    pub speed: f64,
    /// Emulated dissemination delay in feed seconds.
    #[serde(default = "default_delay_secs")]
    pub delay_secs: u64,
}

fn default_speed() -> f64 {
    60.0
}

fn default_delay_secs() -> u64 {
    ats_core::feed::DEFAULT_FEED_DELAY_MS / 1000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServerConfig {
    pub listen: String,
    pub admin_token: String,
    pub starting_cash: Cash,
    pub universe: Vec<InstrumentConfig>,
    pub latency_classes: Vec<LatencyClassConfig>,
    pub brokers: Vec<BrokerConfig>,
    #[serde(default)]
    pub developers: Vec<DeveloperConfig>,
    #[serde(default)]
    pub agent_overrides: BTreeMap<String, BalanceOverride>,
    #[serde(default = "default_seed_levels")]
    pub seed_levels: u64,
    #[serde(default = "default_seed_base")]
    pub seed_base_size: u64,
    /// Grace period before a disconnected agent is force-stopped.
    #[serde(default = "default_grace_ms")]
    pub grace_ms: u64,
    #[serde(default = "default_hb_interval")]
    pub heartbeat_interval_ms: u64,
    #[serde(default = "default_hb_timeout")]
    pub heartbeat_timeout_ms: u64,
    #[serde(default)]
    pub feed: Option<FeedConfig>,
}

fn default_seed_levels() -> u64 {
    3
}
fn default_seed_base() -> u64 {
    100
}
fn default_grace_ms() -> u64 {
    1000
}
fn default_hb_interval() -> u64 {
    5000
}
fn default_hb_timeout() -> u64 {
    15000
}

impl ServerConfig {
    pub fn load(path: &Path) -> Result<ServerConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ServerConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.universe.is_empty() {
            bail!("universe must list at least one instrument");
        }
        if self.admin_token.is_empty() {
            bail!("admin_token must be non-empty");
        }
        for b in &self.brokers {
            if b.token.is_empty() {
                bail!("broker {} has an empty token", b.broker_id);
            }
            if b.token == self.admin_token {
                bail!("broker {} token collides with the admin token", b.broker_id);
            }
        }
        for d in &self.developers {
            let bytes = hex::decode(&d.key)
                .with_context(|| format!("developer {} key is not hex", d.developer_id))?;
            if bytes.len() != 32 {
                bail!("developer {} key must be 32 bytes", d.developer_id);
            }
        }
        if let Some(feed) = &self.feed {
            if feed.speed <= 0.0 || !feed.speed.is_finite() {
                bail!("feed speed must be positive");
            }
        }
        Ok(())
    }

    pub fn runtime_config(&self) -> RuntimeConfig {
        RuntimeConfig {
            universe: self
                .universe
                .iter()
                .map(|i| Instrument {
                    symbol: Symbol::new(i.symbol.as_str()),
                    tick_size: i.tick_size,
                    lot_size: i.lot_size,
                })
                .collect(),
            latency_classes: self
                .latency_classes
                .iter()
                .map(|c| LatencyClass {
                    class_id: ClassId::new(c.class_id.as_str()),
                    delay_steps: c.delay_steps,
                    fee_per_event: c.fee_per_event,
                })
                .collect(),
            starting_cash: self.starting_cash,
            seed: SeedParams {
                levels: self.seed_levels,
                base_size: self.seed_base_size,
            },
        }
    }

    pub fn broker_schedule(&self, broker: &BrokerConfig) -> FeeSchedule {
        FeeSchedule {
            per_trade_fixed: broker.per_trade_fixed,
            per_notional_bps: broker.per_notional_bps,
        }
    }

    /// Resolve a role token: the admin token or a broker token.
    pub fn role_of_token(&self, token: &str) -> Option<ats_core::Requester> {
        if token == self.admin_token {
            return Some(ats_core::Requester::Administrator);
        }
        self.brokers
            .iter()
            .find(|b| b.token == token)
            .map(|b| ats_core::Requester::Broker(BrokerId::new(b.broker_id.as_str())))
    }

    pub fn developer_keys(&self) -> Result<Vec<(DeveloperId, [u8; 32])>> {
        self.developers
            .iter()
            .map(|d| {
                let bytes = hex::decode(&d.key)?;
                let key: [u8; 32] = bytes
                    .try_into()
                    .map_err(|_| anyhow::anyhow!("developer key must be 32 bytes"))?;
                Ok((DeveloperId::new(d.developer_id.as_str()), key))
            })
            .collect()
    }

    pub fn override_for(&self, agent_id: &str) -> Option<StartingBalances> {
        self.agent_overrides.get(agent_id).map(|o| StartingBalances {
            cash: o.cash.unwrap_or(self.starting_cash),
            positions: o
                .positions
                .iter()
                .map(|(s, p)| (Symbol::new(s.as_str()), *p))
                .collect(),
        })
    }
}
