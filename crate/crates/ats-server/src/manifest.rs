//! Agent manifests: the JSON artifact the developer signs. The digest in
//! the descriptor is the SHA-256 of the manifest bytes, so one flipped
//! bit anywhere invalidates the signature.
//!
//! `kind` selects the hosting mode: the built-in strategies run
//! in-process, `remote` reserves the agent id for a gateway session.
//!
//! ```json
//! { "kind": "daytrader",
//!   "config": { "symbol": "ERIC", "window": 3, "rise_threshold": 2,
//!               "order_size": 100, "latency_class": "instant" } }
//! { "kind": "stoploss",
//!   "config": { "symbol": "NOKI", "stop_price": 95,
//!               "position_to_protect": 100, "latency_class": "instant" } }
//! { "kind": "template", "questionnaire": { "budget": 100000, "latency_class": "mid",
//!   "rules": [ { "symbol": "ERIC", "max_position": 300, "buy_below": 250 } ] } }
//! { "kind": "remote" }
//! ```

use anyhow::{anyhow, bail, Result};
use serde::Deserialize;

use ats_core::agent::AgentCallbacks;
use ats_core::agents::{
    compile, Daytrader, DaytraderConfig, StopLoss, StopLossConfig, TemplateQuestionnaire,
    TemplateRule,
};
use ats_core::market::Instrument;
use ats_core::types::{Cash, ClassId, Symbol};

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Manifest {
    Daytrader { config: DaytraderManifest },
    Stoploss { config: StopLossManifest },
    Template { questionnaire: QuestionnaireJson },
    Remote,
}

#[derive(Debug, Deserialize)]
pub struct DaytraderManifest {
    pub symbol: String,
    pub window: usize,
    pub rise_threshold: u64,
    pub order_size: u64,
    pub latency_class: String,
    #[serde(default = "default_stale_after")]
    pub stale_after: usize,
}

fn default_stale_after() -> usize {
    8
}

#[derive(Debug, Deserialize)]
pub struct StopLossManifest {
    pub symbol: String,
    pub stop_price: u64,
    pub position_to_protect: u64,
    pub latency_class: String,
}

/// The questionnaire file format: price levels in minor currency units.
#[derive(Debug, Deserialize)]
pub struct QuestionnaireJson {
    pub budget: Cash,
    pub latency_class: String,
    #[serde(default)]
    pub rules: Vec<RuleJson>,
}

#[derive(Debug, Deserialize)]
pub struct RuleJson {
    pub symbol: String,
    pub max_position: u64,
    #[serde(default)]
    pub buy_below: Option<u64>,
    #[serde(default)]
    pub sell_above: Option<u64>,
}

pub fn parse_manifest(bytes: &[u8]) -> Result<Manifest> {
    Ok(serde_json::from_slice(bytes)?)
}

fn instrument_of<'a>(universe: &'a [Instrument], symbol: &str) -> Result<&'a Instrument> {
    universe
        .iter()
        .find(|i| i.symbol.as_str() == symbol)
        .ok_or_else(|| anyhow!("manifest references unknown symbol {symbol}"))
}

/// Instantiate the in-process agent a manifest describes. `Remote`
/// manifests have no local callbacks and return `None`.
pub fn build_local_agent(
    manifest: &Manifest,
    universe: &[Instrument],
    starting_cash: Cash,
) -> Result<Option<Box<dyn AgentCallbacks>>> {
    match manifest {
        Manifest::Remote => Ok(None),
        Manifest::Daytrader { config } => {
            let inst = instrument_of(universe, &config.symbol)?;
            if config.order_size % inst.lot_size != 0 {
                bail!("daytrader order_size must be a lot multiple");
            }
            let agent = Daytrader::new(DaytraderConfig {
                symbol: Symbol::new(config.symbol.as_str()),
                window: config.window,
                rise_threshold: config.rise_threshold,
                order_size: config.order_size,
                tick_size: inst.tick_size,
                latency_class: ClassId::new(config.latency_class.as_str()),
                stale_after: config.stale_after,
            })
            .map_err(|e| anyhow!("bad daytrader config: {e}"))?;
            Ok(Some(Box::new(agent)))
        }
        Manifest::Stoploss { config } => {
            let inst = instrument_of(universe, &config.symbol)?;
            if config.position_to_protect % inst.lot_size != 0 {
                bail!("stoploss position_to_protect must be a lot multiple");
            }
            let agent = StopLoss::new(StopLossConfig {
                symbol: Symbol::new(config.symbol.as_str()),
                stop_price: config.stop_price,
                position_to_protect: config.position_to_protect,
                lot_size: inst.lot_size,
                latency_class: ClassId::new(config.latency_class.as_str()),
            })
            .map_err(|e| anyhow!("bad stoploss config: {e}"))?;
            Ok(Some(Box::new(agent)))
        }
        Manifest::Template { questionnaire } => {
            let q = TemplateQuestionnaire {
                budget: questionnaire.budget,
                latency_class: ClassId::new(questionnaire.latency_class.as_str()),
                rules: questionnaire
                    .rules
                    .iter()
                    .map(|r| TemplateRule {
                        symbol: Symbol::new(r.symbol.as_str()),
                        max_position: r.max_position,
                        buy_below_minor: r.buy_below,
                        sell_above_minor: r.sell_above,
                    })
                    .collect(),
            };
            let agent =
                compile(&q, universe, starting_cash).map_err(|e| anyhow!("questionnaire: {e}"))?;
            Ok(Some(Box::new(agent)))
        }
    }
}

/// Descriptor file format: hex digest and signature plus identity fields.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
pub struct DescriptorJson {
    pub agent_id: String,
    pub owner_id: String,
    pub broker_id: String,
    pub version: String,
    pub manifest_digest: String,
    pub signature: String,
}

impl DescriptorJson {
    pub fn to_descriptor(&self) -> Result<ats_core::AgentDescriptor> {
        let digest_bytes = hex::decode(&self.manifest_digest)?;
        let digest: [u8; 32] = digest_bytes
            .try_into()
            .map_err(|_| anyhow!("manifest_digest must be 32 bytes of hex"))?;
        Ok(ats_core::AgentDescriptor {
            agent_id: ats_core::AgentId::new(self.agent_id.as_str()),
            owner_id: ats_core::DeveloperId::new(self.owner_id.as_str()),
            broker_id: ats_core::BrokerId::new(self.broker_id.as_str()),
            version: self.version.clone(),
            manifest_digest: digest,
            signature: hex::decode(&self.signature)?,
        })
    }
}
