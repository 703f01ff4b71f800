//! Deployment gas and fee aggregation per usage context.

use std::collections::{BTreeSet, HashMap};

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::context::UsageContext;
use crate::ingest::ContractIndex;
use crate::lineage::{ChainOutcome, CreationIndex, DeploymentStyle};
use crate::model::Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    #[serde(rename = "N=1")]
    Singleton,
    #[serde(rename = "N>1")]
    Multi,
}

impl SizeClass {
    pub fn of(size: usize) -> Self {
        if size <= 1 {
            SizeClass::Singleton
        } else {
            SizeClass::Multi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub context_id: String,
    pub style: DeploymentStyle,
    pub size_class: SizeClass,
    pub size: usize,
    /// Proxy plus distinct factory creation gas over the number of contracts
    /// deployed. Equals `avg_gas_excluding_factories` for off-chain contexts.
    pub avg_gas: f64,
    pub avg_gas_excluding_factories: f64,
    /// Mean proxy runtime length in bytes; absent when no member has bytecode.
    pub avg_bytecode_len: Option<f64>,
    pub factories: usize,
    /// Decimal wei; absent unless every counted creation has a gas price.
    pub total_fee_wei: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub records: Vec<CostRecord>,
    /// (context id, reason) for contexts left out.
    pub skipped: Vec<(String, String)>,
}

impl CostReport {
    pub fn select(&self, style: DeploymentStyle, size_class: Option<SizeClass>) -> impl Iterator<Item = &CostRecord> {
        self.records
            .iter()
            .filter(move |r| r.style == style && size_class.map_or(true, |c| r.size_class == c))
    }
}

fn to_f64(v: &BigUint) -> f64 {
    v.to_f64().unwrap_or(f64::INFINITY)
}

/// Per-context deployment cost. Factories are the intermediaries of the
/// members' complete creation chains, each counted once.
pub fn deployment_cost_report(
    contexts: &[UsageContext],
    chains: &[ChainOutcome],
    creations: &CreationIndex,
    contracts: &ContractIndex,
) -> CostReport {
    let chain_of: HashMap<Address, _> = chains
        .iter()
        .filter_map(|o| o.complete().map(|c| (c.proxy, c)))
        .collect();
    let mut report = CostReport::default();
    for ctx in contexts {
        let Some(style) = ctx.style else {
            report.skipped.push((ctx.id.clone(), "deployment style unknown".into()));
            continue;
        };
        let proxy_sites: Vec<_> = ctx.members.iter().filter_map(|m| creations.find_creation(m)).collect();
        if proxy_sites.is_empty() {
            report.skipped.push((ctx.id.clone(), "no proxy creation in corpus".into()));
            continue;
        }
        let factories: BTreeSet<Address> = match style {
            DeploymentStyle::OffChain => BTreeSet::new(),
            DeploymentStyle::OnChain => ctx
                .members
                .iter()
                .filter_map(|m| chain_of.get(m))
                .flat_map(|c| c.factories().map(|n| n.address))
                .collect(),
        };
        let factory_sites: Vec<_> = factories.iter().filter_map(|f| creations.find_creation(f)).collect();

        let proxy_gas: BigUint = proxy_sites.iter().map(|s| &s.gas_used).sum();
        let factory_gas: BigUint = factory_sites.iter().map(|s| &s.gas_used).sum();
        let deployed = proxy_sites.len() + factory_sites.len();
        let avg_gas = to_f64(&(&proxy_gas + &factory_gas)) / deployed as f64;
        let avg_gas_excluding_factories = to_f64(&proxy_gas) / proxy_sites.len() as f64;

        let lens: Vec<usize> = ctx
            .members
            .iter()
            .filter_map(|m| contracts.get(m))
            .map(|c| c.bytecode.len())
            .collect();
        let avg_bytecode_len = (!lens.is_empty()).then(|| lens.iter().sum::<usize>() as f64 / lens.len() as f64);

        let total_fee_wei = proxy_sites
            .iter()
            .chain(&factory_sites)
            .map(|s| s.gas_price.as_ref().map(|p| &s.gas_used * p))
            .sum::<Option<BigUint>>()
            .map(|fee| fee.to_string());

        report.records.push(CostRecord {
            context_id: ctx.id.clone(),
            style,
            size_class: SizeClass::of(ctx.size),
            size: ctx.size,
            avg_gas,
            avg_gas_excluding_factories,
            avg_bytecode_len,
            factories: factory_sites.len(),
            total_fee_wei,
        });
    }
    report
}

/// Cost of one logic (gas `logic_gas`) plus `n` clones (gas `clone_gas`
/// each) relative to deploying `n` full logic copies.
pub fn clone_ratio(logic_gas: f64, clone_gas: f64, n: u64) -> f64 {
    let n = n as f64;
    (logic_gas + n * clone_gas) / (n * logic_gas)
}
