//! Deployment chains from each proxy back to the externally owned account
//! that started them, and the catalog of creational patterns they form.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{ContractIndex, Corpus};
use crate::model::{Address, Timestamp, TraceAddress, TxHash};

pub const MAX_CHAIN_DEPTH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeLabel {
    Eoa,
    /// Factory contract.
    Fa,
    /// Factory that is itself a detected proxy.
    Pf,
    /// The proxy the chain ends at.
    P,
}

impl NodeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            NodeLabel::Eoa => "EOA",
            NodeLabel::Fa => "FA",
            NodeLabel::Pf => "PF",
            NodeLabel::P => "P",
        }
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "EOA" => Ok(NodeLabel::Eoa),
            "FA" => Ok(NodeLabel::Fa),
            "PF" => Ok(NodeLabel::Pf),
            "P" => Ok(NodeLabel::P),
            other => Err(format!("unknown chain label {other:?}")),
        }
    }
}

impl Serialize for NodeLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NodeLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = std::borrow::Cow::<str>::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeploymentStyle {
    OffChain,
    OnChain,
}

impl fmt::Display for DeploymentStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeploymentStyle::OffChain => "OffChain",
            DeploymentStyle::OnChain => "OnChain",
        })
    }
}

pub const OFF_CHAIN_SIGNATURE: &str = "EOA > P";

pub fn signature_of(labels: &[NodeLabel]) -> String {
    labels.iter().map(NodeLabel::as_str).collect::<Vec<_>>().join(" > ")
}

pub fn parse_signature(signature: &str) -> Result<Vec<NodeLabel>, String> {
    signature.split('>').map(str::parse).collect()
}

pub fn style_of(signature: &str) -> DeploymentStyle {
    if signature == OFF_CHAIN_SIGNATURE {
        DeploymentStyle::OffChain
    } else {
        DeploymentStyle::OnChain
    }
}

/// The successful creation of a contract, as seen in the traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationSite {
    pub address: Address,
    /// Caller of the create trace.
    pub deployer: Address,
    /// Sender of the transaction containing the create trace.
    pub tx_sender: Address,
    pub transaction_hash: TxHash,
    pub trace_address: TraceAddress,
    pub block_number: u64,
    pub timestamp: Timestamp,
    pub gas_used: BigUint,
    /// Gas price of the enclosing transaction, when the export carries it.
    pub gas_price: Option<BigUint>,
}

impl CreationSite {
    fn key(&self) -> (u64, &TxHash, &TraceAddress) {
        (self.block_number, &self.transaction_hash, &self.trace_address)
    }
}

/// Created address → earliest successful creation.
#[derive(Debug, Clone, Default)]
pub struct CreationIndex {
    by_address: HashMap<Address, CreationSite>,
    pub warnings: Vec<String>,
}

impl CreationIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut index = CreationIndex::default();
        for tx in &corpus.groups {
            let gas_price = tx.root().gas_price.clone();
            for t in tx.traces.iter().filter(|t| t.call_type.is_create() && t.status) {
                index.insert(CreationSite {
                    address: t.to,
                    deployer: t.from,
                    tx_sender: tx.sender,
                    transaction_hash: t.transaction_hash,
                    trace_address: t.trace_address.clone(),
                    block_number: t.block_number,
                    timestamp: t.block_timestamp,
                    gas_used: t.gas_used.clone(),
                    gas_price: gas_price.clone(),
                });
            }
        }
        index
    }

    /// Index over explicit creation sites; duplicates keep the earliest.
    pub fn from_sites(sites: impl IntoIterator<Item = CreationSite>) -> Self {
        let mut index = CreationIndex::default();
        for site in sites {
            index.insert(site);
        }
        index
    }

    fn insert(&mut self, site: CreationSite) {
        match self.by_address.get_mut(&site.address) {
            None => {
                self.by_address.insert(site.address, site);
            }
            Some(existing) => {
                let msg = format!(
                    "contract {} created more than once (tx {} and {}); keeping the earliest",
                    site.address, existing.transaction_hash, site.transaction_hash
                );
                log::warn!("{msg}");
                self.warnings.push(msg);
                if site.key() < existing.key() {
                    *existing = site;
                }
            }
        }
    }

    pub fn find_creation(&self, address: &Address) -> Option<&CreationSite> {
        self.by_address.get(address)
    }

    pub fn len(&self) -> usize {
        self.by_address.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_address.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CreationSite> {
        self.by_address.values()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainNode {
    pub address: Address,
    pub label: NodeLabel,
}

/// Root EOA first, proxy last. `creation_txs[i]` created `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreationChain {
    pub proxy: Address,
    pub nodes: Vec<ChainNode>,
    pub creation_txs: Vec<TxHash>,
}

impl CreationChain {
    pub fn labels(&self) -> Vec<NodeLabel> {
        self.nodes.iter().map(|n| n.label).collect()
    }

    pub fn signature(&self) -> String {
        signature_of(&self.labels())
    }

    pub fn style(&self) -> DeploymentStyle {
        style_of(&self.signature())
    }

    pub fn root_eoa(&self) -> Address {
        self.nodes[0].address
    }

    /// Factory nodes between the root and the proxy.
    pub fn factories(&self) -> impl Iterator<Item = &ChainNode> {
        self.nodes[1..self.nodes.len() - 1].iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainOutcome {
    Complete(CreationChain),
    /// No creation was found for `missing`; `partial` holds the nodes
    /// resolved so far, proxy last.
    Incomplete {
        proxy: Address,
        missing: Address,
        partial: Vec<ChainNode>,
    },
    Cycle {
        proxy: Address,
        repeated: Address,
    },
    TooDeep {
        proxy: Address,
    },
}

impl ChainOutcome {
    pub fn proxy(&self) -> Address {
        match self {
            ChainOutcome::Complete(c) => c.proxy,
            ChainOutcome::Incomplete { proxy, .. }
            | ChainOutcome::Cycle { proxy, .. }
            | ChainOutcome::TooDeep { proxy } => *proxy,
        }
    }

    pub fn complete(&self) -> Option<&CreationChain> {
        match self {
            ChainOutcome::Complete(c) => Some(c),
            _ => None,
        }
    }
}

/// Walks deployers upward from `proxy` until reaching an address outside the
/// contracts corpus.
pub fn build_chain(
    proxy: Address,
    proxy_set: &BTreeSet<Address>,
    creations: &CreationIndex,
    contracts: &ContractIndex,
) -> ChainOutcome {
    let mut nodes = vec![ChainNode {
        address: proxy,
        label: NodeLabel::P,
    }];
    let mut txs = Vec::new();
    let mut seen = HashSet::from([proxy]);
    let mut current = proxy;
    loop {
        let Some(site) = creations.find_creation(&current) else {
            nodes.reverse();
            return ChainOutcome::Incomplete {
                proxy,
                missing: current,
                partial: nodes,
            };
        };
        txs.push(site.transaction_hash);
        let deployer = site.deployer;
        if !seen.insert(deployer) {
            return ChainOutcome::Cycle {
                proxy,
                repeated: deployer,
            };
        }
        if nodes.len() + 1 > MAX_CHAIN_DEPTH {
            return ChainOutcome::TooDeep { proxy };
        }
        if !contracts.is_contract(&deployer) {
            nodes.push(ChainNode {
                address: deployer,
                label: NodeLabel::Eoa,
            });
            nodes.reverse();
            txs.reverse();
            return ChainOutcome::Complete(CreationChain {
                proxy,
                nodes,
                creation_txs: txs,
            });
        }
        let label = if proxy_set.contains(&deployer) { NodeLabel::Pf } else { NodeLabel::Fa };
        nodes.push(ChainNode { address: deployer, label });
        current = deployer;
    }
}

/// Chains for every proxy, in address order.
pub fn build_chains(
    proxy_set: &BTreeSet<Address>,
    creations: &CreationIndex,
    contracts: &ContractIndex,
) -> Vec<ChainOutcome> {
    let proxies: Vec<Address> = proxy_set.iter().copied().collect();
    proxies
        .par_iter()
        .map(|p| build_chain(*p, proxy_set, creations, contracts))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationalPattern {
    pub signature: String,
    pub style: DeploymentStyle,
    pub context_count: u64,
    pub proxy_count: u64,
    /// Share of complete chains, in percent.
    pub proxy_pct: f64,
}

/// Groups complete chains by signature. `representatives` are the proxies
/// that represent a usage context; each adds one to its pattern's
/// context count.
pub fn pattern_catalog(chains: &[CreationChain], representatives: &BTreeSet<Address>) -> Vec<CreationalPattern> {
    let mut by_sig: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for c in chains {
        let e = by_sig.entry(c.signature()).or_default();
        e.0 += 1;
        e.1 += u64::from(representatives.contains(&c.proxy));
    }
    let total = chains.len() as f64;
    let mut out: Vec<CreationalPattern> = by_sig
        .into_iter()
        .map(|(signature, (proxy_count, context_count))| CreationalPattern {
            style: style_of(&signature),
            signature,
            context_count,
            proxy_count,
            proxy_pct: 100.0 * proxy_count as f64 / total,
        })
        .collect();
    out.sort_by(|a, b| {
        a.style
            .cmp(&b.style)
            .then(b.proxy_count.cmp(&a.proxy_count))
            .then(a.signature.cmp(&b.signature))
    });
    out
}

pub fn write_catalog_csv<W: Write>(catalog: &[CreationalPattern], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["signature", "style", "context_count", "proxy_count", "proxy_pct"])?;
    for p in catalog {
        w.write_record([
            p.signature.clone(),
            p.style.to_string(),
            p.context_count.to_string(),
            p.proxy_count.to_string(),
            format!("{:.4}", p.proxy_pct),
        ])?;
    }
    w.flush()?;
    Ok(())
}
