//! Usage contexts: proxies sharing bytecode and deployer, joined through the
//! logic contracts they delegate to. Also the prevalence series built on
//! contexts and on the detected proxy set.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::Findings;
use crate::ingest::{ContractIndex, Corpus, TxGroup};
use crate::lineage::{ChainOutcome, CreationIndex, DeploymentStyle};
use crate::model::{format_timestamp, keccak256, Address, CallType, Month, Timestamp, B256};
use crate::tracegraph::{is_multi_contract, MonthlyPoint, MonthlySeries};

/// Disjoint-set forest over `0..n` with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    /// Keccak-256 of the runtime bytecode.
    pub bytecode_digest: B256,
    /// Immediate creator; `None` when the creation is outside the corpus.
    pub deployer: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageContext {
    pub id: String,
    pub cluster_key: ClusterKey,
    pub members: BTreeSet<Address>,
    pub logics: BTreeSet<Address>,
    pub representative: Address,
    #[serde(with = "opt_timestamp")]
    pub started_at: Option<Timestamp>,
    pub style: Option<DeploymentStyle>,
    pub size: usize,
}

mod opt_timestamp {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(ts) => s.serialize_some(&format_timestamp(ts)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| crate::model::parse_timestamp(&s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Digest of the sorted member set.
pub fn context_id(members: &BTreeSet<Address>) -> String {
    let mut bytes = Vec::with_capacity(members.len() * 20);
    for m in members {
        bytes.extend_from_slice(m.as_bytes());
    }
    hex::encode(keccak256(&bytes))
}

#[derive(Debug, Clone, Default)]
pub struct Contexts {
    /// Ordered by start time, then id; unknown start times last.
    pub contexts: Vec<UsageContext>,
    pub warnings: Vec<String>,
}

impl Contexts {
    pub fn representatives(&self) -> BTreeSet<Address> {
        self.contexts.iter().map(|c| c.representative).collect()
    }

    /// Proxy → index of its context.
    pub fn membership(&self) -> HashMap<Address, usize> {
        self.contexts
            .iter()
            .enumerate()
            .flat_map(|(i, c)| c.members.iter().map(move |m| (*m, i)))
            .collect()
    }
}

/// Creation time used to pick the oldest member: the contract record's
/// timestamp, else the creation trace's.
fn creation_time(address: &Address, contracts: &ContractIndex, creations: &CreationIndex) -> Option<Timestamp> {
    contracts
        .get(address)
        .map(|c| c.created_at)
        .or_else(|| creations.find_creation(address).map(|s| s.timestamp))
}

/// Connected components of the proxy–logic graph restricted to `members`.
/// Returns groups of member indices, each sorted, in order of first member.
pub fn proxy_components(members: &[Address], findings: &Findings) -> Vec<Vec<usize>> {
    let mut node_of: HashMap<Address, usize> = HashMap::new();
    for (i, m) in members.iter().enumerate() {
        node_of.insert(*m, i);
    }
    let mut next = members.len();
    let mut edges = Vec::new();
    for (i, m) in members.iter().enumerate() {
        if let Some(f) = findings.get(m) {
            for logic in f.logic_targets.keys() {
                // A logic that is also a member of this cluster is the same node.
                let j = *node_of.entry(*logic).or_insert_with(|| {
                    next += 1;
                    next - 1
                });
                edges.push((i, j));
            }
        }
    }
    let mut uf = UnionFind::new(next);
    for (a, b) in edges {
        uf.union(a, b);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    for i in 0..members.len() {
        let root = uf.find(i);
        let g = groups.entry(root).or_default();
        if g.is_empty() {
            order.push(root);
        }
        g.push(i);
    }
    order.into_iter().map(|r| groups.remove(&r).expect("present")).collect()
}

/// Clusters detected proxies by (bytecode digest, immediate deployer), then
/// splits each cluster into connected components of the proxy–logic graph.
pub fn cluster_contexts(
    findings: &Findings,
    contracts: &ContractIndex,
    creations: &CreationIndex,
    chains: &[ChainOutcome],
) -> Contexts {
    let mut warnings = Vec::new();
    let mut clusters: BTreeMap<ClusterKey, Vec<Address>> = BTreeMap::new();
    for proxy in findings.keys() {
        let bytecode_digest = match contracts.get(proxy) {
            Some(c) => B256(keccak256(c.bytecode.as_slice())),
            None => {
                let msg = format!("proxy {proxy} has no contract record; clustering it with empty bytecode");
                log::warn!("{msg}");
                warnings.push(msg);
                B256(keccak256([]))
            }
        };
        let deployer = creations.find_creation(proxy).map(|s| s.deployer);
        clusters.entry(ClusterKey { bytecode_digest, deployer }).or_default().push(*proxy);
    }
    let chain_style: HashMap<Address, DeploymentStyle> = chains
        .iter()
        .filter_map(|o| o.complete().map(|c| (c.proxy, c.style())))
        .collect();

    let chain_style = &chain_style;
    let clusters: Vec<(ClusterKey, Vec<Address>)> = clusters.into_iter().collect();
    let mut contexts: Vec<UsageContext> = clusters
        .par_iter()
        .flat_map_iter(|(key, members)| {
            proxy_components(members, findings).into_iter().map(move |component| {
                let members: BTreeSet<Address> = component.iter().map(|&i| members[i]).collect();
                let logics: BTreeSet<Address> = members
                    .iter()
                    .flat_map(|m| findings[m].logic_targets.keys().copied())
                    .collect();
                // Unknown creation times sort after every known one.
                let representative = *members
                    .iter()
                    .min_by_key(|m| {
                        let t = creation_time(m, contracts, creations);
                        (t.is_none(), t, **m)
                    })
                    .expect("component is non-empty");
                let started_at = creation_time(&representative, contracts, creations);
                let style = chain_style.get(&representative).copied().or_else(|| {
                    key.deployer.map(|d| {
                        if contracts.is_contract(&d) {
                            DeploymentStyle::OnChain
                        } else {
                            DeploymentStyle::OffChain
                        }
                    })
                });
                UsageContext {
                    id: context_id(&members),
                    cluster_key: key.clone(),
                    size: members.len(),
                    members,
                    logics,
                    representative,
                    started_at,
                    style,
                }
            })
        })
        .collect();
    contexts.sort_by(|a, b| {
        (a.started_at.is_none(), a.started_at, &a.id).cmp(&(b.started_at.is_none(), b.started_at, &b.id))
    });
    Contexts { contexts, warnings }
}

/// One line of `contexts.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextRow {
    pub id: String,
    pub cluster_key: ClusterKey,
    pub size: usize,
    pub representative: Address,
    #[serde(with = "opt_timestamp")]
    pub started_at: Option<Timestamp>,
    pub style: Option<DeploymentStyle>,
    pub logics: Vec<Address>,
    pub members: Vec<Address>,
}

impl From<&UsageContext> for ContextRow {
    fn from(c: &UsageContext) -> Self {
        ContextRow {
            id: c.id.clone(),
            cluster_key: c.cluster_key.clone(),
            size: c.size,
            representative: c.representative,
            started_at: c.started_at,
            style: c.style,
            logics: c.logics.iter().copied().collect(),
            members: c.members.iter().copied().collect(),
        }
    }
}

pub fn write_contexts<W: Write>(contexts: &Contexts, mut out: W) -> std::io::Result<()> {
    for c in &contexts.contexts {
        serde_json::to_writer(&mut out, &ContextRow::from(c))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Plain per-month counts over a contiguous month range.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MonthlyCounts {
    pub points: BTreeMap<Month, u64>,
}

impl MonthlyCounts {
    pub fn get(&self, month: Month) -> u64 {
        self.points.get(&month).copied().unwrap_or(0)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "count"])?;
        for (m, c) in &self.points {
            w.write_record([m.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contexts started per month, zero-filled between the first and last start.
pub fn monthly_context_counts(contexts: &[UsageContext]) -> MonthlyCounts {
    let mut sparse: BTreeMap<Month, u64> = BTreeMap::new();
    for c in contexts {
        if let Some(t) = &c.started_at {
            *sparse.entry(Month::of(t)).or_default() += 1;
        }
    }
    let (Some(first), Some(last)) = (sparse.keys().next().copied(), sparse.keys().next_back().copied()) else {
        return MonthlyCounts::default();
    };
    let mut points: BTreeMap<Month, u64> = Month::range(first, last).map(|m| (m, 0)).collect();
    points.extend(sparse);
    MonthlyCounts { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdoptionPoint {
    /// Distinct EOAs that, by the end of this month, sent a transaction creating a proxy.
    pub proxy_initiating_eoas: u64,
    /// Distinct EOAs that, by the end of this month, sent a transaction creating any contract.
    pub any_contract_eoas: u64,
}

impl AdoptionPoint {
    pub fn ratio(&self) -> Option<f64> {
        (self.any_contract_eoas > 0).then(|| self.proxy_initiating_eoas as f64 / self.any_contract_eoas as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AdoptionSeries {
    pub points: BTreeMap<Month, AdoptionPoint>,
}

impl AdoptionSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "proxy_initiating_eoas", "any_contract_eoas", "ratio"])?;
        for (m, p) in &self.points {
            w.write_record([
                m.to_string(),
                p.proxy_initiating_eoas.to_string(),
                p.any_contract_eoas.to_string(),
                p.ratio().map(|r| r.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Cumulative counts of EOAs initiating contract creations, per month over
/// the corpus span. An EOA initiates a creation when it sends a transaction
/// containing a successful create trace, whoever executes the create.
pub fn adoption_series(corpus: &Corpus, proxy_set: &BTreeSet<Address>) -> AdoptionSeries {
    let Some((first, last)) = corpus.month_span() else {
        return AdoptionSeries::default();
    };
    let mut first_any: HashMap<Address, Month> = HashMap::new();
    let mut first_proxy: HashMap<Address, Month> = HashMap::new();
    for tx in &corpus.groups {
        let mut any = false;
        let mut proxy = false;
        for t in tx.traces.iter().filter(|t| t.call_type.is_create() && t.status) {
            any = true;
            proxy |= proxy_set.contains(&t.to);
        }
        let month = tx.month();
        if any {
            let e = first_any.entry(tx.sender).or_insert(month);
            *e = (*e).min(month);
        }
        if proxy {
            let e = first_proxy.entry(tx.sender).or_insert(month);
            *e = (*e).min(month);
        }
    }
    let mut new_any: BTreeMap<Month, u64> = BTreeMap::new();
    for m in first_any.values() {
        *new_any.entry(*m).or_default() += 1;
    }
    let mut new_proxy: BTreeMap<Month, u64> = BTreeMap::new();
    for m in first_proxy.values() {
        *new_proxy.entry(*m).or_default() += 1;
    }
    let mut points = BTreeMap::new();
    let (mut any, mut proxy) = (0, 0);
    for m in Month::range(first, last) {
        any += new_any.get(&m).copied().unwrap_or(0);
        proxy += new_proxy.get(&m).copied().unwrap_or(0);
        points.insert(m, AdoptionPoint {
            proxy_initiating_eoas: proxy,
            any_contract_eoas: any,
        });
    }
    AdoptionSeries { points }
}

/// True iff some message call targets a proxy or some delegatecall is made
/// by one.
pub fn involves_proxy(tx: &TxGroup, proxy_set: &BTreeSet<Address>) -> bool {
    tx.traces.iter().any(|t| {
        (t.call_type.is_message_call() && proxy_set.contains(&t.to))
            || (t.call_type == CallType::DelegateCall && proxy_set.contains(&t.from))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utilization {
    /// Proxy-involving transactions over all transactions.
    pub all: MonthlySeries,
    /// Proxy-involving multi-contract transactions over multi-contract transactions.
    pub multi_contract: MonthlySeries,
}

pub fn utilization_series(corpus: &Corpus, proxy_set: &BTreeSet<Address>) -> Utilization {
    type Acc = (BTreeMap<Month, MonthlyPoint>, BTreeMap<Month, MonthlyPoint>);
    let (all, multi) = corpus
        .groups
        .par_iter()
        .fold(Acc::default, |(mut all, mut multi), tx| {
            let month = tx.month();
            let hit = u64::from(involves_proxy(tx, proxy_set));
            let a = all.entry(month).or_default();
            a.denominator += 1;
            a.numerator += hit;
            let m = multi.entry(month).or_default();
            if is_multi_contract(tx, &corpus.contracts) {
                m.denominator += 1;
                m.numerator += hit;
            }
            (all, multi)
        })
        .reduce(Acc::default, |(a1, m1), (a2, m2)| (add_points(a1, a2), add_points(m1, m2)));
    Utilization {
        all: MonthlySeries::from_counts(all),
        multi_contract: MonthlySeries::from_counts(multi),
    }
}

fn add_points(mut a: BTreeMap<Month, MonthlyPoint>, b: BTreeMap<Month, MonthlyPoint>) -> BTreeMap<Month, MonthlyPoint> {
    for (m, p) in b {
        let e = a.entry(m).or_default();
        e.numerator += p.numerator;
        e.denominator += p.denominator;
    }
    a
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ActivitySamples {
    /// (proxy, inbound transaction count), by address.
    pub proxies: Vec<(Address, u64)>,
    /// (non-proxy contract, inbound transaction count), by address.
    pub others: Vec<(Address, u64)>,
}

impl ActivitySamples {
    pub fn proxy_counts(&self) -> Vec<f64> {
        self.proxies.iter().map(|(_, c)| *c as f64).collect()
    }

    pub fn other_counts(&self) -> Vec<f64> {
        self.others.iter().map(|(_, c)| *c as f64).collect()
    }
}

/// Inbound activity per contract: the number of distinct transactions with a
/// message call to it.
pub fn inbound_counts(corpus: &Corpus) -> HashMap<Address, u64> {
    corpus
        .groups
        .par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Address, u64>, tx| {
            let mut targets: Vec<Address> = tx
                .traces
                .iter()
                .filter(|t| t.call_type.is_message_call())
                .map(|t| t.to)
                .collect();
            targets.sort();
            targets.dedup();
            for t in targets {
                *acc.entry(t).or_default() += 1;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

/// Inbound counts for detected proxies and for every other contract in the corpus.
pub fn activity_levels(corpus: &Corpus, proxy_set: &BTreeSet<Address>) -> ActivitySamples {
    let counts = inbound_counts(corpus);
    let count = |a: &Address| counts.get(a).copied().unwrap_or(0);
    let proxies = proxy_set.iter().map(|p| (*p, count(p))).collect();
    let others = corpus
        .contracts
        .sorted()
        .into_iter()
        .filter(|c| !proxy_set.contains(&c.address))
        .map(|c| (c.address, count(&c.address)))
        .collect();
    ActivitySamples { proxies, others }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::detect_corpus;
    use crate::fixture::builder::{addr, contract, day, tx_hash, TxBuilder};
    use crate::lineage::build_chains;
    use crate::model::TraceRecord;
    use proptest::prelude::*;

    const SEL: [u8; 4] = [1, 2, 3, 4];

    struct World {
        groups: Vec<TxGroup>,
        contracts: Vec<crate::model::ContractRecord>,
        block: u64,
    }

    impl World {
        fn new() -> Self {
            World {
                groups: Vec::new(),
                contracts: Vec::new(),
                block: 0,
            }
        }

        fn tx(&mut self, traces: Vec<TraceRecord>) {
            self.groups.push(TxGroup::new(traces).unwrap());
        }

        /// `deployer` creates `name` with `code` at `when`; also registers
        /// the contract record.
        fn deploy(&mut self, deployer: &str, name: &str, code: &[u8], when: Timestamp) {
            self.block += 1;
            let mut b = TxBuilder::new(tx_hash(&format!("deploy-{name}")), self.block, when);
            if deployer.starts_with("eoa") {
                b.trace(&[], CallType::Create, addr(deployer), addr(name), None);
            } else {
                b.trace(&[], CallType::Call, addr("eoa-ops"), addr(deployer), None);
                b.trace(&[0], CallType::Create, addr(deployer), addr(name), None);
            }
            self.tx(b.build());
            self.contracts.push(contract(addr(name), code, when, tx_hash(&format!("deploy-{name}"))));
        }

        fn forward(&mut self, proxy: &str, logic: &str) {
            self.block += 1;
            let mut b = TxBuilder::new(tx_hash(&format!("fwd-{}", self.block)), self.block, day(2021, 1, 1));
            b.trace(&[], CallType::Call, addr("eoa-user"), addr(proxy), Some(&SEL));
            b.trace(&[0], CallType::DelegateCall, addr(proxy), addr(logic), Some(&SEL));
            self.tx(b.build());
        }

        fn corpus(&self) -> Corpus {
            Corpus::new(self.groups.clone(), self.contracts.iter().cloned().collect())
        }
    }

    fn contexts_of(w: &World) -> Contexts {
        let corpus = w.corpus();
        let findings = detect_corpus(&corpus);
        let creations = CreationIndex::build(&corpus);
        let set = crate::detector::proxy_set(&findings);
        let chains = build_chains(&set, &creations, &corpus.contracts);
        cluster_contexts(&findings, &corpus.contracts, &creations, &chains)
    }

    #[test]
    fn shared_logic_joins_clones() {
        let mut w = World::new();
        w.deploy("eoa-a", "p1", b"proxy", day(2020, 2, 1));
        w.deploy("eoa-a", "p2", b"proxy", day(2020, 1, 1));
        w.deploy("eoa-a", "logic", b"logic", day(2020, 1, 1));
        w.forward("p1", "logic");
        w.forward("p2", "logic");
        let ctx = contexts_of(&w);
        assert_eq!(ctx.contexts.len(), 1);
        let c = &ctx.contexts[0];
        assert_eq!(c.size, 2);
        assert_eq!(c.representative, addr("p2"));
        assert_eq!(c.started_at, Some(day(2020, 1, 1)));
        assert_eq!(c.style, Some(DeploymentStyle::OffChain));
        assert_eq!(c.id, context_id(&c.members));
    }

    #[test]
    fn disjoint_logics_split() {
        let mut w = World::new();
        w.deploy("eoa-a", "p1", b"proxy", day(2020, 1, 1));
        w.deploy("eoa-a", "p2", b"proxy", day(2020, 1, 1));
        w.forward("p1", "l1");
        w.forward("p2", "l2");
        assert_eq!(contexts_of(&w).contexts.len(), 2);
    }

    #[test]
    fn different_deployers_split() {
        let mut w = World::new();
        w.deploy("eoa-a", "p1", b"proxy", day(2020, 1, 1));
        w.deploy("eoa-b", "p2", b"proxy", day(2020, 1, 1));
        w.forward("p1", "l");
        w.forward("p2", "l");
        let ctx = contexts_of(&w);
        assert_eq!(ctx.contexts.len(), 2);
        assert!(ctx.contexts.iter().all(|c| c.size == 1));
    }

    #[test]
    fn missing_record_is_warned() {
        let mut w = World::new();
        w.forward("ghost", "l");
        let ctx = contexts_of(&w);
        assert_eq!(ctx.warnings.len(), 1);
        assert_eq!(ctx.contexts[0].cluster_key.deployer, None);
        assert_eq!(ctx.contexts[0].style, None);
    }

    #[test]
    fn monthly_counts() {
        let mut w = World::new();
        for (i, name) in ["p1", "p2", "p3"].iter().enumerate() {
            w.deploy("eoa-a", name, format!("code{i}").as_bytes(), day(2020, 3, 1 + i as u32));
            w.forward(name, "l");
        }
        w.deploy("eoa-a", "p4", b"x", day(2020, 5, 1));
        w.forward("p4", "l");
        let counts = monthly_context_counts(&contexts_of(&w).contexts);
        assert_eq!(counts.get(Month::new(2020, 3).unwrap()), 3);
        assert_eq!(counts.points.len(), 3);
        assert!(monthly_context_counts(&[]).points.is_empty());
    }

    #[test]
    fn adoption() {
        let mut w = World::new();
        w.deploy("eoa-1", "p", b"p", day(2020, 1, 5));
        let c = w.corpus();
        let a = adoption_series(&c, &BTreeSet::from([addr("p")]));
        let p = a.points[&Month::new(2020, 1).unwrap()];
        assert_eq!((p.proxy_initiating_eoas, p.any_contract_eoas, p.ratio()), (1, 1, Some(1.0)));

        // Factory route: eoa-ops sends the transaction, the factory creates.
        let mut w = World::new();
        w.deploy("eoa-2", "factory", b"f", day(2020, 1, 1));
        w.deploy("factory", "p", b"p", day(2020, 1, 2));
        let a = adoption_series(&w.corpus(), &BTreeSet::from([addr("p")]));
        let p = a.points[&Month::new(2020, 1).unwrap()];
        assert_eq!((p.proxy_initiating_eoas, p.any_contract_eoas), (1, 2));

        let mut w = World::new();
        for i in 0..4 {
            w.deploy(&format!("eoa-{i}"), &format!("c{i}"), b"c", day(2020, 1, 1));
        }
        w.deploy("eoa-9", "late", b"c", day(2020, 3, 1));
        let a = adoption_series(&w.corpus(), &BTreeSet::from([addr("c0")]));
        assert_eq!(a.points[&Month::new(2020, 1).unwrap()].ratio(), Some(0.25));
        let feb = a.points[&Month::new(2020, 2).unwrap()];
        assert_eq!((feb.proxy_initiating_eoas, feb.any_contract_eoas), (1, 4));
        assert_eq!(a.points[&Month::new(2020, 3).unwrap()].any_contract_eoas, 5);
    }

    #[test]
    fn utilization_and_activity() {
        let mut w = World::new();
        w.deploy("eoa-a", "p", b"p", day(2021, 1, 1));
        w.deploy("eoa-a", "l", b"l", day(2021, 1, 1));
        w.deploy("eoa-a", "c", b"c", day(2021, 1, 1));
        w.groups.clear();
        w.forward("p", "l");
        let mut b = TxBuilder::new(tx_hash("direct"), 90, day(2021, 1, 2));
        b.trace(&[], CallType::Call, addr("eoa-x"), addr("c"), None);
        b.trace(&[0], CallType::Call, addr("c"), addr("p"), None);
        b.trace(&[1], CallType::Call, addr("c"), addr("p"), None);
        w.tx(b.build());
        for i in 0..8 {
            let mut b = TxBuilder::new(tx_hash(&format!("plain{i}")), 100 + i, day(2021, 1, 3));
            b.trace(&[], CallType::Call, addr("eoa-x"), addr("eoa-y"), None);
            w.tx(b.build());
        }
        let corpus = w.corpus();
        let set = BTreeSet::from([addr("p")]);
        let u = utilization_series(&corpus, &set);
        let jan = Month::new(2021, 1).unwrap();
        assert_eq!(u.all.ratio(jan), Some(0.2));
        assert_eq!(u.multi_contract.ratio(jan), Some(1.0));

        let act = activity_levels(&corpus, &set);
        assert_eq!(act.proxies, vec![(addr("p"), 2)]);
        let others: BTreeMap<Address, u64> = act.others.into_iter().collect();
        assert_eq!(others[&addr("c")], 1);
        assert_eq!(others[&addr("l")], 1);
    }

    /// Reference components: repeated relaxation of labels to the minimum
    /// over neighbours until nothing changes.
    fn oracle_components(n_proxies: usize, edges: &[(usize, usize)], n_logics: usize) -> BTreeSet<BTreeSet<usize>> {
        let n = n_proxies + n_logics;
        let mut label: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(p, l) in edges {
                let (a, b) = (p, n_proxies + l);
                let m = label[a].min(label[b]);
                if label[a] != m || label[b] != m {
                    label[a] = m;
                    label[b] = m;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut groups: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for p in 0..n_proxies {
            groups.entry(label[p]).or_default().insert(p);
        }
        groups.into_values().collect()
    }

    proptest! {
        #[test]
        fn components_match_oracle(
            n_proxies in 1usize..40,
            n_logics in 1usize..40,
            raw_edges in prop::collection::vec((0usize..40, 0usize..40), 0..80),
        ) {
            let edges: Vec<(usize, usize)> = raw_edges.into_iter()
                .map(|(p, l)| (p % n_proxies, l % n_logics)).collect();
            let mut groups = Vec::new();
            for (i, (p, l)) in edges.iter().enumerate() {
                let mut b = TxBuilder::new(tx_hash(&format!("e{i}")), i as u64, day(2020, 1, 1));
                b.trace(&[], CallType::Call, addr("eoa"), addr(&format!("p{p}")), Some(&SEL));
                b.trace(&[0], CallType::DelegateCall, addr(&format!("p{p}")), addr(&format!("l{l}")), Some(&SEL));
                groups.push(TxGroup::new(b.build()).unwrap());
            }
            let findings = detect_corpus(&Corpus::new(groups, ContractIndex::default()));
            let members: Vec<Address> = findings.keys().copied().collect();
            let index_of: HashMap<Address, usize> = (0..n_proxies).map(|p| (addr(&format!("p{p}")), p)).collect();
            let got: BTreeSet<BTreeSet<usize>> = proxy_components(&members, &findings)
                .into_iter()
                .map(|g| g.into_iter().map(|i| index_of[&members[i]]).collect())
                .collect();
            let active: BTreeSet<usize> = edges.iter().map(|(p, _)| *p).collect();
            let expected: BTreeSet<BTreeSet<usize>> = oracle_components(n_proxies, &edges, n_logics)
                .into_iter()
                .filter(|g| g.iter().all(|p| active.contains(p)))
                .collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn adoption_is_monotone(plan in prop::collection::vec((0u32..6, 0usize..5, any::<bool>()), 1..30)) {
            let mut w = World::new();
            let mut set = BTreeSet::new();
            for (i, (month, eoa, is_proxy)) in plan.iter().enumerate() {
                let name = format!("c{i}");
                w.deploy(&format!("eoa-{eoa}"), &name, b"c", day(2020, month + 1, 1));
                if *is_proxy {
                    set.insert(addr(&name));
                }
            }
            w.groups.sort_by_key(|g| g.month());
            let a = adoption_series(&w.corpus(), &set);
            let mut prev = (0, 0);
            for p in a.points.values() {
                prop_assert!(p.proxy_initiating_eoas >= prev.0 && p.any_contract_eoas >= prev.1);
                prop_assert!(p.proxy_initiating_eoas <= p.any_contract_eoas);
                prev = (p.proxy_initiating_eoas, p.any_contract_eoas);
            }
        }
    }
}
