//! Deterministic synthetic corpora with planted proxies, decoys, creational
//! patterns and classifier fixtures, plus the ground truth for each plant.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Duration;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::builder::addr;
use super::bytecode;
use crate::classify::{slots, FixtureState, ImplKind, Purpose};
use crate::detector::Label;
use crate::lineage::{parse_signature, style_of, DeploymentStyle, NodeLabel, MAX_CHAIN_DEPTH};
use crate::model::{
    keccak256, selector_from_signature, Address, CallType, ContractRecord, HexData, Month, TraceAddress, TraceRecord,
    B256,
};

/// The twelve creational patterns observed on mainnet.
pub const TABLE2_SIGNATURES: [&str; 12] = [
    "EOA > P",
    "EOA > FA > P",
    "EOA > PF > P",
    "EOA > FA > FA > P",
    "EOA > FA > FA > FA > FA > P",
    "EOA > FA > PF > P",
    "EOA > PF > PF > P",
    "EOA > FA > PF > PF > P",
    "EOA > FA > FA > FA > P",
    "EOA > FA > FA > PF > P",
    "EOA > FA > FA > PF > PF > P",
    "EOA > FA > FA > PF > PF > PF > P",
];

pub const FILE_TRACES: &str = "traces.jsonl";
pub const FILE_CONTRACTS: &str = "contracts.jsonl";
pub const FILE_GROUND_TRUTH: &str = "ground_truth.csv";
pub const FILE_STATE: &str = "state.json";
pub const FILE_PLANT: &str = "plant.json";

const FIRST_BLOCK: u64 = 12_000_000;
const TXS_PER_BLOCK: usize = 4;

const CALL_SIGNATURES: [&str; 6] = [
    "transfer(address,uint256)",
    "approve(address,uint256)",
    "deposit()",
    "withdraw(uint256)",
    "mint(address,uint256)",
    "execute(bytes)",
];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("infeasible fixture spec: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Encode(String),
}

/// Counts per planted phenomenon. Every count is exact except background
/// traffic, which grows until both `background_txs` and `target_records`
/// are met.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub seed: u64,
    pub start: Month,
    pub months: u32,
    /// Hardcoded forwarders with delegate traffic.
    pub active_proxies: usize,
    /// Proxies that are deployed but never called.
    pub inactive_proxies: usize,
    pub non_proxies: usize,
    /// Non-proxies whose traces contain delegatecall or callcode.
    pub decoys: usize,
    /// Minimal-proxy clones from one clone factory.
    pub erc1167: usize,
    /// Creational-pattern signatures, one plant each.
    pub patterns: Vec<String>,
    /// Upper bound on proxies deployed by each on-chain pattern plant.
    pub pattern_fanout: usize,
    /// One classifier fixture per implementation kind.
    pub impl_kinds: bool,
    pub background_txs: usize,
    pub target_records: Option<usize>,
    pub eoas: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec::bundled()
    }
}

impl FixtureSpec {
    /// The reference corpus: every phenomenon, about a thousand transactions.
    pub fn bundled() -> Self {
        FixtureSpec {
            seed: 42,
            start: Month { year: 2021, month: 1 },
            months: 12,
            active_proxies: 20,
            inactive_proxies: 9,
            non_proxies: 80,
            decoys: 6,
            erc1167: 5,
            patterns: TABLE2_SIGNATURES.iter().map(|s| s.to_string()).collect(),
            pattern_fanout: 3,
            impl_kinds: true,
            background_txs: 1000,
            target_records: None,
            eoas: 40,
        }
    }

    /// Only plain proxies, decoys and non-proxies, for scoring the detector.
    pub fn detection() -> Self {
        FixtureSpec {
            erc1167: 0,
            patterns: Vec::new(),
            impl_kinds: false,
            decoys: 12,
            ..FixtureSpec::bundled()
        }
    }

    /// The bundled plants inside a million trace records.
    pub fn stress() -> Self {
        FixtureSpec {
            target_records: Some(1_000_000),
            eoas: 2_000,
            non_proxies: 2_000,
            ..FixtureSpec::bundled()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, FixtureError> {
        toml::from_str(text).map_err(|e| FixtureError::Encode(e.to_string()))
    }

    /// Parsed pattern labels, or the reason the spec cannot be generated.
    pub fn validate(&self) -> Result<Vec<Vec<NodeLabel>>, FixtureError> {
        let bad = |m: String| Err(FixtureError::Infeasible(m));
        if self.months == 0 {
            return bad("months must be at least 1".into());
        }
        if self.eoas == 0 {
            return bad("at least one EOA is required".into());
        }
        if self.pattern_fanout == 0 && !self.patterns.is_empty() {
            return bad("pattern_fanout must be at least 1".into());
        }
        let mut out = Vec::new();
        for sig in &self.patterns {
            let labels = parse_signature(sig).map_err(FixtureError::Infeasible)?;
            if labels.len() > MAX_CHAIN_DEPTH {
                return bad(format!("pattern {sig:?} has {} nodes; the limit is {MAX_CHAIN_DEPTH}", labels.len()));
            }
            let n = labels.len();
            if n < 2 || labels[0] != NodeLabel::Eoa || labels[n - 1] != NodeLabel::P {
                return bad(format!("pattern {sig:?} must start with EOA and end with P"));
            }
            if labels[1..n - 1].iter().any(|l| !matches!(l, NodeLabel::Fa | NodeLabel::Pf)) {
                return bad(format!("pattern {sig:?} may only have FA or PF intermediaries"));
            }
            out.push(labels);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyKind {
    /// Delegatecall with a selector different from the caller's.
    Library,
    /// Delegatecall issued from a constructor.
    Constructor,
    /// Callcode with a matching selector.
    CallCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoyPlant {
    pub address: Address,
    pub kind: DecoyKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternPlant {
    pub signature: String,
    pub style: DeploymentStyle,
    /// Root EOA first, last deployer last.
    pub nodes: Vec<Address>,
    pub proxies: Vec<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindPlant {
    pub proxy: Address,
    pub kind: ImplKind,
    pub purpose: Purpose,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plant {
    pub seed: u64,
    /// Every proxy with delegate traffic, including pattern and kind plants.
    pub active_proxies: Vec<Address>,
    pub inactive_proxies: Vec<Address>,
    pub non_proxies: Vec<Address>,
    pub decoys: Vec<DecoyPlant>,
    pub erc1167: Vec<Address>,
    pub patterns: Vec<PatternPlant>,
    pub impl_kinds: Vec<KindPlant>,
    pub transactions: usize,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub traces: Vec<TraceRecord>,
    pub contracts: Vec<ContractRecord>,
    pub ground_truth: BTreeMap<Address, Label>,
    pub state: FixtureState,
    pub plant: Plant,
}

struct DraftTrace {
    trace_address: Vec<u32>,
    call_type: CallType,
    from: Address,
    to: Address,
    input: Vec<u8>,
    gas: u64,
}

struct Draft {
    time: u64,
    traces: Vec<DraftTrace>,
    failed: bool,
    gas_gwei: u64,
}

/// A proxy reachable by traffic: (proxy, logic, beacon consulted first).
#[derive(Clone, Copy)]
struct Live {
    proxy: Address,
    logic: Address,
    beacon: Option<Address>,
    since: u64,
}

struct Gen<'a> {
    spec: &'a FixtureSpec,
    rng: ChaCha8Rng,
    span: u64,
    ids: u64,
    drafts: Vec<Draft>,
    records: usize,
    /// (address, bytecode, creating draft)
    contracts: Vec<(Address, Vec<u8>, usize)>,
    created_at: HashMap<Address, u64>,
    labels: BTreeMap<Address, Label>,
    state: FixtureState,
    plant: Plant,
    eoas: Vec<Address>,
    non_proxies: Vec<Address>,
    live: Vec<Live>,
    library_decoys: Vec<(Address, Address)>,
}

impl<'a> Gen<'a> {
    fn fresh(&mut self, role: &str) -> Address {
        self.ids += 1;
        addr(&format!("{}/{role}/{}", self.spec.seed, self.ids))
    }

    fn eoa(&mut self) -> Address {
        self.eoas[self.rng.gen_range(0..self.eoas.len())]
    }

    /// Uniform in `[lo, hi)`, or `lo` when the range is empty.
    fn time_in(&mut self, lo: u64, hi: u64) -> u64 {
        if lo + 1 >= hi {
            lo
        } else {
            self.rng.gen_range(lo..hi)
        }
    }

    fn after(&mut self, t: u64) -> u64 {
        self.time_in(t + 1, self.span)
    }

    fn calldata(&mut self, signature: &str) -> Vec<u8> {
        let mut data = selector_from_signature(signature).0.to_vec();
        data.extend((0..32).map(|_| self.rng.gen::<u8>()));
        data
    }

    fn any_calldata(&mut self) -> Vec<u8> {
        let sig = CALL_SIGNATURES[self.rng.gen_range(0..CALL_SIGNATURES.len())];
        self.calldata(sig)
    }

    fn trace(trace_address: &[u32], call_type: CallType, from: Address, to: Address, input: Vec<u8>, gas: u64) -> DraftTrace {
        DraftTrace {
            trace_address: trace_address.to_vec(),
            call_type,
            from,
            to,
            input,
            gas,
        }
    }

    fn push(&mut self, time: u64, traces: Vec<DraftTrace>, failed: bool) -> usize {
        self.records += traces.len();
        let gas_gwei = self.rng.gen_range(5..150);
        self.drafts.push(Draft {
            time,
            traces,
            failed,
            gas_gwei,
        });
        self.drafts.len() - 1
    }

    fn register(&mut self, address: Address, code: Vec<u8>, draft: usize, time: u64, label: Label) {
        self.contracts.push((address, code, draft));
        self.created_at.insert(address, time);
        self.labels.insert(address, label);
    }

    fn init_code(&mut self) -> Vec<u8> {
        let mut code = vec![0x60, 0x80, 0x60, 0x40, 0x52];
        code.extend((0..16).map(|_| self.rng.gen::<u8>()));
        code
    }

    /// Root-level create by an EOA.
    fn create_by_eoa(&mut self, eoa: Address, address: Address, code: Vec<u8>, gas: u64, time: u64, label: Label) {
        let init = self.init_code();
        let d = self.push(time, vec![Self::trace(&[], CallType::Create, eoa, address, init, gas)], false);
        self.register(address, code, d, time, label);
    }

    /// `eoa` calls `factory`, which creates `address`. A `logic` makes the
    /// factory a proxy: the create runs inside its delegatecall.
    #[allow(clippy::too_many_arguments)]
    fn create_via(
        &mut self,
        eoa: Address,
        factory: Address,
        logic: Option<Address>,
        address: Address,
        code: Vec<u8>,
        gas: u64,
        time: u64,
        label: Label,
    ) {
        let input = self.calldata("deploy(bytes32)");
        let init = self.init_code();
        let mut traces = vec![Self::trace(&[], CallType::Call, eoa, factory, input.clone(), gas + 30_000)];
        match logic {
            None => traces.push(Self::trace(&[0], CallType::Create, factory, address, init, gas)),
            Some(logic) => {
                traces.push(Self::trace(&[0], CallType::DelegateCall, factory, logic, input, gas + 10_000));
                traces.push(Self::trace(&[0, 0], CallType::Create, factory, address, init, gas));
            }
        }
        let d = self.push(time, traces, false);
        self.register(address, code, d, time, label);
    }

    fn proxy_call(&mut self, live: Live, time: u64, nested_via: Option<Address>) {
        let eoa = self.eoa();
        let input = self.any_calldata();
        let gas = self.rng.gen_range(30_000..150_000);
        let mut traces = Vec::new();
        let base: Vec<u32> = match nested_via {
            Some(outer) => {
                let outer_input = self.any_calldata();
                traces.push(Self::trace(&[], CallType::Call, eoa, outer, outer_input, gas + 40_000));
                traces.push(Self::trace(&[0], CallType::Call, outer, live.proxy, input.clone(), gas + 20_000));
                vec![0]
            }
            None => {
                traces.push(Self::trace(&[], CallType::Call, eoa, live.proxy, input.clone(), gas + 20_000));
                vec![]
            }
        };
        let child = |i: u32| -> Vec<u32> { base.iter().copied().chain([i]).collect() };
        let mut next = 0;
        if let Some(beacon) = live.beacon {
            let getter = selector_from_signature("implementation()").0.to_vec();
            traces.push(Self::trace(&child(next), CallType::StaticCall, live.proxy, beacon, getter, 2_500));
            next += 1;
        }
        traces.push(Self::trace(&child(next), CallType::DelegateCall, live.proxy, live.logic, input, gas));
        self.push(time, traces, false);
    }

    fn exercise(&mut self, live: Live, calls: usize) {
        for _ in 0..calls {
            let t = self.after(live.since);
            self.proxy_call(live, t, None);
        }
    }

    fn creation_gas(&mut self, lo: u64, hi: u64) -> u64 {
        self.rng.gen_range(lo..hi)
    }

    fn plant_non_proxies(&mut self) {
        for i in 0..self.spec.non_proxies {
            let a = self.fresh("contract");
            let eoa = self.eoa();
            let t = self.time_in(0, self.span / 4);
            let len = self.rng.gen_range(200..3_000);
            let gas = self.creation_gas(200_000, 1_500_000);
            self.create_by_eoa(eoa, a, bytecode::plain_contract(&format!("np{i}"), len), gas, t, Label::Other);
            self.non_proxies.push(a);
        }
        self.plant.non_proxies = self.non_proxies.clone();
    }

    fn plant_logic(&mut self, tag: &str, code: Vec<u8>, deployer: Address, before: u64) -> Address {
        let a = self.fresh("logic");
        let t = self.time_in(0, before.max(1));
        let gas = self.creation_gas(400_000, 2_000_000);
        self.create_by_eoa(deployer, a, code, gas, t, Label::Other);
        let _ = tag;
        a
    }

    fn plant_plain_proxies(&mut self) {
        let total = self.spec.active_proxies + self.spec.inactive_proxies;
        if total == 0 {
            return;
        }
        let n_dev = (self.spec.active_proxies / 4).max(2);
        let devs: Vec<Address> = (0..n_dev).map(|_| self.fresh("dev")).collect();
        let n_logic = (total / 3).max(1);
        let logics: Vec<Address> = (0..n_logic)
            .map(|i| {
                let dev = devs[i % devs.len()];
                self.plant_logic("plain", bytecode::plain_logic(&format!("logic{i}")), dev, self.span / 8)
            })
            .collect();
        for i in 0..total {
            let dev = devs[self.rng.gen_range(0..devs.len())];
            let logic = logics[self.rng.gen_range(0..logics.len())];
            let p = self.fresh("proxy");
            let t = self.time_in(self.span / 8, self.span / 2);
            let gas = self.creation_gas(60_000, 120_000);
            self.create_by_eoa(dev, p, bytecode::hardcoded_forwarder(&logic), gas, t, Label::Proxy);
            if i < self.spec.active_proxies {
                let live = Live {
                    proxy: p,
                    logic,
                    beacon: None,
                    since: t,
                };
                let calls = self.rng.gen_range(1..=12);
                self.exercise(live, calls);
                self.live.push(live);
                self.plant.active_proxies.push(p);
            } else {
                self.plant.inactive_proxies.push(p);
            }
        }
    }

    fn plant_decoys(&mut self) {
        let kinds = [DecoyKind::Library, DecoyKind::Constructor, DecoyKind::CallCode];
        for i in 0..self.spec.decoys {
            let kind = kinds[i % kinds.len()];
            let eoa = self.eoa();
            let lib = self.fresh("library");
            let t0 = self.time_in(0, self.span / 4);
            self.create_by_eoa(eoa, lib, bytecode::plain_contract(&format!("lib{i}"), 400), 300_000, t0, Label::Other);
            let d = self.fresh("decoy");
            let code = bytecode::plain_contract(&format!("decoy{i}"), 900);
            let t = self.after(t0);
            match kind {
                DecoyKind::Constructor => {
                    let init = self.init_code();
                    let input = self.any_calldata();
                    let traces = vec![
                        Self::trace(&[], CallType::Create, eoa, d, init, 500_000),
                        Self::trace(&[0], CallType::DelegateCall, d, lib, input, 40_000),
                    ];
                    let di = self.push(t, traces, false);
                    self.register(d, code, di, t, Label::Other);
                }
                DecoyKind::Library | DecoyKind::CallCode => {
                    self.create_by_eoa(eoa, d, code, 500_000, t, Label::Other);
                }
            }
            let calls = self.rng.gen_range(2..=8);
            for _ in 0..calls {
                let tc = self.after(t);
                self.decoy_call(kind, d, lib, tc);
            }
            if kind == DecoyKind::Library {
                self.library_decoys.push((d, lib));
            }
            self.plant.decoys.push(DecoyPlant { address: d, kind });
        }
    }

    fn decoy_call(&mut self, kind: DecoyKind, decoy: Address, lib: Address, time: u64) {
        let eoa = self.eoa();
        let outer = self.any_calldata();
        let inner = match kind {
            DecoyKind::Library => {
                let mut inner = self.calldata("libraryCall(bytes32)");
                inner[4..].copy_from_slice(&outer[4..]);
                inner
            }
            _ => outer.clone(),
        };
        let child = match kind {
            DecoyKind::CallCode => CallType::CallCode,
            DecoyKind::Library => CallType::DelegateCall,
            DecoyKind::Constructor => CallType::Call,
        };
        let traces = vec![
            Self::trace(&[], CallType::Call, eoa, decoy, outer, 80_000),
            Self::trace(&[0], child, decoy, lib, inner, 40_000),
        ];
        self.push(time, traces, false);
    }

    fn plant_erc1167(&mut self) {
        if self.spec.erc1167 == 0 {
            return;
        }
        let owner = self.fresh("eoa-clones");
        let logic = self.plant_logic("template", bytecode::plain_logic("clone-template"), owner, self.span / 8);
        let factory = self.fresh("clone-factory");
        let t = self.after(self.created_at[&logic]).min(self.span / 4);
        self.create_by_eoa(owner, factory, bytecode::factory("clone-factory"), 1_100_000, t, Label::Other);
        for _ in 0..self.spec.erc1167 {
            let p = self.fresh("clone");
            let tc = self.time_in(t + 1, self.span / 2);
            let gas = self.creation_gas(41_000, 46_000);
            self.create_via(owner, factory, None, p, bytecode::minimal_proxy(&logic), gas, tc, Label::Proxy);
            let live = Live {
                proxy: p,
                logic,
                beacon: None,
                since: tc,
            };
            let calls = self.rng.gen_range(1..=8);
            self.exercise(live, calls);
            self.live.push(live);
            self.plant.erc1167.push(p);
            self.plant.active_proxies.push(p);
        }
    }

    fn plant_pattern(&mut self, signature: &str, labels: &[NodeLabel]) {
        let root = self.fresh("eoa-pattern");
        let step_max = (self.span / (4 * MAX_CHAIN_DEPTH as u64)).max(2);
        let mut t = self.time_in(0, self.span / 4);
        let logic = self.plant_logic("pattern", bytecode::plain_logic(signature), root, t.max(1));
        t = t.max(self.created_at[&logic]);
        // Nodes 1..n-1 are deployers; `logic_of` holds each PF's factory logic.
        let mut nodes = vec![root];
        let mut logic_of: HashMap<Address, Address> = HashMap::new();
        for (j, label) in labels.iter().enumerate().take(labels.len() - 1).skip(1) {
            let parent = nodes[j - 1];
            let a = self.fresh(label.as_str());
            t += self.rng.gen_range(1..step_max);
            let gas = self.creation_gas(800_000, 1_600_000);
            let (code, node_label) = match label {
                NodeLabel::Pf => {
                    let flogic = self.fresh("factory-logic");
                    let tl = t.saturating_sub(1);
                    self.create_by_eoa(root, flogic, bytecode::factory(&format!("{signature}/{j}")), 900_000, tl, Label::Other);
                    logic_of.insert(a, flogic);
                    (bytecode::hardcoded_forwarder(&flogic), Label::Proxy)
                }
                _ => (bytecode::factory(&format!("{signature}/{j}")), Label::Other),
            };
            self.deploy_from(root, parent, &logic_of, a, code, gas, t, node_label);
            if node_label == Label::Proxy {
                self.plant.active_proxies.push(a);
            }
            nodes.push(a);
        }
        let deployer = *nodes.last().expect("root present");
        let style = style_of(signature);
        let fanout = match style {
            DeploymentStyle::OffChain => 1,
            DeploymentStyle::OnChain => self.rng.gen_range(1..=self.spec.pattern_fanout),
        };
        let mut proxies = Vec::new();
        for _ in 0..fanout {
            let p = self.fresh("pattern-proxy");
            t += self.rng.gen_range(1..step_max);
            let gas = self.creation_gas(41_000, 46_000);
            self.deploy_from(root, deployer, &logic_of, p, bytecode::minimal_proxy(&logic), gas, t, Label::Proxy);
            let live = Live {
                proxy: p,
                logic,
                beacon: None,
                since: t,
            };
            let calls = self.rng.gen_range(1..=6);
            self.exercise(live, calls);
            self.live.push(live);
            self.plant.active_proxies.push(p);
            proxies.push(p);
        }
        self.plant.patterns.push(PatternPlant {
            signature: signature.to_owned(),
            style,
            nodes,
            proxies,
        });
    }

    /// Deploys `address` from `parent`: directly when the parent is the root
    /// EOA, otherwise through a call from the root into the parent.
    #[allow(clippy::too_many_arguments)]
    fn deploy_from(
        &mut self,
        root: Address,
        parent: Address,
        logic_of: &HashMap<Address, Address>,
        address: Address,
        code: Vec<u8>,
        gas: u64,
        time: u64,
        label: Label,
    ) {
        if parent == root {
            self.create_by_eoa(root, address, code, gas, time, label);
        } else {
            self.create_via(root, parent, logic_of.get(&parent).copied(), address, code, gas, time, label);
        }
    }

    fn plant_impl_kinds(&mut self) {
        for kind in ImplKind::ALL {
            let owner = self.fresh("eoa-kind");
            let tag = kind.as_str();
            let p = self.fresh("kind-proxy");
            let mut beacon_addr = None;
            let (proxy_code, logic_code, purpose) = match kind {
                ImplKind::Erc1167Minimal => (Vec::new(), bytecode::plain_logic(tag), Purpose::Forwarder),
                ImplKind::Erc1967 => (bytecode::slot_proxy(&slots::ERC1967_IMPL, true), bytecode::plain_logic(tag), Purpose::Upgradeability),
                ImplKind::Erc1967Beacon => (bytecode::beacon_proxy(), bytecode::plain_logic(tag), Purpose::Upgradeability),
                ImplKind::Erc1822Uups => (
                    bytecode::slot_proxy(&slots::ERC1822_PROXIABLE, false),
                    bytecode::uups_logic(&slots::ERC1822_PROXIABLE, tag),
                    Purpose::Upgradeability,
                ),
                ImplKind::OpenZeppelinLegacy => (bytecode::slot_proxy(&slots::OZ_LEGACY_IMPL, true), bytecode::plain_logic(tag), Purpose::Upgradeability),
                ImplKind::GnosisSafeProxy => (bytecode::gnosis_proxy(), bytecode::gnosis_master_copy(tag), Purpose::Upgradeability),
                ImplKind::Erc897 => (bytecode::erc897_proxy(), bytecode::plain_logic(tag), Purpose::Forwarder),
                ImplKind::Customized => (Vec::new(), bytecode::plain_logic(tag), Purpose::Forwarder),
            };
            let logic = self.plant_logic(tag, logic_code, owner, self.span / 8);
            let proxy_code = match kind {
                ImplKind::Erc1167Minimal => bytecode::minimal_proxy(&logic),
                ImplKind::Customized => bytecode::hardcoded_forwarder(&logic),
                _ => proxy_code,
            };
            let logic_word = logic.to_word();
            let account = self.state.account_mut(p);
            match kind {
                ImplKind::Erc1967 => {
                    account.storage.insert(slots::ERC1967_IMPL, logic_word);
                }
                ImplKind::Erc1822Uups => {
                    account.storage.insert(slots::ERC1822_PROXIABLE, logic_word);
                }
                ImplKind::OpenZeppelinLegacy => {
                    account.storage.insert(slots::OZ_LEGACY_IMPL, logic_word);
                }
                ImplKind::GnosisSafeProxy => {
                    account.storage.insert(slots::GNOSIS_MASTERCOPY, logic_word);
                }
                ImplKind::Erc897 => {
                    account.storage.insert(bytecode::erc897_slot(), logic_word);
                    account.calls.insert(
                        HexData::from(&selector_from_signature("implementation()").0[..]),
                        HexData::from(&logic_word.0[..]),
                    );
                }
                ImplKind::Erc1967Beacon => {
                    let b = self.fresh("beacon");
                    self.state.account_mut(p).storage.insert(slots::ERC1967_BEACON, b.to_word());
                    beacon_addr = Some(b);
                }
                ImplKind::Erc1167Minimal | ImplKind::Customized => {}
            }
            let t = self.time_in(self.span / 8, self.span / 4);
            if let Some(b) = beacon_addr {
                let beacon_slot = B256::from_u64(1);
                let code = bytecode::beacon(&beacon_slot, true);
                self.create_by_eoa(owner, b, code.clone(), 400_000, t.saturating_sub(1), Label::Other);
                let acct = self.state.account_mut(b);
                acct.bytecode = Some(HexData(code));
                acct.storage.insert(beacon_slot, logic_word);
            }
            let gas = self.creation_gas(60_000, 400_000);
            self.create_by_eoa(owner, p, proxy_code, gas, t, Label::Proxy);
            let live = Live {
                proxy: p,
                logic,
                beacon: beacon_addr,
                since: t,
            };
            let calls = self.rng.gen_range(2..=6);
            self.exercise(live, calls);
            self.live.push(live);
            self.plant.active_proxies.push(p);
            self.plant.impl_kinds.push(KindPlant { proxy: p, kind, purpose });
        }
    }

    fn background(&mut self) {
        let target = self.spec.target_records.unwrap_or(0);
        let mut n = 0;
        while n < self.spec.background_txs || self.records < target {
            n += 1;
            let roll: u32 = self.rng.gen_range(0..100);
            let t = self.time_in(self.span / 2, self.span);
            let eoa = self.eoa();
            if roll < 45 && !self.non_proxies.is_empty() {
                let c = self.non_proxies[self.rng.gen_range(0..self.non_proxies.len())];
                let input = self.any_calldata();
                let failed = self.rng.gen_range(0..10) == 0;
                let mut traces = vec![Self::trace(&[], CallType::Call, eoa, c, input, 60_000)];
                if self.rng.gen_range(0..10) < 3 {
                    let inner = self.non_proxies[self.rng.gen_range(0..self.non_proxies.len())];
                    let input = self.any_calldata();
                    traces.push(Self::trace(&[0], CallType::Call, c, inner, input, 25_000));
                }
                self.push(t, traces, failed);
            } else if roll < 65 || self.live.is_empty() {
                let to = self.eoa();
                self.push(t, vec![Self::trace(&[], CallType::Call, eoa, to, Vec::new(), 21_000)], false);
            } else if roll < 90 {
                let live = self.live[self.rng.gen_range(0..self.live.len())];
                let t = t.max(live.since + 1);
                let via = (!self.non_proxies.is_empty() && self.rng.gen_range(0..10) < 3)
                    .then(|| self.non_proxies[self.rng.gen_range(0..self.non_proxies.len())]);
                self.proxy_call(live, t, via);
            } else if let Some(&(d, lib)) = self
                .library_decoys
                .get(self.rng.gen_range(0..self.library_decoys.len().max(1)))
            {
                self.decoy_call(DecoyKind::Library, d, lib, t);
            } else {
                let to = self.eoa();
                self.push(t, vec![Self::trace(&[], CallType::Call, eoa, to, Vec::new(), 21_000)], false);
            }
        }
    }

    fn finish(mut self) -> GeneratedCorpus {
        let start = self.spec.start.start();
        let mut order: Vec<usize> = (0..self.drafts.len()).collect();
        order.sort_by_key(|&i| (self.drafts[i].time, i));
        let mut position = vec![0usize; self.drafts.len()];
        for (pos, &i) in order.iter().enumerate() {
            position[i] = pos;
        }
        let block_of = |pos: usize| FIRST_BLOCK + (pos / TXS_PER_BLOCK) as u64;
        let block_time = |pos: usize| {
            let first = order[pos - pos % TXS_PER_BLOCK];
            start + Duration::seconds(self.drafts[first].time as i64)
        };
        let hash_of = |i: usize| B256(keccak256(format!("{}/tx/{i}", self.spec.seed).as_bytes()));

        let mut traces = Vec::with_capacity(self.records);
        for (pos, &i) in order.iter().enumerate() {
            let draft = &self.drafts[i];
            let (block_number, block_timestamp, tx) = (block_of(pos), block_time(pos), hash_of(i));
            for dt in &draft.traces {
                let root = dt.trace_address.is_empty();
                traces.push(TraceRecord {
                    transaction_hash: tx,
                    trace_address: TraceAddress(dt.trace_address.clone()),
                    from: dt.from,
                    to: dt.to,
                    call_type: dt.call_type,
                    input: Some(HexData::from(dt.input.as_slice())),
                    output: Some(HexData::default()),
                    gas_used: BigUint::from(dt.gas),
                    status: !draft.failed,
                    value: BigUint::default(),
                    block_number,
                    block_timestamp,
                    gas_price: root.then(|| BigUint::from(draft.gas_gwei) * BigUint::from(1_000_000_000u64)),
                });
            }
        }
        let mut contracts: Vec<ContractRecord> = self
            .contracts
            .drain(..)
            .map(|(address, code, d)| {
                let pos = position[d];
                ContractRecord {
                    address,
                    bytecode: HexData(code),
                    created_at: block_time(pos),
                    creation_tx: hash_of(d),
                    block_number: block_of(pos),
                }
            })
            .collect();
        contracts.sort_by_key(|c| c.address);
        self.plant.seed = self.spec.seed;
        self.plant.transactions = self.drafts.len();
        self.plant.records = traces.len();
        GeneratedCorpus {
            traces,
            contracts,
            ground_truth: self.labels,
            state: self.state,
            plant: self.plant,
        }
    }
}

/// Builds the corpus described by `spec`. Identical specs give identical corpora.
pub fn generate(spec: &FixtureSpec) -> Result<GeneratedCorpus, FixtureError> {
    let patterns = spec.validate()?;
    let start = spec.start.start();
    let end = (0..spec.months).fold(spec.start, |m, _| m.next()).start();
    let span = (end - start).num_seconds() as u64;
    let mut g = Gen {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        span,
        ids: 0,
        drafts: Vec::new(),
        records: 0,
        contracts: Vec::new(),
        created_at: HashMap::new(),
        labels: BTreeMap::new(),
        state: FixtureState::default(),
        plant: Plant::default(),
        eoas: Vec::new(),
        non_proxies: Vec::new(),
        live: Vec::new(),
        library_decoys: Vec::new(),
    };
    g.eoas = (0..spec.eoas).map(|_| g.fresh("eoa")).collect();
    g.plant_non_proxies();
    g.plant_plain_proxies();
    g.plant_decoys();
    g.plant_erc1167();
    for (sig, labels) in spec.patterns.iter().zip(&patterns) {
        g.plant_pattern(sig, labels);
    }
    if spec.impl_kinds {
        g.plant_impl_kinds();
    }
    g.background();
    Ok(g.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureFiles {
    pub traces: PathBuf,
    pub contracts: PathBuf,
    pub ground_truth: PathBuf,
    pub state: PathBuf,
    pub plant: PathBuf,
}

impl FixtureFiles {
    pub fn in_dir(dir: &Path) -> Self {
        FixtureFiles {
            traces: dir.join(FILE_TRACES),
            contracts: dir.join(FILE_CONTRACTS),
            ground_truth: dir.join(FILE_GROUND_TRUTH),
            state: dir.join(FILE_STATE),
            plant: dir.join(FILE_PLANT),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> FixtureError + '_ {
    move |source| FixtureError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), FixtureError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| FixtureError::Encode(e.to_string()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn write_pretty<T: Serialize>(path: &Path, value: &T) -> Result<(), FixtureError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FixtureError::Encode(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

impl GeneratedCorpus {
    pub fn write(&self, dir: &Path) -> Result<FixtureFiles, FixtureError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let files = FixtureFiles::in_dir(dir);
        write_lines(&files.traces, &self.traces)?;
        write_lines(&files.contracts, &self.contracts)?;
        let mut gt = csv::Writer::from_path(&files.ground_truth).map_err(|e| FixtureError::Encode(e.to_string()))?;
        gt.write_record(["address", "label"]).map_err(|e| FixtureError::Encode(e.to_string()))?;
        for (a, label) in &self.ground_truth {
            let label = match label {
                Label::Proxy => "proxy",
                Label::Other => "other",
            };
            gt.write_record([a.to_string().as_str(), label])
                .map_err(|e| FixtureError::Encode(e.to_string()))?;
        }
        gt.flush().map_err(io_err(&files.ground_truth))?;
        write_pretty(&files.state, &self.state)?;
        write_pretty(&files.plant, &self.plant)?;
        Ok(files)
    }
}

/// Generates and writes a corpus into `dir`.
pub fn gen_fixture(spec: &FixtureSpec, dir: &Path) -> Result<(Plant, FixtureFiles), FixtureError> {
    let corpus = generate(spec)?;
    let files = corpus.write(dir)?;
    Ok((corpus.plant, files))
}
