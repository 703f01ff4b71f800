//! Behavioral proxy detection: a contract is a proxy when it forwards a call
//! by delegatecall with the same function selector it was called with.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{ContractIndex, Corpus, TxGroup};
use crate::model::{Address, CallType, TraceAddress, TxHash};
use crate::tracegraph::parent_indices;

/// Location of one delegatecall trace that confirmed forwarding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Evidence {
    pub block_number: u64,
    pub transaction_hash: TxHash,
    pub trace_address: TraceAddress,
    pub status: bool,
}

impl Evidence {
    fn key(&self) -> (u64, &TxHash, &TraceAddress) {
        (self.block_number, &self.transaction_hash, &self.trace_address)
    }

    fn earlier(self, other: Evidence) -> Evidence {
        if other.key() < self.key() {
            other
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub proxy: Address,
    pub logic: Address,
    pub evidence: Evidence,
}

/// Forwarding delegatecalls in one transaction.
///
/// A delegatecall `d` counts when its parent trace is a message call and both
/// calldatas carry the same selector. Only the immediate parent is compared.
pub fn detect_in_tx(tx: &TxGroup) -> Vec<Detection> {
    let traces = &tx.traces;
    if !traces.iter().any(|t| t.call_type == CallType::DelegateCall) {
        return Vec::new();
    }
    let parents = parent_indices(traces);
    traces
        .iter()
        .zip(&parents)
        .filter(|(d, _)| d.call_type == CallType::DelegateCall)
        .filter_map(|(d, parent)| {
            let p = &traces[(*parent)?];
            if !p.call_type.is_message_call() {
                return None;
            }
            let sel = d.selector()?;
            (p.selector()? == sel).then(|| Detection {
                proxy: d.from,
                logic: d.to,
                evidence: Evidence {
                    block_number: d.block_number,
                    transaction_hash: d.transaction_hash,
                    trace_address: d.trace_address.clone(),
                    status: d.status,
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicEvidence {
    pub first: Evidence,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyFinding {
    pub proxy: Address,
    /// Every confirmed delegate target, with its earliest evidence.
    pub logic_targets: BTreeMap<Address, LogicEvidence>,
    pub first_evidence: Evidence,
    pub evidence_count: u64,
    /// Confirming delegatecalls that reverted; they still count as evidence.
    pub failed_evidence_count: u64,
}

impl ProxyFinding {
    fn from_detection(d: Detection) -> Self {
        let failed = u64::from(!d.evidence.status);
        ProxyFinding {
            proxy: d.proxy,
            logic_targets: BTreeMap::from([(d.logic, LogicEvidence {
                first: d.evidence.clone(),
                count: 1,
            })]),
            first_evidence: d.evidence,
            evidence_count: 1,
            failed_evidence_count: failed,
        }
    }

    fn merge(&mut self, other: ProxyFinding) {
        debug_assert_eq!(self.proxy, other.proxy);
        for (logic, ev) in other.logic_targets {
            match self.logic_targets.get_mut(&logic) {
                Some(mine) => {
                    mine.count += ev.count;
                    mine.first = mine.first.clone().earlier(ev.first);
                }
                None => {
                    self.logic_targets.insert(logic, ev);
                }
            }
        }
        self.first_evidence = self.first_evidence.clone().earlier(other.first_evidence);
        self.evidence_count += other.evidence_count;
        self.failed_evidence_count += other.failed_evidence_count;
    }

    pub fn logic_count(&self) -> usize {
        self.logic_targets.len()
    }
}

pub type Findings = BTreeMap<Address, ProxyFinding>;

fn merge_findings(mut a: Findings, b: Findings) -> Findings {
    if a.len() < b.len() {
        return merge_findings(b, a);
    }
    for (proxy, finding) in b {
        match a.get_mut(&proxy) {
            Some(mine) => mine.merge(finding),
            None => {
                a.insert(proxy, finding);
            }
        }
    }
    a
}

fn add_detection(mut acc: Findings, d: Detection) -> Findings {
    let single = ProxyFinding::from_detection(d);
    match acc.get_mut(&single.proxy) {
        Some(mine) => mine.merge(single),
        None => {
            acc.insert(single.proxy, single);
        }
    }
    acc
}

/// Union of per-transaction detections over the corpus.
pub fn detect_corpus(corpus: &Corpus) -> Findings {
    detect_groups(&corpus.groups)
}

pub fn detect_groups(groups: &[TxGroup]) -> Findings {
    groups
        .par_iter()
        .fold(Findings::new, |acc, tx| detect_in_tx(tx).into_iter().fold(acc, add_detection))
        .reduce(Findings::new, merge_findings)
}

/// Detected proxy addresses.
pub fn proxy_set(findings: &Findings) -> BTreeSet<Address> {
    findings.keys().copied().collect()
}

/// One line of `proxies.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyRow {
    pub proxy: Address,
    pub logic_targets: Vec<Address>,
    pub evidence_count: u64,
    pub failed_evidence_count: u64,
    pub first_evidence_tx: TxHash,
    pub first_evidence_trace: TraceAddress,
    pub first_evidence_block: u64,
}

impl From<&ProxyFinding> for ProxyRow {
    fn from(f: &ProxyFinding) -> Self {
        ProxyRow {
            proxy: f.proxy,
            logic_targets: f.logic_targets.keys().copied().collect(),
            evidence_count: f.evidence_count,
            failed_evidence_count: f.failed_evidence_count,
            first_evidence_tx: f.first_evidence.transaction_hash,
            first_evidence_trace: f.first_evidence.trace_address.clone(),
            first_evidence_block: f.first_evidence.block_number,
        }
    }
}

pub fn write_proxies<W: Write>(findings: &Findings, mut out: W) -> std::io::Result<()> {
    for f in findings.values() {
        serde_json::to_writer(&mut out, &ProxyRow::from(f))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads `proxies.jsonl` back as proxy → logic targets.
pub fn read_proxies<R: BufRead>(input: R) -> Result<Vec<ProxyRow>, String> {
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Proxy,
    Other,
}

#[derive(Debug, Error)]
pub enum GroundTruthError {
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
}

/// Reads a CSV with columns `address,label` where label is `proxy` or `other`.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<BTreeMap<Address, Label>, GroundTruthError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| GroundTruthError::Row { line, message };
        let address: Address = row
            .get(0)
            .ok_or_else(|| bad("missing address".into()))?
            .parse()
            .map_err(|e| bad(format!("{e}")))?;
        let label = match row.get(1).map(|s| s.trim().to_ascii_lowercase()).as_deref() {
            Some("proxy") => Label::Proxy,
            Some("other") => Label::Other,
            other => return Err(bad(format!("unknown label {other:?}"))),
        };
        out.insert(address, label);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: u64,
    pub false_positive: u64,
    pub false_negative: u64,
    pub true_negative: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ClassMetrics {
    /// Precision is 1.0 when nothing was flagged and recall is 1.0 when
    /// nothing was there to find; F1 is 0.0 when both are zero.
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub confusion: Confusion,
    pub proxy: ClassMetrics,
    pub other: ClassMetrics,
    /// Ground-truth addresses missing from the contracts corpus.
    pub excluded: Vec<Address>,
}

pub fn score(findings: &Findings, ground_truth: &BTreeMap<Address, Label>, contracts: &ContractIndex) -> DetectionReport {
    let mut c = Confusion::default();
    let mut excluded = Vec::new();
    for (address, label) in ground_truth {
        if !contracts.is_contract(address) {
            log::warn!("ground-truth address {address} is not in the contracts corpus; excluded");
            excluded.push(*address);
            continue;
        }
        match (findings.contains_key(address), label) {
            (true, Label::Proxy) => c.true_positive += 1,
            (true, Label::Other) => c.false_positive += 1,
            (false, Label::Proxy) => c.false_negative += 1,
            (false, Label::Other) => c.true_negative += 1,
        }
    }
    DetectionReport {
        proxy: ClassMetrics::from_counts(c.true_positive, c.false_positive, c.false_negative),
        other: ClassMetrics::from_counts(c.true_negative, c.false_negative, c.false_positive),
        confusion: c,
        excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub n: usize,
    pub fraction: f64,
}

/// Fraction of proxies with at least `n` logic contracts, for `n = 1..=max`.
pub fn logic_per_proxy_ccdf(findings: &Findings) -> Vec<CcdfPoint> {
    let total = findings.len();
    if total == 0 {
        return Vec::new();
    }
    let max = findings.values().map(ProxyFinding::logic_count).max().unwrap_or(0);
    // hist[k] = proxies with exactly k logics.
    let mut hist = vec![0usize; max + 1];
    for f in findings.values() {
        hist[f.logic_count()] += 1;
    }
    let mut at_least = total;
    let mut out = Vec::with_capacity(max);
    for n in 1..=max {
        at_least -= hist[n - 1];
        out.push(CcdfPoint {
            n,
            fraction: at_least as f64 / total as f64,
        });
    }
    out
}

/// CCDF value at `n`, zero past the largest observed count.
pub fn ccdf_at(table: &[CcdfPoint], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    table.get(n - 1).map_or(0.0, |p| p.fraction)
}
