//! Per-transaction call graphs and monthly multi-contract transaction ratios.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::ingest::{ContractIndex, Corpus, TxGroup};
use crate::model::{Address, CallType, Month, TraceRecord};

/// Index of each trace's parent within a call-tree-ordered slice: the
/// longest proper prefix of its trace address that is present. `None` only
/// for traces with no present prefix (the root).
pub fn parent_indices(traces: &[TraceRecord]) -> Vec<Option<usize>> {
    let index: HashMap<&[u32], usize> = traces
        .iter()
        .enumerate()
        .map(|(i, t)| (t.trace_address.0.as_slice(), i))
        .collect();
    traces
        .iter()
        .map(|t| {
            let path = t.trace_address.0.as_slice();
            (0..path.len()).rev().find_map(|len| index.get(&path[..len]).copied())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CallEdge {
    pub parent: usize,
    pub child: usize,
    pub call_type: CallType,
}

/// Call tree of one transaction. Node `i` is trace `i` of the group; edges
/// are ordered by child trace address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub edges: Vec<CallEdge>,
    node_count: usize,
    addresses: Vec<Address>,
}

impl CallGraph {
    pub fn trace_count(&self) -> usize {
        self.node_count
    }

    /// Distinct addresses appearing as caller or callee, sorted.
    pub fn addresses(&self) -> &[Address] {
        &self.addresses
    }

    pub fn children(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.parent == node).map(|e| e.child)
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.edges.iter().find(|e| e.child == node).map(|e| e.parent)
    }
}

pub fn build_call_graph(tx: &TxGroup) -> CallGraph {
    let parents = parent_indices(&tx.traces);
    let edges = parents
        .iter()
        .enumerate()
        .filter_map(|(child, parent)| {
            parent.map(|parent| CallEdge {
                parent,
                child,
                call_type: tx.traces[child].call_type,
            })
        })
        .collect();
    let mut addresses: Vec<Address> = tx.traces.iter().flat_map(|t| [t.from, t.to]).collect();
    addresses.sort();
    addresses.dedup();
    CallGraph {
        edges,
        node_count: tx.traces.len(),
        addresses,
    }
}

fn is_cross_contract(trace: &TraceRecord, contracts: &ContractIndex) -> bool {
    !trace.is_root()
        && trace.call_type.is_message_call()
        && trace.from != trace.to
        && contracts.is_contract(&trace.from)
        && contracts.is_contract(&trace.to)
}

/// True iff some internal message call links two different contracts.
/// Failed calls count.
pub fn is_multi_contract(tx: &TxGroup, contracts: &ContractIndex) -> bool {
    tx.traces.iter().any(|t| is_cross_contract(t, contracts))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MonthlyPoint {
    pub numerator: u64,
    pub denominator: u64,
}

impl MonthlyPoint {
    pub fn ratio(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

/// Monthly counts over a contiguous run of months.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MonthlySeries {
    pub points: BTreeMap<Month, MonthlyPoint>,
}

impl MonthlySeries {
    /// Zero-filled series covering `first..=last`.
    pub fn over(first: Month, last: Month) -> Self {
        MonthlySeries {
            points: Month::range(first, last).map(|m| (m, MonthlyPoint::default())).collect(),
        }
    }

    /// Series from sparse counts, zero-filled between the earliest and latest month.
    pub fn from_counts(counts: BTreeMap<Month, MonthlyPoint>) -> Self {
        let (Some(first), Some(last)) = (counts.keys().next(), counts.keys().next_back()) else {
            return MonthlySeries::default();
        };
        let mut series = MonthlySeries::over(*first, *last);
        series.points.extend(counts);
        series
    }

    pub fn get(&self, month: Month) -> Option<&MonthlyPoint> {
        self.points.get(&month)
    }

    pub fn ratio(&self, month: Month) -> Option<f64> {
        self.get(month).and_then(MonthlyPoint::ratio)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// CSV with columns month, numerator, denominator, ratio; the ratio cell
    /// is blank when the denominator is zero.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "numerator", "denominator", "ratio"])?;
        for (month, p) in &self.points {
            let ratio = p.ratio().map(|r| r.to_string()).unwrap_or_default();
            w.write_record([month.to_string(), p.numerator.to_string(), p.denominator.to_string(), ratio])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn merge_counts(
    mut a: BTreeMap<Month, MonthlyPoint>,
    b: BTreeMap<Month, MonthlyPoint>,
) -> BTreeMap<Month, MonthlyPoint> {
    for (m, p) in b {
        let e = a.entry(m).or_default();
        e.numerator += p.numerator;
        e.denominator += p.denominator;
    }
    a
}

/// Per month: transactions (denominator) and multi-contract transactions
/// (numerator). With a filter, the numerator also requires at least one
/// trace of that call type.
pub fn monthly_multi_contract_ratio(corpus: &Corpus, filter: Option<CallType>) -> MonthlySeries {
    let counts = corpus
        .groups
        .par_iter()
        .fold(BTreeMap::new, |mut acc: BTreeMap<Month, MonthlyPoint>, tx| {
            let hit = is_multi_contract(tx, &corpus.contracts)
                && filter.map_or(true, |ct| tx.traces.iter().any(|t| t.call_type == ct));
            let e = acc.entry(tx.month()).or_default();
            e.denominator += 1;
            e.numerator += u64::from(hit);
            acc
        })
        .reduce(BTreeMap::new, merge_counts);
    MonthlySeries::from_counts(counts)
}
