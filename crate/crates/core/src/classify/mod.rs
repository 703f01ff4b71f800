//! Reference-implementation fingerprinting and purpose classification.

pub mod disasm;
mod fingerprint;
mod purpose;
pub mod slots;
pub mod state;

use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use fingerprint::{
    detect_erc1167, erc1167_runtime, fingerprint, word_address, Fingerprint, FingerprintEvidence, ImplKind,
    ERC1167_LEN, ERC1167_PREFIX, ERC1167_SUFFIX, GNOSIS_MARKER,
};
pub use purpose::{classify_purpose, Code, Purpose, PurposeVerdict, SstoreSite, StepNote};
pub use state::{AccountFixture, FixtureState, ReaderError, RpcState, StateReader};

use crate::detector::Findings;
use crate::ingest::ContractIndex;
use crate::model::{Address, HexData};

/// Per-proxy result. `deferred` holds the reader failure when either
/// analysis could not complete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyClass {
    pub proxy: Address,
    pub impl_kind: Option<Fingerprint>,
    pub purpose: Option<PurposeVerdict>,
    pub deferred: Option<String>,
}

impl ProxyClass {
    pub fn impl_kind_label(&self) -> &'static str {
        self.impl_kind.as_ref().map_or("Deferred", |f| f.kind.as_str())
    }

    pub fn purpose_label(&self) -> &'static str {
        self.purpose.as_ref().map_or("Deferred", |p| p.purpose.as_str())
    }

    pub fn evidence(&self) -> String {
        let mut parts = Vec::new();
        if let Some(fp) = &self.impl_kind {
            parts.push(fp.evidence.to_string());
        }
        if let Some(p) = &self.purpose {
            parts.push(p.summary());
        }
        if let Some(err) = &self.deferred {
            parts.push(format!("deferred: {err}"));
        }
        parts.join(" | ")
    }
}

/// Bytecode from the contract index, falling back to the reader.
fn bytecode_of(address: &Address, contracts: &ContractIndex, reader: &dyn StateReader) -> Result<HexData, ReaderError> {
    match contracts.get(address).filter(|r| !r.bytecode.is_empty()) {
        Some(rec) => Ok(rec.bytecode.clone()),
        None => Ok(reader.code_at(address)?.unwrap_or_default()),
    }
}

/// Classifies one proxy. Bytecode comes from the contract index, falling back
/// to the reader.
pub fn classify_proxy(proxy: Address, logics: &[Address], contracts: &ContractIndex, reader: &dyn StateReader) -> ProxyClass {
    let run = || -> Result<(Fingerprint, PurposeVerdict), ReaderError> {
        let bytecode = bytecode_of(&proxy, contracts, reader)?;
        let fp = fingerprint(&proxy, bytecode.as_slice(), reader)?;
        let logic_codes = logics
            .iter()
            .map(|l| Ok((*l, bytecode_of(l, contracts, reader)?)))
            .collect::<Result<Vec<_>, ReaderError>>()?;
        let logic_refs: Vec<Code<'_>> = logic_codes
            .iter()
            .map(|(address, code)| Code {
                address: *address,
                bytecode: code.as_slice(),
            })
            .collect();
        let proxy_code = Code {
            address: proxy,
            bytecode: bytecode.as_slice(),
        };
        let verdict = classify_purpose(proxy_code, &logic_refs, reader)?;
        Ok((fp, verdict))
    };
    match run() {
        Ok((fp, verdict)) => ProxyClass {
            proxy,
            impl_kind: Some(fp),
            purpose: Some(verdict),
            deferred: None,
        },
        Err(err) => ProxyClass {
            proxy,
            impl_kind: None,
            purpose: None,
            deferred: Some(err.to_string()),
        },
    }
}

/// Classifies every detected proxy, in address order.
pub fn classify_all(findings: &Findings, contracts: &ContractIndex, reader: &dyn StateReader) -> Vec<ProxyClass> {
    let items: Vec<(Address, Vec<Address>)> = findings
        .values()
        .map(|f| (f.proxy, f.logic_targets.keys().copied().collect()))
        .collect();
    items
        .par_iter()
        .map(|(proxy, logics)| classify_proxy(*proxy, logics, contracts, reader))
        .collect()
}

#[derive(Debug, Serialize)]
struct ClassRow<'a> {
    proxy: Address,
    impl_kind: &'a str,
    purpose: &'a str,
    evidence: String,
}

pub fn write_classes(path: impl AsRef<Path>, classes: &[ProxyClass]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in classes {
        w.serialize(ClassRow {
            proxy: c.proxy,
            impl_kind: c.impl_kind_label(),
            purpose: c.purpose_label(),
            evidence: c.evidence(),
        })?;
    }
    w.flush()
}

/// Share of classified proxies per kind, deferred ones excluded.
pub fn kind_distribution(classes: &[ProxyClass]) -> Vec<(ImplKind, usize, f64)> {
    let classified: Vec<ImplKind> = classes.iter().filter_map(|c| c.impl_kind.as_ref().map(|f| f.kind)).collect();
    ImplKind::ALL
        .iter()
        .map(|k| {
            let n = classified.iter().filter(|c| *c == k).count();
            let share = if classified.is_empty() { 0.0 } else { n as f64 / classified.len() as f64 };
            (*k, n, share)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{LogicEvidence, ProxyFinding};
    use crate::fixture::builder::addr;

    fn finding(proxy: Address, logics: &[Address]) -> ProxyFinding {
        let evidence = crate::detector::Evidence {
            block_number: 1,
            transaction_hash: crate::fixture::builder::tx_hash("t"),
            trace_address: Default::default(),
            status: true,
        };
        ProxyFinding {
            proxy,
            logic_targets: logics
                .iter()
                .map(|l| (*l, LogicEvidence { first: evidence.clone(), count: 1 }))
                .collect(),
            first_evidence: evidence,
            evidence_count: 1,
            failed_evidence_count: 0,
        }
    }

    #[test]
    fn classify_all_defers_on_reader_failure() {
        let clone = addr("clone");
        let broken = addr("broken");
        let logic = addr("logic");
        let mut state = FixtureState::default();
        state.account_mut(clone).bytecode = Some(HexData(erc1167_runtime(&logic)));
        state.account_mut(broken).unavailable = true;
        let findings: Findings = [(clone, finding(clone, &[logic])), (broken, finding(broken, &[logic]))]
            .into_iter()
            .collect();
        let classes = classify_all(&findings, &ContractIndex::default(), &state);
        let by: std::collections::BTreeMap<_, _> = classes.iter().map(|c| (c.proxy, c)).collect();
        assert_eq!(by[&clone].impl_kind_label(), "Erc1167Minimal");
        assert_eq!(by[&clone].purpose_label(), "Forwarder");
        assert_eq!(by[&broken].impl_kind_label(), "Deferred");
        assert!(by[&broken].deferred.is_some());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("classes.csv");
        write_classes(&path, &classes).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("proxy,impl_kind,purpose,evidence\n"));
        assert_eq!(text.lines().count(), 3);

        let dist = kind_distribution(&classes);
        assert_eq!(dist[0], (ImplKind::Erc1167Minimal, 1, 1.0));
    }
}
