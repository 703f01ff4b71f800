//! Reference-implementation fingerprinting: bytecode match first, then
//! standard storage slots, then the `implementation()` getter.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::slots;
use super::state::{ReaderError, StateReader};
use crate::model::{selector_from_signature, Address, Word, B256};

pub const ERC1167_PREFIX: [u8; 10] = [0x36, 0x3d, 0x3d, 0x37, 0x3d, 0x3d, 0x3d, 0x36, 0x3d, 0x73];
pub const ERC1167_SUFFIX: [u8; 15] = [
    0x5a, 0xf4, 0x3d, 0x82, 0x80, 0x3e, 0x90, 0x3d, 0x91, 0x60, 0x2b, 0x57, 0xfd, 0x5b, 0xf3,
];
pub const ERC1167_LEN: usize = ERC1167_PREFIX.len() + 20 + ERC1167_SUFFIX.len();

/// Selector of `masterCopy()`, present in the Gnosis Safe proxy dispatch.
pub const GNOSIS_MARKER: [u8; 4] = [0xa6, 0x19, 0x48, 0x6e];

/// Canonical minimal-proxy runtime delegating to `target`.
pub fn erc1167_runtime(target: &Address) -> Vec<u8> {
    let mut code = Vec::with_capacity(ERC1167_LEN);
    code.extend_from_slice(&ERC1167_PREFIX);
    code.extend_from_slice(target.as_bytes());
    code.extend_from_slice(&ERC1167_SUFFIX);
    code
}

/// The embedded target iff `bytecode` is exactly the canonical 45-byte runtime.
pub fn detect_erc1167(bytecode: &[u8]) -> Option<Address> {
    if bytecode.len() != ERC1167_LEN
        || bytecode[..10] != ERC1167_PREFIX
        || bytecode[30..] != ERC1167_SUFFIX
    {
        return None;
    }
    Address::from_slice(&bytecode[10..30]).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImplKind {
    Erc1167Minimal,
    Erc897,
    Erc1967,
    Erc1967Beacon,
    Erc1822Uups,
    OpenZeppelinLegacy,
    GnosisSafeProxy,
    Customized,
}

impl ImplKind {
    pub const ALL: [ImplKind; 8] = [
        ImplKind::Erc1167Minimal,
        ImplKind::Erc897,
        ImplKind::Erc1967,
        ImplKind::Erc1967Beacon,
        ImplKind::Erc1822Uups,
        ImplKind::OpenZeppelinLegacy,
        ImplKind::GnosisSafeProxy,
        ImplKind::Customized,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ImplKind::Erc1167Minimal => "Erc1167Minimal",
            ImplKind::Erc897 => "Erc897",
            ImplKind::Erc1967 => "Erc1967",
            ImplKind::Erc1967Beacon => "Erc1967Beacon",
            ImplKind::Erc1822Uups => "Erc1822Uups",
            ImplKind::OpenZeppelinLegacy => "OpenZeppelinLegacy",
            ImplKind::GnosisSafeProxy => "GnosisSafeProxy",
            ImplKind::Customized => "Customized",
        }
    }
}

impl fmt::Display for ImplKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImplKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ImplKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown implementation kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FingerprintEvidence {
    MinimalProxyTarget { target: Address },
    Slot { name: String, slot: Word, value: Word },
    MasterCopy { value: Word },
    ImplementationGetter { returned: Address },
    NoMatch,
}

impl fmt::Display for FingerprintEvidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FingerprintEvidence::MinimalProxyTarget { target } => write!(f, "1167 target {target}"),
            FingerprintEvidence::Slot { name, value, .. } => write!(f, "{name}={value}"),
            FingerprintEvidence::MasterCopy { value } => write!(f, "slot0={value} with masterCopy()"),
            FingerprintEvidence::ImplementationGetter { returned } => write!(f, "implementation()={returned}"),
            FingerprintEvidence::NoMatch => f.write_str("no known layout"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub kind: ImplKind,
    pub evidence: FingerprintEvidence,
}

/// Address held in the low 20 bytes of a word whose high 12 bytes are zero.
pub fn word_address(word: &Word) -> Option<Address> {
    if word.0[..12].iter().any(|b| *b != 0) || word.is_zero() {
        return None;
    }
    Address::from_word(word)
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// First match of the ladder. Reader failures are returned, never mapped to
/// `Customized`.
pub fn fingerprint(address: &Address, bytecode: &[u8], reader: &dyn StateReader) -> Result<Fingerprint, ReaderError> {
    if let Some(target) = detect_erc1167(bytecode) {
        return Ok(Fingerprint {
            kind: ImplKind::Erc1167Minimal,
            evidence: FingerprintEvidence::MinimalProxyTarget { target },
        });
    }
    let probes = [
        (ImplKind::Erc1967, "ERC1967_IMPL", slots::ERC1967_IMPL),
        (ImplKind::Erc1967Beacon, "ERC1967_BEACON", slots::ERC1967_BEACON),
        (ImplKind::Erc1822Uups, "ERC1822_PROXIABLE", slots::ERC1822_PROXIABLE),
        (ImplKind::OpenZeppelinLegacy, "OZ_LEGACY_IMPL", slots::OZ_LEGACY_IMPL),
    ];
    for (kind, name, slot) in probes {
        let value = reader.storage_at(address, &slot)?;
        if !value.is_zero() {
            return Ok(Fingerprint {
                kind,
                evidence: FingerprintEvidence::Slot {
                    name: name.to_owned(),
                    slot,
                    value,
                },
            });
        }
    }
    let slot0 = reader.storage_at(address, &slots::GNOSIS_MASTERCOPY)?;
    if word_address(&slot0).is_some() && contains(bytecode, &GNOSIS_MARKER) {
        return Ok(Fingerprint {
            kind: ImplKind::GnosisSafeProxy,
            evidence: FingerprintEvidence::MasterCopy { value: slot0 },
        });
    }
    let getter = selector_from_signature("implementation()");
    if let Some(ret) = reader.call(address, &getter.0)? {
        let returned = (ret.len() >= 32)
            .then(|| B256::from_be_slice(&ret.as_slice()[..32]))
            .flatten()
            .and_then(|w| word_address(&w));
        if let Some(returned) = returned {
            return Ok(Fingerprint {
                kind: ImplKind::Erc897,
                evidence: FingerprintEvidence::ImplementationGetter { returned },
            });
        }
    }
    Ok(Fingerprint {
        kind: ImplKind::Customized,
        evidence: FingerprintEvidence::NoMatch,
    })
}
