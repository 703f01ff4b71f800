//! Storage slots reserved by the proxy standards.

use crate::model::{keccak256, B256};

const fn word(hex: &[u8; 64]) -> B256 {
    const fn nibble(c: u8) -> u8 {
        match c {
            b'0'..=b'9' => c - b'0',
            b'a'..=b'f' => c - b'a' + 10,
            _ => panic!("lowercase hex only"),
        }
    }
    let mut out = [0u8; 32];
    let mut i = 0;
    while i < 32 {
        out[i] = nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]);
        i += 1;
    }
    B256(out)
}

/// keccak256("eip1967.proxy.implementation") - 1
pub const ERC1967_IMPL: B256 = word(b"360894a13ba1a3210667c828492db98dca3e2076cc3735a920a3ca505d382bbc");
/// keccak256("eip1967.proxy.admin") - 1
pub const ERC1967_ADMIN: B256 = word(b"b53127684a568b3173ae13b9f8a6016e243e63b6e8ee1178d6a717850b5d6103");
/// keccak256("eip1967.proxy.beacon") - 1
pub const ERC1967_BEACON: B256 = word(b"a3f0ad74e5423aebfd80d3ef4346578335a9a72aeaee59ff6cb3582b35133d50");
/// keccak256("org.zeppelinos.proxy.implementation")
pub const OZ_LEGACY_IMPL: B256 = word(b"7050c9e0f4ca769c69bd3a8ef740bc37934f8e2c036e5a723fd8ee048ed3f8c3");
/// keccak256("PROXIABLE")
pub const ERC1822_PROXIABLE: B256 = word(b"c5f16f0fcc639fa48a6947836d9850f504798523bf8c9a3a87d5876cf622bcf7");
/// The master copy address sits in the first declared variable.
pub const GNOSIS_MASTERCOPY: B256 = B256::ZERO;

/// Every named slot, with its preimage and the offset subtracted from the hash.
pub const CATALOG: [(&str, B256, Option<&str>, u8); 6] = [
    ("ERC1967_IMPL", ERC1967_IMPL, Some("eip1967.proxy.implementation"), 1),
    ("ERC1967_ADMIN", ERC1967_ADMIN, Some("eip1967.proxy.admin"), 1),
    ("ERC1967_BEACON", ERC1967_BEACON, Some("eip1967.proxy.beacon"), 1),
    ("OZ_LEGACY_IMPL", OZ_LEGACY_IMPL, Some("org.zeppelinos.proxy.implementation"), 0),
    ("ERC1822_PROXIABLE", ERC1822_PROXIABLE, Some("PROXIABLE"), 0),
    ("GNOSIS_MASTERCOPY", GNOSIS_MASTERCOPY, None, 0),
];

/// keccak256(preimage) minus `offset`.
pub fn derive_slot(preimage: &str, offset: u8) -> B256 {
    let mut w = B256(keccak256(preimage.as_bytes()));
    for _ in 0..offset {
        w = w.wrapping_dec();
    }
    w
}
