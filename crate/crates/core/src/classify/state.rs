//! Read-only chain state used by the classifiers: storage words, calls and
//! code. Backed either by a JSON fixture or by a JSON-RPC node.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::model::{Address, HexData, Word, B256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReaderError {
    #[error("state unavailable: {0}")]
    Unavailable(String),
    #[error("malformed state response: {0}")]
    Malformed(String),
}

pub trait StateReader: Sync {
    fn storage_at(&self, address: &Address, slot: &Word) -> Result<Word, ReaderError>;
    /// Return data of a read-only call; `None` when the call reverts.
    fn call(&self, address: &Address, calldata: &[u8]) -> Result<Option<HexData>, ReaderError>;
    /// Runtime code; `None` or empty when the account has none.
    fn code_at(&self, address: &Address) -> Result<Option<HexData>, ReaderError>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountFixture {
    #[serde(default, deserialize_with = "de_storage")]
    pub storage: BTreeMap<Word, Word>,
    #[serde(default)]
    pub calls: BTreeMap<HexData, HexData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bytecode: Option<HexData>,
    /// Simulates a node that cannot answer for this account.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unavailable: bool,
}

/// Slot and word hex may be shorter than 32 bytes or of odd length; values
/// are left-padded.
fn parse_word(s: &str) -> Result<Word, String> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    let padded = if digits.len() % 2 == 1 { format!("0{digits}") } else { digits.to_owned() };
    let bytes = hex::decode(&padded).map_err(|e| format!("invalid hex word {s:?}: {e}"))?;
    B256::from_be_slice(&bytes).ok_or_else(|| format!("word longer than 32 bytes: {s}"))
}

fn de_storage<'de, D: serde::Deserializer<'de>>(d: D) -> Result<BTreeMap<Word, Word>, D::Error> {
    let raw = BTreeMap::<String, String>::deserialize(d)?;
    raw.iter()
        .map(|(k, v)| Ok((parse_word(k)?, parse_word(v)?)))
        .collect::<Result<_, String>>()
        .map_err(serde::de::Error::custom)
}

/// State answered from a map of address → account fixture. Accounts and
/// entries not listed read as empty: zero storage, reverting calls, no code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FixtureState {
    pub accounts: BTreeMap<Address, AccountFixture>,
}

impl FixtureState {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn account_mut(&mut self, address: Address) -> &mut AccountFixture {
        self.accounts.entry(address).or_default()
    }

    fn account(&self, address: &Address) -> Result<Option<&AccountFixture>, ReaderError> {
        match self.accounts.get(address) {
            Some(a) if a.unavailable => Err(ReaderError::Unavailable(format!("no state for {address}"))),
            other => Ok(other),
        }
    }
}

impl StateReader for FixtureState {
    fn storage_at(&self, address: &Address, slot: &Word) -> Result<Word, ReaderError> {
        Ok(self
            .account(address)?
            .and_then(|a| a.storage.get(slot).copied())
            .unwrap_or_default())
    }

    fn call(&self, address: &Address, calldata: &[u8]) -> Result<Option<HexData>, ReaderError> {
        Ok(self
            .account(address)?
            .and_then(|a| a.calls.get(&HexData::from(calldata)).cloned()))
    }

    fn code_at(&self, address: &Address) -> Result<Option<HexData>, ReaderError> {
        Ok(self.account(address)?.and_then(|a| a.bytecode.clone()))
    }
}

/// State fetched from an Ethereum JSON-RPC endpoint.
pub struct RpcState {
    url: String,
    block: String,
    agent: ureq::Agent,
    next_id: AtomicU64,
}

impl RpcState {
    pub fn new(url: impl Into<String>) -> Self {
        RpcState {
            url: url.into(),
            block: "latest".to_owned(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build(),
            next_id: AtomicU64::new(1),
        }
    }

    /// Queries state at a fixed block (decimal number or tag).
    pub fn at_block(mut self, block: &str) -> Self {
        self.block = match block.parse::<u64>() {
            Ok(n) => format!("0x{n:x}"),
            Err(_) => block.to_owned(),
        };
        self
    }

    fn request(&self, method: &str, params: Value) -> Result<Result<Value, Value>, ReaderError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let body = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        let response = match self.agent.post(&self.url).send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) => {
                return Err(ReaderError::Unavailable(format!("{method}: HTTP {code}")));
            }
            Err(e) => return Err(ReaderError::Unavailable(format!("{method}: {e}"))),
        };
        let mut value: Value = response
            .into_json()
            .map_err(|e| ReaderError::Malformed(format!("{method}: {e}")))?;
        if let Some(err) = value.get_mut("error") {
            return Ok(Err(err.take()));
        }
        match value.get_mut("result") {
            Some(v) => Ok(Ok(v.take())),
            None => Err(ReaderError::Malformed(format!("{method}: no result"))),
        }
    }

    fn hex_result(method: &str, v: Value) -> Result<HexData, ReaderError> {
        v.as_str()
            .ok_or_else(|| ReaderError::Malformed(format!("{method}: result is not a string")))?
            .parse()
            .map_err(|e| ReaderError::Malformed(format!("{method}: {e}")))
    }

    fn is_revert(err: &Value) -> bool {
        err.get("code").and_then(Value::as_i64) == Some(3)
            || err
                .get("message")
                .and_then(Value::as_str)
                .is_some_and(|m| m.to_ascii_lowercase().contains("revert"))
    }
}

impl StateReader for RpcState {
    fn storage_at(&self, address: &Address, slot: &Word) -> Result<Word, ReaderError> {
        let method = "eth_getStorageAt";
        match self.request(method, json!([address.to_string(), slot.to_string(), self.block]))? {
            Ok(v) => {
                let bytes = Self::hex_result(method, v)?;
                B256::from_be_slice(bytes.as_slice())
                    .ok_or_else(|| ReaderError::Malformed(format!("{method}: word longer than 32 bytes")))
            }
            Err(e) => Err(ReaderError::Unavailable(format!("{method}: {e}"))),
        }
    }

    fn call(&self, address: &Address, calldata: &[u8]) -> Result<Option<HexData>, ReaderError> {
        let method = "eth_call";
        let tx = json!({"to": address.to_string(), "data": HexData::from(calldata).to_string()});
        match self.request(method, json!([tx, self.block]))? {
            Ok(v) => Self::hex_result(method, v).map(Some),
            Err(e) if Self::is_revert(&e) => Ok(None),
            Err(e) => Err(ReaderError::Unavailable(format!("{method}: {e}"))),
        }
    }

    fn code_at(&self, address: &Address) -> Result<Option<HexData>, ReaderError> {
        let method = "eth_getCode";
        match self.request(method, json!([address.to_string(), self.block]))? {
            Ok(v) => Self::hex_result(method, v).map(Some),
            Err(e) => Err(ReaderError::Unavailable(format!("{method}: {e}"))),
        }
    }
}
