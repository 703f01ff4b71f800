//! Core domain types shared by every analysis stage.
//!
//! Text encodings follow the public trace export: lowercase `0x`-hex for
//! addresses, hashes and byte strings, ISO-8601 UTC for timestamps, and
//! decimal strings for wei and gas quantities.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDateTime, TimeZone, Utc};
use num_bigint::BigUint;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use tiny_keccak::{Hasher, Keccak};

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("invalid hex string: {0}")]
    InvalidHex(String),
    #[error("expected {expected} bytes, found {found}")]
    InvalidLength { expected: usize, found: usize },
    #[error("unknown call type `{0}`")]
    UnknownCallType(String),
    #[error("invalid trace address `{0}`")]
    InvalidTraceAddress(String),
    #[error("invalid timestamp `{0}`")]
    InvalidTimestamp(String),
    #[error("invalid non-negative integer `{0}`")]
    InvalidInteger(String),
    #[error("invalid status `{0}`, expected 0 or 1")]
    InvalidStatus(String),
}

/// Keccak-256 as used by the EVM (original Keccak padding, not SHA3-256).
pub fn keccak256(data: impl AsRef<[u8]>) -> [u8; 32] {
    let mut out = [0u8; 32];
    let mut hasher = Keccak::v256();
    hasher.update(data.as_ref());
    hasher.finalize(&mut out);
    out
}

fn strip_0x(s: &str) -> &str {
    s.strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s)
}

/// `0x`-prefixed lowercase hex.
pub(crate) fn to_hex(bytes: &[u8]) -> String {
    let mut buf = vec![0u8; 2 + 2 * bytes.len()];
    buf[..2].copy_from_slice(b"0x");
    hex::encode_to_slice(bytes, &mut buf[2..]).expect("buffer sized for input");
    String::from_utf8(buf).expect("hex is ascii")
}

fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], ParseError> {
    let digits = strip_0x(s.trim());
    if digits.len() != 2 * N {
        return Err(ParseError::InvalidLength {
            expected: N,
            found: digits.len() / 2,
        });
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(digits, &mut out).map_err(|_| ParseError::InvalidHex(s.to_owned()))?;
    Ok(out)
}

macro_rules! text_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = Cow::<'de, str>::deserialize(deserializer)?;
                s.parse().map_err(de::Error::custom)
            }
        }
    };
}

/// A 20-byte account identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Address(pub [u8; 20]);

impl Address {
    pub const ZERO: Address = Address([0u8; 20]);

    pub fn as_bytes(&self) -> &[u8; 20] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 20]
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, ParseError> {
        let arr: [u8; 20] = bytes.try_into().map_err(|_| ParseError::InvalidLength {
            expected: 20,
            found: bytes.len(),
        })?;
        Ok(Address(arr))
    }

    /// The low 20 bytes of a 32-byte word, if the upper 12 bytes are zero.
    pub fn from_word(word: &B256) -> Option<Self> {
        if word.0[..12].iter().any(|b| *b != 0) {
            return None;
        }
        Some(Address(word.0[12..].try_into().expect("20 bytes")))
    }

    /// Left-pads the address to a 32-byte word.
    pub fn to_word(&self) -> B256 {
        let mut out = [0u8; 32];
        out[12..].copy_from_slice(&self.0);
        B256(out)
    }
}

impl FromStr for Address {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<20>(s).map(Address)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(Address);

/// A 32-byte value: transaction hashes, storage slots and storage words.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct B256(pub [u8; 32]);

pub type TxHash = B256;
pub type Word = B256;

impl B256 {
    pub const ZERO: B256 = B256([0u8; 32]);

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; 32]
    }

    /// Big-endian value from a short byte string (a PUSH immediate).
    pub fn from_be_slice(bytes: &[u8]) -> Option<Self> {
        if bytes.len() > 32 {
            return None;
        }
        let mut out = [0u8; 32];
        out[32 - bytes.len()..].copy_from_slice(bytes);
        Some(B256(out))
    }

    pub fn from_u64(v: u64) -> Self {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&v.to_be_bytes());
        B256(out)
    }

    /// Subtracts one, wrapping at zero.
    pub fn wrapping_dec(&self) -> Self {
        let mut out = self.0;
        for byte in out.iter_mut().rev() {
            let (v, borrow) = byte.overflowing_sub(1);
            *byte = v;
            if !borrow {
                break;
            }
        }
        B256(out)
    }
}

impl FromStr for B256 {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<32>(s).map(B256)
    }
}

impl fmt::Display for B256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl fmt::Debug for B256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(B256);

/// Arbitrary-length byte string: calldata, return data or bytecode.
#[derive(Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct HexData(pub Vec<u8>);

impl HexData {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        HexData(bytes.into())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for HexData {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for HexData {
    fn from(v: Vec<u8>) -> Self {
        HexData(v)
    }
}

impl From<&[u8]> for HexData {
    fn from(v: &[u8]) -> Self {
        HexData(v.to_vec())
    }
}

impl FromStr for HexData {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = strip_0x(s.trim());
        hex::decode(digits)
            .map(HexData)
            .map_err(|_| ParseError::InvalidHex(s.to_owned()))
    }
}

impl fmt::Display for HexData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl fmt::Debug for HexData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(HexData);

/// The 4-byte function selector at the start of calldata.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Selector(pub [u8; 4]);

impl FromStr for Selector {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        decode_fixed::<4>(s).map(Selector)
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_hex(&self.0))
    }
}

impl fmt::Debug for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

text_serde!(Selector);

/// First four bytes of `data`, or `None` for calldata shorter than a selector.
pub fn selector_of(data: &[u8]) -> Option<Selector> {
    data.get(..4)
        .map(|prefix| Selector(prefix.try_into().expect("4 bytes")))
}

/// Selector of a canonical signature such as `transfer(address,uint256)`.
pub fn selector_from_signature(sig: &str) -> Selector {
    let hash = keccak256(sig.as_bytes());
    Selector([hash[0], hash[1], hash[2], hash[3]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallType {
    Call,
    CallCode,
    StaticCall,
    DelegateCall,
    Create,
    Create2,
    SelfDestruct,
}

impl CallType {
    pub const ALL: [CallType; 7] = [
        CallType::Call,
        CallType::CallCode,
        CallType::StaticCall,
        CallType::DelegateCall,
        CallType::Create,
        CallType::Create2,
        CallType::SelfDestruct,
    ];

    /// The four cross-contract message-call kinds.
    pub const MESSAGE_CALLS: [CallType; 4] = [
        CallType::Call,
        CallType::CallCode,
        CallType::StaticCall,
        CallType::DelegateCall,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CallType::Call => "call",
            CallType::CallCode => "callcode",
            CallType::StaticCall => "staticcall",
            CallType::DelegateCall => "delegatecall",
            CallType::Create => "create",
            CallType::Create2 => "create2",
            CallType::SelfDestruct => "suicide",
        }
    }

    pub fn is_message_call(&self) -> bool {
        matches!(
            self,
            CallType::Call | CallType::CallCode | CallType::StaticCall | CallType::DelegateCall
        )
    }

    pub fn is_create(&self) -> bool {
        matches!(self, CallType::Create | CallType::Create2)
    }
}

impl FromStr for CallType {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "call" => CallType::Call,
            "callcode" => CallType::CallCode,
            "staticcall" => CallType::StaticCall,
            "delegatecall" => CallType::DelegateCall,
            "create" => CallType::Create,
            "create2" => CallType::Create2,
            "suicide" | "selfdestruct" => CallType::SelfDestruct,
            other => return Err(ParseError::UnknownCallType(other.to_owned())),
        })
    }
}

impl fmt::Display for CallType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for CallType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CallType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = Cow::<'de, str>::deserialize(deserializer)?;
        s.parse().map_err(de::Error::custom)
    }
}

/// Position of a trace in its transaction's call tree; empty for the root.
///
/// Ordering is lexicographic, so a parent always sorts before its children.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TraceAddress(pub Vec<u32>);

impl TraceAddress {
    pub fn root() -> Self {
        TraceAddress(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, index: u32) -> Self {
        let mut path = self.0.clone();
        path.push(index);
        TraceAddress(path)
    }

    pub fn is_proper_prefix_of(&self, other: &TraceAddress) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }
}

impl FromStr for TraceAddress {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(TraceAddress::root());
        }
        s.split(|c| c == '.' || c == ',')
            .map(|part| {
                part.trim()
                    .parse::<u32>()
                    .map_err(|_| ParseError::InvalidTraceAddress(s.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TraceAddress)
    }
}

impl fmt::Display for TraceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, part) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{part}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for TraceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{self}]")
    }
}

text_serde!(TraceAddress);

/// Longest proper prefix of `trace` that is present in `siblings`.
pub fn parent_of(trace: &TraceAddress, siblings: &HashSet<TraceAddress>) -> Option<TraceAddress> {
    let path = &trace.0;
    (0..path.len())
        .rev()
        .map(|len| TraceAddress(path[..len].to_vec()))
        .find(|candidate| siblings.contains(candidate))
}

/// Parses ISO-8601 / RFC 3339 and the `YYYY-MM-DD HH:MM:SS[.f] UTC` export form.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, ParseError> {
    let trimmed = s.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(trimmed) {
        return Ok(ts.with_timezone(&Utc));
    }
    let naive_part = trimmed
        .strip_suffix(" UTC")
        .or_else(|| trimmed.strip_suffix('Z'))
        .unwrap_or(trimmed);
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(naive_part, fmt) {
            return Ok(Utc.from_utc_datetime(&naive));
        }
    }
    if let Ok(secs) = trimmed.parse::<i64>() {
        if let Some(ts) = Utc.timestamp_opt(secs, 0).single() {
            return Ok(ts);
        }
    }
    Err(ParseError::InvalidTimestamp(s.to_owned()))
}

pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn parse_biguint(s: &str) -> Result<BigUint, ParseError> {
    let trimmed = s.trim();
    // Exports occasionally render integral NUMERIC values with a trailing ".0".
    let digits = trimmed.strip_suffix(".0").unwrap_or(trimmed);
    if digits.len() < 20 && digits.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(n) = digits.parse::<u64>() {
            return Ok(BigUint::from(n));
        }
    }
    BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(|| ParseError::InvalidInteger(s.to_owned()))
}

/// Serde helpers for timestamps in ISO-8601 UTC form.
pub mod serde_timestamp {
    use super::*;

    pub fn serialize<S: Serializer>(ts: &Timestamp, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Timestamp, D::Error> {
        let s = Cow::<'de, str>::deserialize(deserializer)?;
        parse_timestamp(&s).map_err(de::Error::custom)
    }
}

/// Serde helpers writing big integers as decimal strings and accepting
/// strings or JSON integers.
pub mod serde_decimal {
    use super::*;

    pub(crate) enum NumOrStr<'a> {
        Num(u64),
        Str(Cow<'a, str>),
    }

    struct NumOrStrVisitor<'a>(std::marker::PhantomData<&'a ()>);

    impl<'de: 'a, 'a> de::Visitor<'de> for NumOrStrVisitor<'a> {
        type Value = NumOrStr<'a>;

        fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            f.write_str("a non-negative integer or a decimal string")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(NumOrStr::Num(v))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            u64::try_from(v)
                .map(NumOrStr::Num)
                .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
        }

        fn visit_borrowed_str<E: de::Error>(self, v: &'de str) -> Result<Self::Value, E> {
            Ok(NumOrStr::Str(Cow::Borrowed(v)))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            Ok(NumOrStr::Str(Cow::Owned(v.to_owned())))
        }
    }

    impl<'de: 'a, 'a> Deserialize<'de> for NumOrStr<'a> {
        fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
            deserializer.deserialize_any(NumOrStrVisitor(std::marker::PhantomData))
        }
    }

    impl NumOrStr<'_> {
        pub(crate) fn to_biguint(&self) -> Result<BigUint, ParseError> {
            match self {
                NumOrStr::Num(n) => Ok(BigUint::from(*n)),
                NumOrStr::Str(s) => parse_biguint(s),
            }
        }
    }

    pub fn serialize<S: Serializer>(v: &BigUint, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<BigUint, D::Error> {
        NumOrStr::deserialize(deserializer)?
            .to_biguint()
            .map_err(de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<BigUint>, serializer: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => serializer.collect_str(v),
                None => serializer.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            deserializer: D,
        ) -> Result<Option<BigUint>, D::Error> {
            Option::<NumOrStr>::deserialize(deserializer)?
                .map(|v| v.to_biguint())
                .transpose()
                .map_err(de::Error::custom)
        }
    }
}

/// One internal operation (call or create) of a transaction.
///
/// For `Create`/`Create2`, `to` holds the address of the created contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub transaction_hash: TxHash,
    pub trace_address: TraceAddress,
    pub from: Address,
    pub to: Address,
    pub call_type: CallType,
    pub input: Option<HexData>,
    pub output: Option<HexData>,
    pub gas_used: BigUint,
    pub status: bool,
    pub value: BigUint,
    pub block_number: u64,
    pub block_timestamp: Timestamp,
    /// Only meaningful on root traces; feeds fee arithmetic.
    pub gas_price: Option<BigUint>,
}

impl TraceRecord {
    pub fn input_bytes(&self) -> &[u8] {
        self.input.as_ref().map(HexData::as_slice).unwrap_or(&[])
    }

    pub fn selector(&self) -> Option<Selector> {
        selector_of(self.input_bytes())
    }

    pub fn is_root(&self) -> bool {
        self.trace_address.is_root()
    }

    pub fn month(&self) -> Month {
        Month::of(&self.block_timestamp)
    }

    /// Sort key that places transactions chronologically and traces in
    /// call-tree order.
    pub fn sort_key(&self) -> (u64, &TxHash, &TraceAddress) {
        (self.block_number, &self.transaction_hash, &self.trace_address)
    }
}

/// A deployed contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractRecord {
    pub address: Address,
    /// Runtime bytecode; empty for self-destructed contracts.
    pub bytecode: HexData,
    #[serde(rename = "block_timestamp", with = "serde_timestamp")]
    pub created_at: Timestamp,
    #[serde(rename = "transaction_hash")]
    pub creation_tx: TxHash,
    pub block_number: u64,
}

/// Calendar month in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Month {
    pub year: i32,
    pub month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Option<Self> {
        (1..=12).contains(&month).then_some(Month { year, month })
    }

    pub fn of(ts: &Timestamp) -> Self {
        Month {
            year: ts.year(),
            month: ts.month(),
        }
    }

    pub fn next(self) -> Self {
        if self.month == 12 {
            Month {
                year: self.year + 1,
                month: 1,
            }
        } else {
            Month {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    /// Every month from `first` to `last`, inclusive.
    pub fn range(first: Month, last: Month) -> impl Iterator<Item = Month> {
        std::iter::successors(Some(first), move |m| {
            let next = m.next();
            (next <= last).then_some(next)
        })
        .take_while(move |m| *m <= last)
    }

    pub fn start(&self) -> Timestamp {
        Utc.with_ymd_and_hms(self.year, self.month, 1, 0, 0, 0)
            .single()
            .expect("valid month start")
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for Month {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::InvalidTimestamp(s.to_owned());
        let (y, m) = s.split_once('-').ok_or_else(err)?;
        let year = y.parse().map_err(|_| err())?;
        let month = m.parse().map_err(|_| err())?;
        Month::new(year, month).ok_or_else(err)
    }
}

text_serde!(Month);
