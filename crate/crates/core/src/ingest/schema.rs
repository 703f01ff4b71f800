//! Row schema for the trace and contract exports.
//!
//! Field names mirror the public BigQuery `traces` and `contracts` tables so
//! real exports load unchanged. `gas_price` is an optional extension column
//! read from root traces.

use std::borrow::Cow;
use std::io::Write;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::ser::SerializeMap;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::model::serde_decimal::NumOrStr;
use crate::model::{
    format_timestamp, parse_timestamp, Address, ContractRecord, HexData, ParseError, TraceRecord,
    B256,
};

enum StatusField<'a> {
    Bool(bool),
    Num(u64),
    Str(Cow<'a, str>),
}

struct StatusVisitor<'a>(std::marker::PhantomData<&'a ()>);

impl<'de: 'a, 'a> de::Visitor<'de> for StatusVisitor<'a> {
    type Value = StatusField<'a>;

    fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("a boolean, 0/1 or a string")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Self::Value, E> {
        Ok(StatusField::Bool(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
        Ok(StatusField::Num(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
        Ok(StatusField::Str(Cow::Owned(v.to_string())))
    }

    fn visit_borrowed_str<E: de::Error>(self, v: &'de str) -> Result<Self::Value, E> {
        Ok(StatusField::Str(Cow::Borrowed(v)))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        Ok(StatusField::Str(Cow::Owned(v.to_owned())))
    }
}

impl<'de: 'a, 'a> Deserialize<'de> for StatusField<'a> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(StatusVisitor(std::marker::PhantomData))
    }
}

#[derive(Deserialize)]
pub(crate) struct RawTrace<'a> {
    #[serde(borrow)]
    transaction_hash: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    trace_address: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    from_address: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    to_address: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    call_type: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    input: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    output: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    gas_used: Option<NumOrStr<'a>>,
    #[serde(borrow, default)]
    status: Option<StatusField<'a>>,
    #[serde(borrow, default)]
    value: Option<NumOrStr<'a>>,
    #[serde(borrow, default)]
    block_number: Option<NumOrStr<'a>>,
    #[serde(borrow, default)]
    block_timestamp: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    gas_price: Option<NumOrStr<'a>>,
}

fn required<'r, 'a>(field: &'static str, v: &'r Option<Cow<'a, str>>) -> Result<&'r str, String> {
    v.as_deref().ok_or_else(|| format!("missing field `{field}`"))
}

fn field_err(field: &'static str) -> impl Fn(ParseError) -> String {
    move |e| format!("field `{field}`: {e}")
}

fn parse_status(status: &Option<StatusField<'_>>) -> Result<bool, String> {
    match status {
        // A missing status means the export predates status tracking; treat as success.
        None => Ok(true),
        Some(StatusField::Bool(b)) => Ok(*b),
        Some(StatusField::Num(1)) => Ok(true),
        Some(StatusField::Num(0)) => Ok(false),
        Some(StatusField::Num(n)) => Err(format!("field `status`: {}", ParseError::InvalidStatus(n.to_string()))),
        Some(StatusField::Str(s)) => match s.trim() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            other => Err(format!("field `status`: {}", ParseError::InvalidStatus(other.to_owned()))),
        },
    }
}

fn parse_opt_hex(field: &'static str, v: &Option<Cow<'_, str>>) -> Result<Option<HexData>, String> {
    v.as_deref()
        .map(|s| s.parse::<HexData>().map_err(field_err(field)))
        .transpose()
}

impl RawTrace<'_> {
    pub(crate) fn into_record(self) -> Result<TraceRecord, String> {
        let transaction_hash = required("transaction_hash", &self.transaction_hash)?
            .parse::<B256>()
            .map_err(field_err("transaction_hash"))?;
        let trace_address = self
            .trace_address
            .as_deref()
            .unwrap_or("")
            .parse()
            .map_err(field_err("trace_address"))?;
        let from = required("from_address", &self.from_address)?
            .parse::<Address>()
            .map_err(field_err("from_address"))?;
        let to = required("to_address", &self.to_address)?
            .parse::<Address>()
            .map_err(field_err("to_address"))?;
        let call_type = required("call_type", &self.call_type)?
            .parse()
            .map_err(field_err("call_type"))?;
        let input = parse_opt_hex("input", &self.input)?;
        let output = parse_opt_hex("output", &self.output)?;
        let gas_used = self
            .gas_used
            .as_ref()
            .map(|g| g.to_biguint().map_err(field_err("gas_used")))
            .transpose()?
            .unwrap_or_default();
        let value = self
            .value
            .as_ref()
            .map(|g| g.to_biguint().map_err(field_err("value")))
            .transpose()?
            .unwrap_or_default();
        let gas_price = self
            .gas_price
            .as_ref()
            .map(|g| g.to_biguint().map_err(field_err("gas_price")))
            .transpose()?;
        let block_number = self
            .block_number
            .as_ref()
            .ok_or_else(|| "missing field `block_number`".to_owned())?
            .to_biguint()
            .map_err(field_err("block_number"))
            .and_then(|n| u64::try_from(n).map_err(|_| "field `block_number`: out of range".to_owned()))?;
        let block_timestamp = parse_timestamp(required("block_timestamp", &self.block_timestamp)?)
            .map_err(field_err("block_timestamp"))?;
        let status = parse_status(&self.status)?;

        Ok(TraceRecord {
            transaction_hash,
            trace_address,
            from,
            to,
            call_type,
            input,
            output,
            gas_used,
            status,
            value,
            block_number,
            block_timestamp,
            gas_price,
        })
    }
}

struct Decimal<'a>(&'a BigUint);

impl Serialize for Decimal<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.0.to_u64() {
            Some(v) => serializer.serialize_str(&v.to_string()),
            None => serializer.serialize_str(&self.0.to_string()),
        }
    }
}

impl Serialize for TraceRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("transaction_hash", &self.transaction_hash)?;
        map.serialize_entry("trace_address", &self.trace_address)?;
        map.serialize_entry("from_address", &self.from)?;
        map.serialize_entry("to_address", &self.to)?;
        map.serialize_entry("call_type", &self.call_type)?;
        map.serialize_entry("input", &self.input)?;
        map.serialize_entry("output", &self.output)?;
        map.serialize_entry("gas_used", &Decimal(&self.gas_used))?;
        map.serialize_entry("status", &u8::from(self.status))?;
        map.serialize_entry("value", &Decimal(&self.value))?;
        map.serialize_entry("block_number", &self.block_number)?;
        map.serialize_entry("block_timestamp", &format_timestamp(&self.block_timestamp))?;
        if let Some(price) = &self.gas_price {
            map.serialize_entry("gas_price", &Decimal(price))?;
        }
        map.end()
    }
}

fn push_hex(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(b"\"0x");
    let start = out.len();
    out.resize(start + 2 * bytes.len(), 0);
    hex::encode_to_slice(bytes, &mut out[start..]).expect("buffer sized to fit");
    out.push(b'"');
}

fn push_decimal(out: &mut Vec<u8>, v: &BigUint) {
    out.push(b'"');
    match v.to_u64() {
        Some(n) => write!(out, "{n}"),
        None => write!(out, "{v}"),
    }
    .expect("writing to a Vec cannot fail");
    out.push(b'"');
}

fn push_opt_hex(out: &mut Vec<u8>, v: &Option<HexData>) {
    match v {
        Some(data) => push_hex(out, &data.0),
        None => out.extend_from_slice(b"null"),
    }
}

/// Appends the compact JSON line for `rec` plus a newline; byte-identical to
/// `serde_json::to_writer`. Every emitted string is ASCII without quotes or
/// backslashes, so no escaping is needed.
pub(crate) fn write_trace_line(out: &mut Vec<u8>, rec: &TraceRecord) {
    out.extend_from_slice(b"{\"transaction_hash\":");
    push_hex(out, &rec.transaction_hash.0);
    out.extend_from_slice(b",\"trace_address\":\"");
    for (i, part) in rec.trace_address.0.iter().enumerate() {
        if i > 0 {
            out.push(b'.');
        }
        write!(out, "{part}").expect("writing to a Vec cannot fail");
    }
    out.extend_from_slice(b"\",\"from_address\":");
    push_hex(out, &rec.from.0);
    out.extend_from_slice(b",\"to_address\":");
    push_hex(out, &rec.to.0);
    out.extend_from_slice(b",\"call_type\":\"");
    out.extend_from_slice(rec.call_type.as_str().as_bytes());
    out.extend_from_slice(b"\",\"input\":");
    push_opt_hex(out, &rec.input);
    out.extend_from_slice(b",\"output\":");
    push_opt_hex(out, &rec.output);
    out.extend_from_slice(b",\"gas_used\":");
    push_decimal(out, &rec.gas_used);
    out.extend_from_slice(if rec.status { b",\"status\":1" } else { b",\"status\":0" });
    out.extend_from_slice(b",\"value\":");
    push_decimal(out, &rec.value);
    write!(out, ",\"block_number\":{}", rec.block_number).expect("writing to a Vec cannot fail");
    out.extend_from_slice(b",\"block_timestamp\":\"");
    out.extend_from_slice(format_timestamp(&rec.block_timestamp).as_bytes());
    out.push(b'"');
    if let Some(price) = &rec.gas_price {
        out.extend_from_slice(b",\"gas_price\":");
        push_decimal(out, price);
    }
    out.extend_from_slice(b"}\n");
}

impl<'de> Deserialize<'de> for TraceRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        RawTrace::deserialize(deserializer)?
            .into_record()
            .map_err(de::Error::custom)
    }
}

#[derive(Deserialize)]
pub(crate) struct RawContract<'a> {
    #[serde(borrow)]
    address: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    bytecode: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    block_timestamp: Option<Cow<'a, str>>,
    #[serde(borrow, default)]
    block_number: Option<NumOrStr<'a>>,
    #[serde(borrow, default)]
    transaction_hash: Option<Cow<'a, str>>,
}

impl RawContract<'_> {
    pub(crate) fn into_record(self) -> Result<ContractRecord, String> {
        let address = required("address", &self.address)?
            .parse()
            .map_err(field_err("address"))?;
        let bytecode = parse_opt_hex("bytecode", &self.bytecode)?.unwrap_or_default();
        let created_at = parse_timestamp(required("block_timestamp", &self.block_timestamp)?)
            .map_err(field_err("block_timestamp"))?;
        let block_number = self
            .block_number
            .as_ref()
            .ok_or_else(|| "missing field `block_number`".to_owned())?
            .to_biguint()
            .map_err(field_err("block_number"))
            .and_then(|n| u64::try_from(n).map_err(|_| "field `block_number`: out of range".to_owned()))?;
        // Genesis allocations have no creating transaction.
        let creation_tx = self
            .transaction_hash
            .as_deref()
            .map(|s| s.parse().map_err(field_err("transaction_hash")))
            .transpose()?
            .unwrap_or_default();
        Ok(ContractRecord {
            address,
            bytecode,
            created_at,
            creation_tx,
            block_number,
        })
    }
}
