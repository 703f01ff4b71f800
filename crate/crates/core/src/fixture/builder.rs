//! Hand construction of traces and contracts for tests and the generator.

use chrono::{TimeZone, Utc};
use num_bigint::BigUint;

use crate::model::{
    keccak256, Address, CallType, ContractRecord, HexData, Timestamp, TraceAddress, TraceRecord, TxHash, B256,
};

/// Deterministic address derived from a label.
pub fn addr(label: &str) -> Address {
    Address::from_slice(&keccak256(label.as_bytes())[12..]).expect("20 bytes")
}

/// Deterministic transaction hash derived from a label.
pub fn tx_hash(label: &str) -> TxHash {
    B256(keccak256(format!("tx:{label}").as_bytes()))
}

/// Midnight UTC on the given day.
pub fn day(year: i32, month: u32, d: u32) -> Timestamp {
    Utc.with_ymd_and_hms(year, month, d, 0, 0, 0).single().expect("valid date")
}

/// Builds the traces of one transaction. Trace addresses are given as
/// slices; the root is `&[]`.
#[derive(Debug, Clone)]
pub struct TxBuilder {
    hash: TxHash,
    block_number: u64,
    timestamp: Timestamp,
    traces: Vec<TraceRecord>,
}

impl TxBuilder {
    pub fn new(hash: TxHash, block_number: u64, timestamp: Timestamp) -> Self {
        TxBuilder {
            hash,
            block_number,
            timestamp,
            traces: Vec::new(),
        }
    }

    pub fn trace(
        &mut self,
        trace_address: &[u32],
        call_type: CallType,
        from: Address,
        to: Address,
        input: Option<&[u8]>,
    ) -> &mut TraceRecord {
        self.traces.push(TraceRecord {
            transaction_hash: self.hash,
            trace_address: TraceAddress(trace_address.to_vec()),
            from,
            to,
            call_type,
            input: input.map(HexData::from),
            output: Some(HexData::default()),
            gas_used: BigUint::from(21_000u32),
            status: true,
            value: BigUint::default(),
            block_number: self.block_number,
            block_timestamp: self.timestamp,
            gas_price: None,
        });
        self.traces.last_mut().expect("just pushed")
    }

    pub fn build(self) -> Vec<TraceRecord> {
        self.traces
    }
}

pub fn contract(address: Address, bytecode: &[u8], created_at: Timestamp, creation_tx: TxHash) -> ContractRecord {
    ContractRecord {
        address,
        bytecode: HexData::from(bytecode),
        created_at,
        creation_tx,
        block_number: 0,
    }
}

/// Participants of [`nested_delegate_tx`].
#[derive(Debug, Clone, Copy)]
pub struct NestedDelegate {
    pub eoa: Address,
    pub c1: Address,
    pub c2: Address,
    pub c3: Address,
}

impl Default for NestedDelegate {
    fn default() -> Self {
        NestedDelegate {
            eoa: addr("eoa"),
            c1: addr("c1"),
            c2: addr("c2"),
            c3: addr("c3"),
        }
    }
}

/// An EOA calls C1; C1 creates C2 (trace `0`), then calls C2 (trace `1`),
/// and C2 delegates to C3 (trace `1.0`). `outer` and `inner` are the
/// calldata of traces `1` and `1.0`.
pub fn nested_delegate_tx(who: &NestedDelegate, outer: &[u8], inner: &[u8]) -> Vec<TraceRecord> {
    let mut tx = TxBuilder::new(tx_hash("nested-delegate"), 100, day(2021, 6, 1));
    tx.trace(&[], CallType::Call, who.eoa, who.c1, Some(&[0xde, 0xad, 0xbe, 0xef]));
    tx.trace(&[0], CallType::Create, who.c1, who.c2, Some(&[0x60, 0x80]));
    tx.trace(&[1], CallType::Call, who.c1, who.c2, Some(outer));
    tx.trace(&[1, 0], CallType::DelegateCall, who.c2, who.c3, Some(inner));
    tx.build()
}
