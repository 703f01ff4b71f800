//! Forwarder vs upgradeability analysis over a linear disassembly. Each
//! verdict lists the workflow steps it passed through, numbered 1 to 10.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::disasm::{self, Instruction, AND, CALL, DELEGATECALL, EQ, JUMP, JUMPDEST, JUMPI, PUSH20, PUSH4, SLOAD, STATICCALL};
use super::fingerprint::word_address;
use super::state::{ReaderError, StateReader};
use crate::model::{Address, ContractRecord, Word};


/// Instructions followed from a getter's dispatch target before giving up.
const GETTER_SCAN_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Purpose {
    Forwarder,
    Upgradeability,
    Unknown,
}

impl Purpose {
    pub fn as_str(&self) -> &'static str {
        match self {
            Purpose::Forwarder => "Forwarder",
            Purpose::Upgradeability => "Upgradeability",
            Purpose::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepNote {
    pub step: u8,
    pub note: String,
}

/// Byte offset of an SSTORE instruction inside `contract`'s runtime code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SstoreSite {
    pub contract: Address,
    pub offset: usize,
}

/// `stalled_at` is set iff the purpose is Unknown; `sstore_site` is set iff
/// it is Upgradeability.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PurposeVerdict {
    pub purpose: Purpose,
    pub steps: Vec<StepNote>,
    pub stalled_at: Option<u8>,
    pub sstore_site: Option<SstoreSite>,
}

impl PurposeVerdict {
    pub fn step_numbers(&self) -> Vec<u8> {
        self.steps.iter().map(|s| s.step).collect()
    }

    pub fn summary(&self) -> String {
        self.steps
            .iter()
            .map(|s| format!("{}:{}", s.step, s.note))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

struct Trail {
    steps: Vec<StepNote>,
}

impl Trail {
    fn note(&mut self, step: u8, note: impl Into<String>) {
        self.steps.push(StepNote { step, note: note.into() });
    }

    fn finish(self, purpose: Purpose, site: Option<SstoreSite>) -> PurposeVerdict {
        PurposeVerdict {
            purpose,
            steps: self.steps,
            stalled_at: None,
            sstore_site: site,
        }
    }

    fn stall(mut self, step: u8, note: impl Into<String>) -> PurposeVerdict {
        self.note(step, note);
        PurposeVerdict {
            purpose: Purpose::Unknown,
            steps: self.steps,
            stalled_at: Some(step),
            sstore_site: None,
        }
    }
}

enum Producer {
    Hardcoded(Address),
    Storage(Option<Word>),
    External(usize),
}

fn is_mask_push(instrs: &[Instruction<'_>], i: usize) -> bool {
    instrs[i].immediate.iter().all(|b| *b == 0xff) || instrs.get(i + 1).is_some_and(|n| n.opcode == AND)
}

/// Nearest instruction before `i` that can supply an address word.
fn producer_before(instrs: &[Instruction<'_>], i: usize, calls: bool) -> Option<(usize, Producer)> {
    (0..i).rev().find_map(|j| {
        let ins = &instrs[j];
        match ins.opcode {
            PUSH20 if !is_mask_push(instrs, j) => {
                let word = ins.push_value()?;
                Some((j, Producer::Hardcoded(Address::from_word(&word)?)))
            }
            SLOAD => Some((j, Producer::Storage(disasm::constant_operand(instrs, j)))),
            CALL | STATICCALL if calls => Some((j, Producer::External(j))),
            _ => None,
        }
    })
}

fn first_sstore(contract: Address, instrs: &[Instruction<'_>], slot: &Word) -> Option<SstoreSite> {
    disasm::sstores_to(instrs, slot)
        .first()
        .map(|&offset| SstoreSite { contract, offset })
}

/// Jump target dispatched for `selector` by a `PUSH4 sel EQ PUSHn dest JUMPI` sequence.
fn dispatch_target(instrs: &[Instruction<'_>], selector: &Word) -> Option<usize> {
    instrs.windows(4).find_map(|w| {
        let matches = w[0].opcode == PUSH4
            && w[0].push_value().as_ref() == Some(selector)
            && w[1].opcode == EQ
            && w[2].is_push()
            && w[3].opcode == JUMPI;
        matches.then(|| w[2].push_value()).flatten().and_then(|v| word_usize(&v))
    })
}

fn word_usize(word: &Word) -> Option<usize> {
    if word.0[..24].iter().any(|b| *b != 0) {
        return None;
    }
    usize::try_from(u64::from_be_bytes(word.0[24..].try_into().ok()?)).ok()
}

/// First constant-slot SLOAD reached from `start`, following `PUSH d JUMP` edges.
fn getter_slot(instrs: &[Instruction<'_>], start: usize) -> Option<Word> {
    let mut i = disasm::index_at(instrs, start).filter(|&i| instrs[i].opcode == JUMPDEST)?;
    for _ in 0..GETTER_SCAN_LIMIT {
        let ins = instrs.get(i)?;
        match ins.opcode {
            SLOAD => return disasm::constant_operand(instrs, i),
            JUMP => {
                let dest = disasm::constant_operand(instrs, i).and_then(|v| word_usize(&v))?;
                i = disasm::index_at(instrs, dest).filter(|&t| instrs[t].opcode == JUMPDEST)?;
                continue;
            }
            disasm::STOP | disasm::RETURN | disasm::REVERT | disasm::INVALID | disasm::SELFDESTRUCT => return None,
            _ => {}
        }
        i += 1;
    }
    None
}

/// Runtime bytecode of one account.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Code<'a> {
    pub address: Address,
    pub bytecode: &'a [u8],
}

impl<'a> From<&'a ContractRecord> for Code<'a> {
    fn from(rec: &'a ContractRecord) -> Self {
        Code {
            address: rec.address,
            bytecode: rec.bytecode.as_slice(),
        }
    }
}

/// Classifies one proxy. Reader failures are returned so the caller can defer.
pub fn classify_purpose(
    proxy: Code<'_>,
    logics: &[Code<'_>],
    reader: &dyn StateReader,
) -> Result<PurposeVerdict, ReaderError> {
    let mut trail = Trail { steps: Vec::new() };
    if proxy.bytecode.is_empty() {
        return Ok(trail.stall(1, "no runtime bytecode"));
    }
    let instrs = disasm::disassemble(proxy.bytecode);
    trail.note(1, format!("{} instructions", instrs.len()));

    let Some(dc) = instrs.iter().position(|i| i.opcode == DELEGATECALL) else {
        return Ok(trail.stall(2, "no DELEGATECALL"));
    };
    let Some((at, producer)) = producer_before(&instrs, dc, true) else {
        return Ok(trail.stall(2, format!("no target producer before DELEGATECALL@{}", instrs[dc].offset)));
    };
    trail.note(2, format!("target from {:#04x}@{}", instrs[at].opcode, instrs[at].offset));

    match producer {
        Producer::Hardcoded(target) => {
            trail.note(3, format!("hardcoded {target}"));
            Ok(trail.finish(Purpose::Forwarder, None))
        }
        Producer::Storage(None) => {
            trail.note(3, "not hardcoded");
            Ok(trail.stall(4, "SLOAD slot is not a constant"))
        }
        Producer::Storage(Some(slot)) => {
            trail.note(3, "not hardcoded");
            trail.note(4, format!("slot {slot}"));
            if let Some(site) = first_sstore(proxy.address, &instrs, &slot) {
                trail.note(5, format!("proxy SSTORE@{}", site.offset));
                return Ok(trail.finish(Purpose::Upgradeability, Some(site)));
            }
            trail.note(5, "no proxy SSTORE");
            let available: Vec<&Code<'_>> = logics.iter().filter(|l| !l.bytecode.is_empty()).collect();
            if available.is_empty() {
                return Ok(trail.stall(6, "logic bytecode unavailable"));
            }
            trail.note(6, format!("{} of {} logic bytecodes", available.len(), logics.len()));
            for logic in &available {
                let code = disasm::disassemble(logic.bytecode);
                if let Some(site) = first_sstore(logic.address, &code, &slot) {
                    trail.note(7, format!("logic {} SSTORE@{}", logic.address, site.offset));
                    return Ok(trail.finish(Purpose::Upgradeability, Some(site)));
                }
            }
            if available.len() < logics.len() {
                return Ok(trail.stall(7, "no SSTORE in available logics, others missing"));
            }
            trail.note(7, "no logic SSTORE");
            Ok(trail.finish(Purpose::Forwarder, None))
        }
        Producer::External(call) => {
            trail.note(3, "not hardcoded");
            trail.note(4, format!("external call@{}", instrs[call].offset));
            classify_external(trail, proxy, &instrs, call, reader)
        }
    }
}

/// Beacon shape: the target is the return value of a getter on another contract.
fn classify_external(
    mut trail: Trail,
    proxy: Code<'_>,
    instrs: &[Instruction<'_>],
    call: usize,
    reader: &dyn StateReader,
) -> Result<PurposeVerdict, ReaderError> {
    let callee = match producer_before(instrs, call, false) {
        Some((_, Producer::Hardcoded(a))) => Some(a),
        Some((_, Producer::Storage(Some(slot)))) => word_address(&reader.storage_at(&proxy.address, &slot)?),
        _ => None,
    };
    let Some(callee) = callee else {
        return Ok(trail.stall(8, "callee address unresolved"));
    };
    let Some(getter) = (0..call).rev().find(|&j| instrs[j].opcode == PUSH4).and_then(|j| instrs[j].push_value()) else {
        return Ok(trail.stall(8, "getter selector not found"));
    };
    let code = match reader.code_at(&callee)? {
        Some(code) if !code.is_empty() => code,
        _ => return Ok(trail.stall(8, format!("callee {callee} bytecode unavailable"))),
    };
    trail.note(8, format!("callee {callee} getter 0x{}", hex::encode(&getter.0[28..])));
    let callee_instrs = disasm::disassemble(code.as_slice());
    trail.note(9, format!("{} instructions", callee_instrs.len()));
    let Some(slot) = dispatch_target(&callee_instrs, &getter).and_then(|dest| getter_slot(&callee_instrs, dest)) else {
        return Ok(trail.stall(10, "getter does not read a constant slot"));
    };
    match first_sstore(callee, &callee_instrs, &slot) {
        Some(site) => {
            trail.note(10, format!("getter slot {slot}, SSTORE@{}", site.offset));
            Ok(trail.finish(Purpose::Upgradeability, Some(site)))
        }
        None => {
            trail.note(10, format!("getter slot {slot}, no SSTORE"));
            Ok(trail.finish(Purpose::Forwarder, None))
        }
    }
}
