//! Linear EVM disassembly. PUSH immediates are consumed as data, so opcode
//! bytes embedded in pushed constants never appear as instructions.

use crate::model::B256;

pub const STOP: u8 = 0x00;
pub const EQ: u8 = 0x14;
pub const AND: u8 = 0x16;
pub const CALLDATALOAD: u8 = 0x35;
pub const CALLDATASIZE: u8 = 0x36;
pub const CALLDATACOPY: u8 = 0x37;
pub const RETURNDATASIZE: u8 = 0x3d;
pub const RETURNDATACOPY: u8 = 0x3e;
pub const MLOAD: u8 = 0x51;
pub const MSTORE: u8 = 0x52;
pub const SLOAD: u8 = 0x54;
pub const SSTORE: u8 = 0x55;
pub const JUMP: u8 = 0x56;
pub const JUMPI: u8 = 0x57;
pub const GAS: u8 = 0x5a;
pub const JUMPDEST: u8 = 0x5b;
pub const PUSH0: u8 = 0x5f;
pub const PUSH1: u8 = 0x60;
pub const PUSH2: u8 = 0x61;
pub const PUSH4: u8 = 0x63;
pub const PUSH20: u8 = 0x73;
pub const PUSH32: u8 = 0x7f;
pub const DUP1: u8 = 0x80;
pub const SWAP1: u8 = 0x90;
pub const CALL: u8 = 0xf1;
pub const CALLCODE: u8 = 0xf2;
pub const RETURN: u8 = 0xf3;
pub const DELEGATECALL: u8 = 0xf4;
pub const STATICCALL: u8 = 0xfa;
pub const REVERT: u8 = 0xfd;
pub const INVALID: u8 = 0xfe;
pub const SELFDESTRUCT: u8 = 0xff;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction<'a> {
    /// Byte offset of the opcode.
    pub offset: usize,
    pub opcode: u8,
    /// Immediate bytes; shorter than the nominal width when the code ends
    /// mid-push.
    pub immediate: &'a [u8],
}

impl Instruction<'_> {
    pub fn is_push(&self) -> bool {
        (PUSH0..=PUSH32).contains(&self.opcode)
    }

    /// Value pushed, left-padded to a word. A truncated immediate is padded
    /// on the right with zeros, as the EVM reads past the end of code.
    pub fn push_value(&self) -> Option<B256> {
        if !self.is_push() {
            return None;
        }
        let width = push_width(self.opcode);
        let mut bytes = self.immediate.to_vec();
        bytes.resize(width, 0);
        B256::from_be_slice(&bytes)
    }

    /// Offset of the next instruction.
    pub fn end(&self) -> usize {
        self.offset + 1 + self.immediate.len()
    }
}

pub fn push_width(opcode: u8) -> usize {
    if (PUSH1..=PUSH32).contains(&opcode) {
        (opcode - PUSH1 + 1) as usize
    } else {
        0
    }
}

pub fn disassemble(code: &[u8]) -> Vec<Instruction<'_>> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let opcode = code[pc];
        let end = (pc + 1 + push_width(opcode)).min(code.len());
        out.push(Instruction {
            offset: pc,
            opcode,
            immediate: &code[pc + 1..end],
        });
        pc = end;
    }
    out
}

/// Constant operand of `instrs[i]` when the instruction right before it is a push.
pub fn constant_operand(instrs: &[Instruction<'_>], i: usize) -> Option<B256> {
    i.checked_sub(1).and_then(|j| instrs[j].push_value())
}

/// Offsets of every SSTORE whose key is pushed by the preceding instruction and equals `slot`.
pub fn sstores_to(instrs: &[Instruction<'_>], slot: &B256) -> Vec<usize> {
    instrs
        .iter()
        .enumerate()
        .filter(|(i, ins)| ins.opcode == SSTORE && constant_operand(instrs, *i).as_ref() == Some(slot))
        .map(|(_, ins)| ins.offset)
        .collect()
}

/// Index of the instruction starting at byte `offset`.
pub fn index_at(instrs: &[Instruction<'_>], offset: usize) -> Option<usize> {
    instrs.binary_search_by_key(&offset, |i| i.offset).ok()
}
