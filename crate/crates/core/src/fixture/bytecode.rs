//! Hand-assembled runtime bytecode for each proxy shape the classifiers
//! recognise. Every template keeps the slot or address in a PUSH directly
//! before the consuming opcode.

use crate::classify::disasm::*;
use crate::classify::{erc1167_runtime, slots, GNOSIS_MARKER};
use crate::model::{keccak256, selector_from_signature, Address, Word, B256};

const SHR: u8 = 0x1c;
const SHL: u8 = 0x1b;
const POP: u8 = 0x50;
const CREATE: u8 = 0xf0;

/// Byte-level assembler with forward jump patching.
#[derive(Debug, Default, Clone)]
pub struct Asm {
    code: Vec<u8>,
    /// (offset of PUSH2 immediate, label)
    fixups: Vec<(usize, &'static str)>,
    labels: Vec<(&'static str, usize)>,
}

impl Asm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn op(&mut self, ops: &[u8]) -> &mut Self {
        self.code.extend_from_slice(ops);
        self
    }

    /// Shortest PUSHn carrying `bytes` (1 to 32 bytes).
    pub fn push(&mut self, bytes: &[u8]) -> &mut Self {
        assert!((1..=32).contains(&bytes.len()), "push width");
        self.code.push(PUSH1 + bytes.len() as u8 - 1);
        self.code.extend_from_slice(bytes);
        self
    }

    pub fn push_word(&mut self, word: &Word) -> &mut Self {
        self.push(&word.0)
    }

    pub fn push_selector(&mut self, signature: &str) -> &mut Self {
        self.push(&selector_from_signature(signature).0)
    }

    /// PUSH2 of a label's offset, resolved in [`Asm::finish`].
    pub fn push_label(&mut self, label: &'static str) -> &mut Self {
        self.code.push(PUSH2);
        self.fixups.push((self.code.len(), label));
        self.code.extend_from_slice(&[0, 0]);
        self
    }

    pub fn label(&mut self, label: &'static str) -> &mut Self {
        self.labels.push((label, self.code.len()));
        self.code.push(JUMPDEST);
        self
    }

    pub fn len(&self) -> usize {
        self.code.len()
    }

    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }

    pub fn finish(&mut self) -> Vec<u8> {
        for (at, label) in &self.fixups {
            let target = self
                .labels
                .iter()
                .find(|(l, _)| l == label)
                .unwrap_or_else(|| panic!("undefined label {label}"))
                .1;
            let target = u16::try_from(target).expect("code under 64 KiB");
            self.code[*at..*at + 2].copy_from_slice(&target.to_be_bytes());
        }
        std::mem::take(&mut self.code)
    }

    /// Selector of the call on the stack top: `calldata[0..4]`.
    fn load_selector(&mut self) -> &mut Self {
        self.op(&[PUSH0, CALLDATALOAD]).push(&[0xe0]).op(&[SHR])
    }

    /// `DUP1 PUSH4 sel EQ PUSH2 label JUMPI`
    fn dispatch(&mut self, signature: &str, label: &'static str) -> &mut Self {
        self.op(&[DUP1]).push_selector(signature).op(&[EQ]).push_label(label).op(&[JUMPI])
    }

    /// Copies calldata to memory and pushes the delegatecall memory operands.
    fn delegate_prologue(&mut self) -> &mut Self {
        self.op(&[CALLDATASIZE, PUSH0, DUP1, CALLDATACOPY, PUSH0, DUP1, CALLDATASIZE, PUSH0])
    }

    /// Delegates to the address on the stack top and bubbles the return data.
    fn delegate_tail(&mut self) -> &mut Self {
        self.op(&[GAS, DELEGATECALL, RETURNDATASIZE, PUSH0, DUP1, RETURNDATACOPY, RETURNDATASIZE, PUSH0, RETURN])
    }

    /// Returns the word stored at `slot`.
    fn return_slot(&mut self, slot: &Word) -> &mut Self {
        self.push_word(slot)
            .op(&[SLOAD, PUSH0, MSTORE])
            .push(&[0x20])
            .op(&[PUSH0, RETURN])
    }

    /// Writes the first argument word into `slot`.
    fn store_arg(&mut self, slot: &Word) -> &mut Self {
        self.push(&[0x04]).op(&[CALLDATALOAD]).push_word(slot).op(&[SSTORE, STOP])
    }

    fn address_mask(&mut self) -> &mut Self {
        self.push(&[0xff; 20]).op(&[AND])
    }
}

/// Custom-slot layout used by the ERC-897 template; not one of the probed slots.
pub fn erc897_slot() -> Word {
    B256(keccak256(b"proxyprobe.fixture.erc897.implementation"))
}

/// Delegates to an address embedded in the code.
pub fn hardcoded_forwarder(logic: &Address) -> Vec<u8> {
    Asm::new().delegate_prologue().push(logic.as_bytes()).delegate_tail().finish()
}

pub fn minimal_proxy(logic: &Address) -> Vec<u8> {
    erc1167_runtime(logic)
}

/// Delegates to the address in `slot`; with `upgradeable`, an
/// `upgradeTo(address)` entry point rewrites the slot.
pub fn slot_proxy(slot: &Word, upgradeable: bool) -> Vec<u8> {
    let mut a = Asm::new();
    if upgradeable {
        a.load_selector().dispatch("upgradeTo(address)", "upgrade").op(&[POP]);
    }
    a.delegate_prologue().push_word(slot).op(&[SLOAD]).address_mask().delegate_tail();
    if upgradeable {
        a.label("upgrade").store_arg(slot);
    }
    a.finish()
}

/// Logic contract implementing the upgrade entry point for `slot` itself.
pub fn uups_logic(slot: &Word, tag: &str) -> Vec<u8> {
    let mut a = Asm::new();
    a.load_selector()
        .dispatch("upgradeTo(address)", "upgrade")
        .op(&[POP])
        .push(&keccak256(tag.as_bytes()))
        .op(&[POP, STOP])
        .label("upgrade")
        .store_arg(slot);
    a.finish()
}

/// Logic contract with no storage writes to proxy slots.
pub fn plain_logic(tag: &str) -> Vec<u8> {
    Asm::new()
        .push(&keccak256(tag.as_bytes()))
        .op(&[PUSH0, MSTORE])
        .push(&[0x20])
        .op(&[PUSH0, RETURN])
        .finish()
}

/// Asks the beacon in ERC1967_BEACON for `implementation()` and delegates to
/// the answer.
pub fn beacon_proxy() -> Vec<u8> {
    Asm::new()
        .push_selector("implementation()")
        .push(&[0xe0])
        .op(&[SHL, PUSH0, MSTORE])
        .push(&[0x20])
        .op(&[PUSH0])
        .push(&[0x04])
        .op(&[PUSH0])
        .push_word(&slots::ERC1967_BEACON)
        .op(&[SLOAD, GAS, STATICCALL, POP, PUSH0, MLOAD])
        .delegate_prologue()
        .op(&[0x94]) // SWAP5
        .delegate_tail()
        .finish()
}

/// Beacon answering `implementation()` from `slot`, optionally upgradeable.
pub fn beacon(slot: &Word, upgradeable: bool) -> Vec<u8> {
    let mut a = Asm::new();
    a.load_selector().dispatch("implementation()", "get");
    if upgradeable {
        a.dispatch("upgradeTo(address)", "upgrade");
    }
    a.op(&[STOP]).label("get").return_slot(slot);
    if upgradeable {
        a.label("upgrade").store_arg(slot);
    }
    a.finish()
}

/// Gnosis Safe style: master copy in slot 0, exposed through `masterCopy()`.
pub fn gnosis_proxy() -> Vec<u8> {
    debug_assert_eq!(selector_from_signature("masterCopy()").0, GNOSIS_MARKER);
    Asm::new()
        .load_selector()
        .dispatch("masterCopy()", "master")
        .op(&[POP])
        .delegate_prologue()
        .push(&[0x00])
        .op(&[SLOAD])
        .address_mask()
        .delegate_tail()
        .label("master")
        .return_slot(&Word::ZERO)
        .finish()
}

/// Master copy able to replace itself through `changeMasterCopy(address)`.
pub fn gnosis_master_copy(tag: &str) -> Vec<u8> {
    let mut a = Asm::new();
    a.load_selector()
        .dispatch("changeMasterCopy(address)", "change")
        .op(&[POP])
        .push(&keccak256(tag.as_bytes()))
        .op(&[POP, STOP])
        .label("change")
        .store_arg(&Word::ZERO);
    a.finish()
}

/// ERC-897 style: `implementation()` getter over a custom slot, no setter.
pub fn erc897_proxy() -> Vec<u8> {
    let slot = erc897_slot();
    Asm::new()
        .load_selector()
        .dispatch("implementation()", "get")
        .op(&[POP])
        .delegate_prologue()
        .push_word(&slot)
        .op(&[SLOAD])
        .delegate_tail()
        .label("get")
        .return_slot(&slot)
        .finish()
}

/// Factory logic: runs CREATE on a template held in code.
pub fn factory(tag: &str) -> Vec<u8> {
    Asm::new()
        .push(&keccak256(tag.as_bytes()))
        .op(&[PUSH0, MSTORE])
        .push(&[0x2d])
        .push(&[0x00])
        .op(&[PUSH0, CREATE, STOP])
        .finish()
}

/// Ordinary contract with a selector switch and storage writes.
pub fn plain_contract(tag: &str, len: usize) -> Vec<u8> {
    let mut code = Asm::new()
        .load_selector()
        .push(&keccak256(tag.as_bytes()))
        .op(&[SSTORE, STOP])
        .finish();
    let base = code.len();
    let mut filler = keccak256(format!("{tag}:body").as_bytes()).to_vec();
    while code.len() < len {
        // INVALID-prefixed data section; never reached.
        code.push(INVALID);
        code.extend_from_slice(&filler);
        filler = keccak256(&filler).to_vec();
    }
    code.truncate(len.max(base));
    code
}
