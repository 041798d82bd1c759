//! Service-side peripheral requirements and their `wasmio.requirements`
//! custom-section encoding.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "WIOR" | version u16 = 1
//! reg count u16 | { len u16, label, dummy_addr u32, width u8 }*
//! dev count u16 | { len u16, label }*
//! irq count u16 | { len u16, label, priority u8, handler u32,
//!                   copy count u8, { len u16, source, dest u32, width u8 }* }*
//! ```

mod codec;
mod text;

use std::collections::BTreeSet;

use thiserror::Error;

pub use codec::{decode_requirements, encode_requirements, ManifestDecodeError, ManifestDecodeErrorKind};
pub use text::{parse_manifest, render_manifest};

use crate::wasm::{self, DecodeError, WasmModule};

pub const SECTION_NAME: &str = "wasmio.requirements";
pub const MAGIC: [u8; 4] = *b"WIOR";
pub const FORMAT_VERSION: u16 = 1;
pub const MAX_LABEL_LEN: usize = 64;
pub const DUMMY_FLOOR: u32 = 0x8000_0000;
pub const DEFAULT_MAX_COPIES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeripheralRequirements {
    pub registers: Vec<RegisterRequirement>,
    pub devices: Vec<DeviceRequirement>,
    pub interrupts: Vec<InterruptSubscription>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterRequirement {
    pub label: String,
    pub dummy_addr: u32,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceRequirement {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterruptSubscription {
    pub label: String,
    /// 0 runs first among epilogues of the same interrupt.
    pub priority: u8,
    /// Slot in the module's function table.
    pub handler: u32,
    pub copies: Vec<CopyDescriptor>,
}

/// A register value captured when the interrupt arrives. `dest` is a
/// linear-memory offset for RAPI services and a dummy address for MMIO ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyDescriptor {
    pub source: String,
    pub dest: u32,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("label {0:?} is empty or longer than {MAX_LABEL_LEN} bytes")]
    BadLabel(String),
    #[error("duplicate {category} label {label:?}")]
    DuplicateLabel { category: &'static str, label: String },
    #[error("{0:?}: width must be 1, 2 or 4")]
    BadWidth(String),
    #[error("{0:?}: dummy address must be at least {DUMMY_FLOOR:#x}")]
    DummyBelowFloor(String),
    #[error("{0:?}: dummy address not aligned to its width")]
    DummyMisaligned(String),
    #[error("duplicate dummy address {0:#x}")]
    DuplicateDummy(u32),
    #[error("interrupt {label:?} has {count} copies, limit is {max}")]
    TooManyCopies { label: String, count: usize, max: usize },
    #[error("copy source {0:?} is not a required register")]
    UnknownCopySource(String),
    #[error("too many {0} entries for the format")]
    TooMany(&'static str),
}

impl PeripheralRequirements {
    /// Checks every invariant the binary encoding relies on.
    pub fn validate(&self, max_copies: usize) -> Result<(), EncodeError> {
        if self.registers.len() > u16::MAX as usize {
            return Err(EncodeError::TooMany("register"));
        }
        if self.devices.len() > u16::MAX as usize {
            return Err(EncodeError::TooMany("device"));
        }
        if self.interrupts.len() > u16::MAX as usize {
            return Err(EncodeError::TooMany("interrupt"));
        }

        let mut seen = BTreeSet::new();
        let mut dummies = BTreeSet::new();
        for r in &self.registers {
            check_label(&r.label)?;
            if !seen.insert(r.label.as_str()) {
                return Err(dup("register", &r.label));
            }
            if !matches!(r.width, 1 | 2 | 4) {
                return Err(EncodeError::BadWidth(r.label.clone()));
            }
            if r.dummy_addr < DUMMY_FLOOR {
                return Err(EncodeError::DummyBelowFloor(r.label.clone()));
            }
            if r.dummy_addr % r.width as u32 != 0 {
                return Err(EncodeError::DummyMisaligned(r.label.clone()));
            }
            if !dummies.insert(r.dummy_addr) {
                return Err(EncodeError::DuplicateDummy(r.dummy_addr));
            }
        }
        let registers = seen;

        let mut seen = BTreeSet::new();
        for d in &self.devices {
            check_label(&d.label)?;
            if !seen.insert(d.label.as_str()) {
                return Err(dup("device", &d.label));
            }
        }

        let mut seen = BTreeSet::new();
        for irq in &self.interrupts {
            check_label(&irq.label)?;
            if !seen.insert(irq.label.as_str()) {
                return Err(dup("interrupt", &irq.label));
            }
            let max = max_copies.min(u8::MAX as usize);
            if irq.copies.len() > max {
                return Err(EncodeError::TooManyCopies {
                    label: irq.label.clone(),
                    count: irq.copies.len(),
                    max,
                });
            }
            for c in &irq.copies {
                check_label(&c.source)?;
                if !registers.contains(c.source.as_str()) {
                    return Err(EncodeError::UnknownCopySource(c.source.clone()));
                }
                if !matches!(c.width, 1 | 2 | 4) {
                    return Err(EncodeError::BadWidth(c.source.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn register(&self, label: &str) -> Option<&RegisterRequirement> {
        self.registers.iter().find(|r| r.label == label)
    }

    pub fn subscription(&self, label: &str) -> Option<&InterruptSubscription> {
        self.interrupts.iter().find(|s| s.label == label)
    }

    /// Every label the service depends on, in category order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.registers
            .iter()
            .map(|r| r.label.as_str())
            .chain(self.devices.iter().map(|d| d.label.as_str()))
            .chain(self.interrupts.iter().map(|i| i.label.as_str()))
    }
}

fn check_label(label: &str) -> Result<(), EncodeError> {
    if label.is_empty() || label.len() > MAX_LABEL_LEN {
        return Err(EncodeError::BadLabel(label.to_owned()));
    }
    Ok(())
}

fn dup(category: &'static str, label: &str) -> EncodeError {
    EncodeError::DuplicateLabel {
        category,
        label: label.to_owned(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbedError {
    #[error("module already carries a {SECTION_NAME} section")]
    AlreadyEmbedded,
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("module has no {SECTION_NAME} section")]
    Missing,
    #[error(transparent)]
    Malformed(#[from] ManifestDecodeError),
}

/// Appends the requirements section to a binary. Existing bytes are kept
/// verbatim, so the code and all other sections are untouched.
pub fn embed_requirements(wasm_bytes: &[u8], req: &PeripheralRequirements) -> Result<Vec<u8>, EmbedError> {
    let sections = wasm::custom_sections(wasm_bytes)?;
    if sections.contains_key(SECTION_NAME) {
        return Err(EmbedError::AlreadyEmbedded);
    }
    let payload = encode_requirements(req)?;
    let mut body = Vec::with_capacity(payload.len() + SECTION_NAME.len() + 2);
    wasm::leb::write_u32(&mut body, SECTION_NAME.len() as u32);
    body.extend_from_slice(SECTION_NAME.as_bytes());
    body.extend_from_slice(&payload);

    let mut out = wasm_bytes.to_vec();
    out.push(0);
    wasm::leb::write_u32(&mut out, body.len() as u32);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn extract_requirements(module: &WasmModule) -> Result<PeripheralRequirements, ExtractError> {
    let payload = module
        .custom_sections
        .get(SECTION_NAME)
        .ok_or(ExtractError::Missing)?;
    Ok(decode_requirements(payload)?)
}
