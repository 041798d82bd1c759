use thiserror::Error;

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("requirements decode error at offset {offset}: {kind}")]
pub struct ManifestDecodeError {
    pub offset: usize,
    pub kind: ManifestDecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestDecodeErrorKind {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u16),
    #[error("truncated")]
    Truncated,
    #[error("label is not UTF-8")]
    BadUtf8,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("invalid content: {0}")]
    Invalid(EncodeError),
}

/// Deterministic binary form; fails on any invariant violation.
pub fn encode_requirements(req: &PeripheralRequirements) -> Result<Vec<u8>, EncodeError> {
    req.validate(DEFAULT_MAX_COPIES)?;
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    put_u16(&mut out, req.registers.len());
    for r in &req.registers {
        put_label(&mut out, &r.label);
        out.extend_from_slice(&r.dummy_addr.to_le_bytes());
        out.push(r.width);
    }
    put_u16(&mut out, req.devices.len());
    for d in &req.devices {
        put_label(&mut out, &d.label);
    }
    put_u16(&mut out, req.interrupts.len());
    for irq in &req.interrupts {
        put_label(&mut out, &irq.label);
        out.push(irq.priority);
        out.extend_from_slice(&irq.handler.to_le_bytes());
        out.push(irq.copies.len() as u8);
        for c in &irq.copies {
            put_label(&mut out, &c.source);
            out.extend_from_slice(&c.dest.to_le_bytes());
            out.push(c.width);
        }
    }
    Ok(out)
}

fn put_u16(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u16).to_le_bytes());
}

fn put_label(out: &mut Vec<u8>, label: &str) {
    put_u16(out, label.len());
    out.extend_from_slice(label.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, kind: ManifestDecodeErrorKind) -> ManifestDecodeError {
        ManifestDecodeError {
            offset: self.pos,
            kind,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ManifestDecodeError> {
        if self.bytes.len() - self.pos < n {
            // Report where the data ran out, not where the field began.
            self.pos = self.bytes.len();
            return Err(self.err(ManifestDecodeErrorKind::Truncated));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ManifestDecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ManifestDecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ManifestDecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn label(&mut self) -> Result<String, ManifestDecodeError> {
        let len = self.u16()? as usize;
        let at = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| ManifestDecodeError {
            offset: at,
            kind: ManifestDecodeErrorKind::BadUtf8,
        })
    }
}

pub fn decode_requirements(bytes: &[u8]) -> Result<PeripheralRequirements, ManifestDecodeError> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(c.err(ManifestDecodeErrorKind::BadMagic));
    }
    c.pos = 4;
    let version = c.u16()?;
    if version != FORMAT_VERSION {
        c.pos = 4;
        return Err(c.err(ManifestDecodeErrorKind::BadVersion(version)));
    }

    let mut req = PeripheralRequirements::default();
    for _ in 0..c.u16()? {
        let label = c.label()?;
        let dummy_addr = c.u32()?;
        let width = c.u8()?;
        req.registers.push(RegisterRequirement {
            label,
            dummy_addr,
            width,
        });
    }
    for _ in 0..c.u16()? {
        req.devices.push(DeviceRequirement { label: c.label()? });
    }
    for _ in 0..c.u16()? {
        let label = c.label()?;
        let priority = c.u8()?;
        let handler = c.u32()?;
        let n = c.u8()?;
        let mut copies = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let source = c.label()?;
            let dest = c.u32()?;
            let width = c.u8()?;
            copies.push(CopyDescriptor {
                source,
                dest,
                width,
            });
        }
        req.interrupts.push(InterruptSubscription {
            label,
            priority,
            handler,
            copies,
        });
    }
    if c.pos != bytes.len() {
        return Err(c.err(ManifestDecodeErrorKind::Trailing(bytes.len() - c.pos)));
    }
    // The copy limit is a load-time policy; the format admits up to 255.
    req.validate(u8::MAX as usize)
        .map_err(|e| c.err(ManifestDecodeErrorKind::Invalid(e)))?;
    Ok(req)
}
