use std::collections::BTreeMap;

use thiserror::Error;

use super::leb::{self, LebError};
use super::module::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("bad magic number")]
    BadMagic,
    #[error("unsupported version")]
    BadVersion,
    #[error("unexpected end of input")]
    Truncated,
    #[error("malformed LEB128 integer")]
    MalformedLeb,
    #[error("unknown or unsupported section id {0}")]
    UnknownSection(u8),
    #[error("section {0} out of order or duplicated")]
    SectionOrder(u8),
    #[error("section size mismatch")]
    SectionSize,
    #[error("unsupported opcode 0x{0:02x}")]
    UnsupportedOpcode(u8),
    #[error("unsupported value type 0x{0:02x}")]
    UnsupportedValueType(u8),
    #[error("unsupported {0}")]
    Unsupported(&'static str),
    #[error("invalid UTF-8 in name")]
    BadName,
    #[error("duplicate export or custom section name {0:?}")]
    DuplicateName(String),
    #[error("function and code section counts differ")]
    FunctionCountMismatch,
    #[error("malformed: {0}")]
    Malformed(&'static str),
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

type Result<T> = std::result::Result<T, DecodeError>;

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError {
            offset: self.pos,
            kind,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| self.err(DecodeErrorKind::Truncated))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(DecodeErrorKind::Truncated));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn leb_err(&self, e: LebError) -> DecodeError {
        match e {
            LebError::Truncated => self.err(DecodeErrorKind::Truncated),
            LebError::Overlong => self.err(DecodeErrorKind::MalformedLeb),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        let (v, n) = leb::read_u32(&self.bytes[self.pos..]).map_err(|e| self.leb_err(e))?;
        self.pos += n;
        Ok(v)
    }

    fn i32(&mut self) -> Result<i32> {
        let (v, n) = leb::read_i32(&self.bytes[self.pos..]).map_err(|e| self.leb_err(e))?;
        self.pos += n;
        Ok(v)
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let start = self.pos;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DecodeError {
            offset: start,
            kind: DecodeErrorKind::BadName,
        })
    }

    fn value_type(&mut self) -> Result<()> {
        match self.byte()? {
            I32 => Ok(()),
            other => {
                self.pos -= 1;
                Err(self.err(DecodeErrorKind::UnsupportedValueType(other)))
            }
        }
    }

    fn limits(&mut self) -> Result<Limits> {
        match self.byte()? {
            0x00 => Ok(Limits {
                min: self.u32()?,
                max: None,
            }),
            0x01 => Ok(Limits {
                min: self.u32()?,
                max: Some(self.u32()?),
            }),
            _ => {
                self.pos -= 1;
                Err(self.err(DecodeErrorKind::Malformed("limits flag")))
            }
        }
    }

    /// `i32.const n; end`
    fn const_expr(&mut self) -> Result<i32> {
        if self.byte()? != opcode::I32_CONST {
            self.pos -= 1;
            return Err(self.err(DecodeErrorKind::Unsupported("constant expression")));
        }
        let v = self.i32()?;
        if self.byte()? != opcode::END {
            self.pos -= 1;
            return Err(self.err(DecodeErrorKind::Malformed("constant expression end")));
        }
        Ok(v)
    }

    fn block_type(&mut self) -> Result<BlockType> {
        match self.byte()? {
            0x40 => Ok(BlockType::Empty),
            I32 => Ok(BlockType::I32),
            other => {
                self.pos -= 1;
                Err(self.err(DecodeErrorKind::UnsupportedValueType(other)))
            }
        }
    }

    fn mem_arg(&mut self) -> Result<MemArg> {
        Ok(MemArg {
            align: self.u32()?,
            offset: self.u32()?,
        })
    }

    fn instr(&mut self) -> Result<Instr> {
        use opcode::*;
        let start = self.pos;
        let op = self.byte()?;
        let instr = match op {
            UNREACHABLE => Instr::Unreachable,
            NOP => Instr::Nop,
            BLOCK => Instr::Block(self.block_type()?),
            LOOP => Instr::Loop(self.block_type()?),
            IF => Instr::If(self.block_type()?),
            ELSE => Instr::Else,
            END => Instr::End,
            BR => Instr::Br(self.u32()?),
            BR_IF => Instr::BrIf(self.u32()?),
            RETURN => Instr::Return,
            CALL => Instr::Call(self.u32()?),
            CALL_INDIRECT => {
                let ty = self.u32()?;
                if self.byte()? != 0x00 {
                    self.pos -= 1;
                    return Err(self.err(DecodeErrorKind::Malformed("table index must be 0")));
                }
                Instr::CallIndirect(ty)
            }
            DROP => Instr::Drop,
            SELECT => Instr::Select,
            LOCAL_GET => Instr::LocalGet(self.u32()?),
            LOCAL_SET => Instr::LocalSet(self.u32()?),
            LOCAL_TEE => Instr::LocalTee(self.u32()?),
            GLOBAL_GET => Instr::GlobalGet(self.u32()?),
            GLOBAL_SET => Instr::GlobalSet(self.u32()?),
            I32_LOAD => Instr::Load(LoadKind::I32, self.mem_arg()?),
            I32_LOAD8_S => Instr::Load(LoadKind::I8S, self.mem_arg()?),
            I32_LOAD8_U => Instr::Load(LoadKind::I8U, self.mem_arg()?),
            I32_LOAD16_S => Instr::Load(LoadKind::I16S, self.mem_arg()?),
            I32_LOAD16_U => Instr::Load(LoadKind::I16U, self.mem_arg()?),
            I32_STORE => Instr::Store(StoreKind::I32, self.mem_arg()?),
            I32_STORE8 => Instr::Store(StoreKind::I8, self.mem_arg()?),
            I32_STORE16 => Instr::Store(StoreKind::I16, self.mem_arg()?),
            I32_CONST => Instr::I32Const(self.i32()?),
            I32_EQZ => Instr::Eqz,
            CMP_FIRST..=CMP_LAST => Instr::Cmp(CMP_OPS[(op - CMP_FIRST) as usize]),
            UN_FIRST..=UN_LAST => Instr::Un(UN_OPS[(op - UN_FIRST) as usize]),
            BIN_FIRST..=BIN_LAST => Instr::Bin(BIN_OPS[(op - BIN_FIRST) as usize]),
            other => {
                return Err(DecodeError {
                    offset: start,
                    kind: DecodeErrorKind::UnsupportedOpcode(other),
                })
            }
        };
        Ok(instr)
    }

    /// Reads instructions until the `end` that closes the function body.
    fn body(&mut self, end: usize) -> Result<Vec<Instr>> {
        let mut body = Vec::new();
        let mut depth = 0usize;
        loop {
            if self.pos >= end {
                return Err(self.err(DecodeErrorKind::Malformed("function body missing end")));
            }
            let instr = self.instr()?;
            body.push(instr);
            match instr {
                Instr::Block(_) | Instr::Loop(_) | Instr::If(_) => depth += 1,
                Instr::End if depth == 0 => break,
                Instr::End => depth -= 1,
                _ => {}
            }
        }
        if self.pos != end {
            return Err(self.err(DecodeErrorKind::SectionSize));
        }
        Ok(body)
    }
}

pub(crate) mod section {
    pub const CUSTOM: u8 = 0;
    pub const TYPE: u8 = 1;
    pub const IMPORT: u8 = 2;
    pub const FUNCTION: u8 = 3;
    pub const TABLE: u8 = 4;
    pub const MEMORY: u8 = 5;
    pub const GLOBAL: u8 = 6;
    pub const EXPORT: u8 = 7;
    pub const ELEMENT: u8 = 9;
    pub const CODE: u8 = 10;
    pub const DATA: u8 = 11;
}
pub(crate) use section as section_id;

/// Decodes a binary restricted to the supported subset.
pub fn decode_module(bytes: &[u8]) -> Result<WasmModule> {
    let mut r = Reader { bytes, pos: 0 };
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(r.err(DecodeErrorKind::BadMagic));
    }
    r.pos = 4;
    if r.take(4).map_err(|_| r.err(DecodeErrorKind::BadVersion))? != VERSION {
        return Err(DecodeError {
            offset: 4,
            kind: DecodeErrorKind::BadVersion,
        });
    }

    let mut module = WasmModule::default();
    let mut func_types: Vec<u32> = Vec::new();
    let mut saw_code = false;
    let mut last_id = 0u8;

    while !r.at_end() {
        let id_offset = r.pos;
        let id = r.byte()?;
        let size = r.u32()? as usize;
        if r.bytes.len() - r.pos < size {
            return Err(r.err(DecodeErrorKind::Truncated));
        }
        let end = r.pos + size;
        if id != section::CUSTOM {
            if id <= last_id {
                return Err(DecodeError {
                    offset: id_offset,
                    kind: DecodeErrorKind::SectionOrder(id),
                });
            }
            last_id = id;
        }
        match id {
            section::CUSTOM => {
                let name = r.name()?;
                if r.pos > end {
                    return Err(r.err(DecodeErrorKind::SectionSize));
                }
                let payload = r.take(end - r.pos)?.to_vec();
                if module.custom_sections.contains_key(&name) {
                    return Err(DecodeError {
                        offset: id_offset,
                        kind: DecodeErrorKind::DuplicateName(name),
                    });
                }
                module.custom_sections.insert(name, payload);
            }
            section::TYPE => {
                for _ in 0..r.u32()? {
                    if r.byte()? != 0x60 {
                        r.pos -= 1;
                        return Err(r.err(DecodeErrorKind::Malformed("function type tag")));
                    }
                    let params = r.u32()?;
                    for _ in 0..params {
                        r.value_type()?;
                    }
                    let results = r.u32()?;
                    if results > 1 {
                        return Err(r.err(DecodeErrorKind::Unsupported("multi-value results")));
                    }
                    for _ in 0..results {
                        r.value_type()?;
                    }
                    module.types.push(FuncType { params, results });
                }
            }
            section::IMPORT => {
                for _ in 0..r.u32()? {
                    let module_name = r.name()?;
                    let field = r.name()?;
                    if r.byte()? != 0x00 {
                        r.pos -= 1;
                        return Err(r.err(DecodeErrorKind::Unsupported("non-function import")));
                    }
                    module.imports.push(ImportDecl {
                        module: module_name,
                        field,
                        type_index: r.u32()?,
                    });
                }
            }
            section::FUNCTION => {
                for _ in 0..r.u32()? {
                    func_types.push(r.u32()?);
                }
            }
            section::TABLE => {
                let count = r.u32()?;
                if count > 1 {
                    return Err(r.err(DecodeErrorKind::Unsupported("multiple tables")));
                }
                if count == 1 {
                    if r.byte()? != 0x70 {
                        r.pos -= 1;
                        return Err(r.err(DecodeErrorKind::Unsupported("table element type")));
                    }
                    module.table = Some(r.limits()?);
                }
            }
            section::MEMORY => {
                let count = r.u32()?;
                if count > 1 {
                    return Err(r.err(DecodeErrorKind::Unsupported("multiple memories")));
                }
                if count == 1 {
                    module.memory = Some(r.limits()?);
                }
            }
            section::GLOBAL => {
                for _ in 0..r.u32()? {
                    r.value_type()?;
                    let mutable = match r.byte()? {
                        0 => false,
                        1 => true,
                        _ => {
                            r.pos -= 1;
                            return Err(r.err(DecodeErrorKind::Malformed("global mutability")));
                        }
                    };
                    module.globals.push(Global {
                        mutable,
                        init: r.const_expr()?,
                    });
                }
            }
            section::EXPORT => {
                for _ in 0..r.u32()? {
                    let name_offset = r.pos;
                    let name = r.name()?;
                    let kind = match r.byte()? {
                        0 => ExportKind::Func,
                        1 => ExportKind::Table,
                        2 => ExportKind::Memory,
                        3 => ExportKind::Global,
                        _ => {
                            r.pos -= 1;
                            return Err(r.err(DecodeErrorKind::Malformed("export kind")));
                        }
                    };
                    let index = r.u32()?;
                    if module.exports.contains_key(&name) {
                        return Err(DecodeError {
                            offset: name_offset,
                            kind: DecodeErrorKind::DuplicateName(name),
                        });
                    }
                    module.exports.insert(name, Export { kind, index });
                }
            }
            section::ELEMENT => {
                for _ in 0..r.u32()? {
                    if r.u32()? != 0 {
                        return Err(r.err(DecodeErrorKind::Unsupported("element segment kind")));
                    }
                    let offset = r.const_expr()? as u32;
                    let mut funcs = Vec::new();
                    for _ in 0..r.u32()? {
                        funcs.push(r.u32()?);
                    }
                    module.elements.push(ElementSegment { offset, funcs });
                }
            }
            section::CODE => {
                saw_code = true;
                let count = r.u32()? as usize;
                if count != func_types.len() {
                    return Err(r.err(DecodeErrorKind::FunctionCountMismatch));
                }
                for type_index in func_types.iter().copied() {
                    let body_size = r.u32()? as usize;
                    if r.bytes.len() - r.pos < body_size {
                        return Err(r.err(DecodeErrorKind::Truncated));
                    }
                    let body_end = r.pos + body_size;
                    let mut locals: u32 = 0;
                    for _ in 0..r.u32()? {
                        let n = r.u32()?;
                        r.value_type()?;
                        locals = locals
                            .checked_add(n)
                            .ok_or_else(|| r.err(DecodeErrorKind::Malformed("too many locals")))?;
                    }
                    let body = r.body(body_end)?;
                    module.functions.push(Function {
                        type_index,
                        locals,
                        body,
                    });
                }
            }
            section::DATA => {
                for _ in 0..r.u32()? {
                    if r.u32()? != 0 {
                        return Err(r.err(DecodeErrorKind::Unsupported("data segment kind")));
                    }
                    let offset = r.const_expr()? as u32;
                    let len = r.u32()? as usize;
                    let bytes = r.take(len)?.to_vec();
                    module.data.push(DataSegment { offset, bytes });
                }
            }
            other => {
                return Err(DecodeError {
                    offset: id_offset,
                    kind: DecodeErrorKind::UnknownSection(other),
                })
            }
        }
        if r.pos != end {
            return Err(r.err(DecodeErrorKind::SectionSize));
        }
    }

    if !saw_code && !func_types.is_empty() {
        return Err(r.err(DecodeErrorKind::FunctionCountMismatch));
    }
    Ok(module)
}

/// Custom sections of a binary without decoding the rest.
pub fn custom_sections(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>> {
    decode_module(bytes).map(|m| m.custom_sections)
}
