//! Structural representation of a decoded module.
//!
//! Only 32-bit integers exist in the supported subset, so signatures are
//! stored as parameter/result counts rather than value-type vectors.

use std::collections::BTreeMap;

pub const MAGIC: [u8; 4] = *b"\0asm";
pub const VERSION: [u8; 4] = [1, 0, 0, 0];

/// Value type byte for `i32`, the only value type in the subset.
pub const I32: u8 = 0x7f;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FuncType {
    pub params: u32,
    /// Zero or one.
    pub results: u32,
}

impl FuncType {
    pub const fn new(params: u32, results: u32) -> Self {
        Self { params, results }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportDecl {
    pub module: String,
    pub field: String,
    pub type_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub type_index: u32,
    /// Number of declared (non-parameter) locals.
    pub locals: u32,
    /// Instructions including the terminating `end`.
    pub body: Vec<Instr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub min: u32,
    pub max: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Global {
    pub mutable: bool,
    pub init: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExportKind {
    Func,
    Table,
    Memory,
    Global,
}

impl ExportKind {
    pub(crate) fn byte(self) -> u8 {
        match self {
            ExportKind::Func => 0,
            ExportKind::Table => 1,
            ExportKind::Memory => 2,
            ExportKind::Global => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Export {
    pub kind: ExportKind,
    pub index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementSegment {
    pub offset: u32,
    pub funcs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSegment {
    pub offset: u32,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WasmModule {
    pub types: Vec<FuncType>,
    pub imports: Vec<ImportDecl>,
    pub functions: Vec<Function>,
    pub table: Option<Limits>,
    pub memory: Option<Limits>,
    pub globals: Vec<Global>,
    pub exports: BTreeMap<String, Export>,
    pub elements: Vec<ElementSegment>,
    pub data: Vec<DataSegment>,
    pub custom_sections: BTreeMap<String, Vec<u8>>,
}

impl WasmModule {
    /// Total function index space: imports first, then defined functions.
    pub fn func_count(&self) -> u32 {
        (self.imports.len() + self.functions.len()) as u32
    }

    pub fn func_type(&self, func_index: u32) -> Option<FuncType> {
        let idx = func_index as usize;
        let type_index = if idx < self.imports.len() {
            self.imports[idx].type_index
        } else {
            self.functions.get(idx - self.imports.len())?.type_index
        };
        self.types.get(type_index as usize).copied()
    }

    pub fn exported_func(&self, name: &str) -> Option<u32> {
        match self.exports.get(name) {
            Some(Export {
                kind: ExportKind::Func,
                index,
            }) => Some(*index),
            _ => None,
        }
    }

    /// Function index stored at `slot` of the function table, if initialized.
    pub fn table_entry(&self, slot: u32) -> Option<u32> {
        let mut found = None;
        for seg in &self.elements {
            if slot >= seg.offset && ((slot - seg.offset) as usize) < seg.funcs.len() {
                found = Some(seg.funcs[(slot - seg.offset) as usize]);
            }
        }
        found
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockType {
    Empty,
    I32,
}

impl BlockType {
    pub fn arity(self) -> usize {
        match self {
            BlockType::Empty => 0,
            BlockType::I32 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemArg {
    pub align: u32,
    pub offset: u32,
}

impl MemArg {
    pub const fn offset(offset: u32) -> Self {
        Self { align: 0, offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadKind {
    I32,
    I8S,
    I8U,
    I16S,
    I16U,
}

impl LoadKind {
    pub fn width(self) -> u32 {
        match self {
            LoadKind::I32 => 4,
            LoadKind::I8S | LoadKind::I8U => 1,
            LoadKind::I16S | LoadKind::I16U => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreKind {
    I32,
    I8,
    I16,
}

impl StoreKind {
    pub fn width(self) -> u32 {
        match self {
            StoreKind::I32 => 4,
            StoreKind::I8 => 1,
            StoreKind::I16 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    LtS,
    LtU,
    GtS,
    GtU,
    LeS,
    LeU,
    GeS,
    GeU,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Clz,
    Ctz,
    Popcnt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    DivS,
    DivU,
    RemS,
    RemU,
    And,
    Or,
    Xor,
    Shl,
    ShrS,
    ShrU,
    Rotl,
    Rotr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Unreachable,
    Nop,
    Block(BlockType),
    Loop(BlockType),
    If(BlockType),
    Else,
    End,
    Br(u32),
    BrIf(u32),
    Return,
    Call(u32),
    CallIndirect(u32),
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load(LoadKind, MemArg),
    Store(StoreKind, MemArg),
    I32Const(i32),
    Eqz,
    Cmp(CmpOp),
    Un(UnOp),
    Bin(BinOp),
}

pub(crate) mod opcode {
    pub const UNREACHABLE: u8 = 0x00;
    pub const NOP: u8 = 0x01;
    pub const BLOCK: u8 = 0x02;
    pub const LOOP: u8 = 0x03;
    pub const IF: u8 = 0x04;
    pub const ELSE: u8 = 0x05;
    pub const END: u8 = 0x0b;
    pub const BR: u8 = 0x0c;
    pub const BR_IF: u8 = 0x0d;
    pub const RETURN: u8 = 0x0f;
    pub const CALL: u8 = 0x10;
    pub const CALL_INDIRECT: u8 = 0x11;
    pub const DROP: u8 = 0x1a;
    pub const SELECT: u8 = 0x1b;
    pub const LOCAL_GET: u8 = 0x20;
    pub const LOCAL_SET: u8 = 0x21;
    pub const LOCAL_TEE: u8 = 0x22;
    pub const GLOBAL_GET: u8 = 0x23;
    pub const GLOBAL_SET: u8 = 0x24;
    pub const I32_LOAD: u8 = 0x28;
    pub const I32_LOAD8_S: u8 = 0x2c;
    pub const I32_LOAD8_U: u8 = 0x2d;
    pub const I32_LOAD16_S: u8 = 0x2e;
    pub const I32_LOAD16_U: u8 = 0x2f;
    pub const I32_STORE: u8 = 0x36;
    pub const I32_STORE8: u8 = 0x3a;
    pub const I32_STORE16: u8 = 0x3b;
    pub const I32_CONST: u8 = 0x41;
    pub const I32_EQZ: u8 = 0x45;
    /// `i32.eq` .. `i32.ge_u`
    pub const CMP_FIRST: u8 = 0x46;
    pub const CMP_LAST: u8 = 0x4f;
    /// `i32.clz` .. `i32.popcnt`
    pub const UN_FIRST: u8 = 0x67;
    pub const UN_LAST: u8 = 0x69;
    /// `i32.add` .. `i32.rotr`
    pub const BIN_FIRST: u8 = 0x6a;
    pub const BIN_LAST: u8 = 0x78;
}

pub(crate) const CMP_OPS: [CmpOp; 10] = [
    CmpOp::Eq,
    CmpOp::Ne,
    CmpOp::LtS,
    CmpOp::LtU,
    CmpOp::GtS,
    CmpOp::GtU,
    CmpOp::LeS,
    CmpOp::LeU,
    CmpOp::GeS,
    CmpOp::GeU,
];

pub(crate) const UN_OPS: [UnOp; 3] = [UnOp::Clz, UnOp::Ctz, UnOp::Popcnt];

pub(crate) const BIN_OPS: [BinOp; 15] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::DivS,
    BinOp::DivU,
    BinOp::RemS,
    BinOp::RemU,
    BinOp::And,
    BinOp::Or,
    BinOp::Xor,
    BinOp::Shl,
    BinOp::ShrS,
    BinOp::ShrU,
    BinOp::Rotl,
    BinOp::Rotr,
];
