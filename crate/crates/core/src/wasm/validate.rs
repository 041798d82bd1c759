//! Static checks over a decoded module.
//!
//! Validation doubles as compilation: each body is lowered to a flat [`Op`]
//! sequence in which structured branches carry resolved targets and the exact
//! number of operand slots to keep and discard. The interpreter therefore
//! needs no label stack at run time.

use std::sync::Arc;

use thiserror::Error;

use super::encode::encode_instr;
use super::module::*;

const MAX_LOCALS: u32 = 50_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("validation failed{}: {kind}", location(*.func, *.offset))]
pub struct ValidateError {
    /// Function index space position (imports included), when the error is in code.
    pub func: Option<u32>,
    /// Byte offset of the offending instruction within the function's code.
    pub offset: Option<u32>,
    pub kind: ValidateErrorKind,
}

fn location(func: Option<u32>, offset: Option<u32>) -> String {
    match (func, offset) {
        (Some(f), Some(o)) => format!(" in function {f} at offset {o}"),
        (Some(f), None) => format!(" in function {f}"),
        _ => String::new(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidateErrorKind {
    #[error("type index {0} out of range")]
    TypeIndex(u32),
    #[error("function index {0} out of range")]
    FuncIndex(u32),
    #[error("local index {0} out of range")]
    LocalIndex(u32),
    #[error("global index {0} out of range")]
    GlobalIndex(u32),
    #[error("global {0} is immutable")]
    ImmutableGlobal(u32),
    #[error("branch depth {0} out of range")]
    LabelIndex(u32),
    #[error("operand stack underflow")]
    StackUnderflow,
    #[error("block leaves {found} values, expected {expected}")]
    StackHeight { expected: usize, found: usize },
    #[error("if without else must not produce a value")]
    IfWithoutElse,
    #[error("else without matching if")]
    StrayElse,
    #[error("instructions after function end")]
    TrailingCode,
    #[error("memory instruction without a declared memory")]
    NoMemory,
    #[error("call_indirect without a table")]
    NoTable,
    #[error("alignment exceeds natural alignment")]
    Alignment,
    #[error("too many locals")]
    TooManyLocals,
    #[error("limits minimum exceeds maximum")]
    Limits,
    #[error("export {0:?} refers to a missing item")]
    ExportIndex(String),
    #[error("element segment does not fit the table")]
    ElementBounds,
    #[error("data segment without a declared memory")]
    DataWithoutMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    Unreachable,
    Nop,
    Jump(u32),
    Br { target: u32, keep: u32, drop: u32 },
    BrIf { target: u32, keep: u32, drop: u32 },
    IfFalse(u32),
    Return,
    ReturnIf,
    Call(u32),
    CallIndirect(u32),
    Drop,
    Select,
    LocalGet(u32),
    LocalSet(u32),
    LocalTee(u32),
    GlobalGet(u32),
    GlobalSet(u32),
    Load(LoadKind, u32),
    Store(StoreKind, u32),
    Const(i32),
    Eqz,
    Cmp(CmpOp),
    Un(UnOp),
    Bin(BinOp),
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledFunc {
    pub ty: FuncType,
    pub locals: u32,
    pub ops: Vec<Op>,
    pub offsets: Vec<u32>,
}

/// A module that passed validation, with its bodies lowered for execution.
#[derive(Debug, Clone)]
pub struct ValidModule {
    module: WasmModule,
    pub(crate) funcs: Vec<CompiledFunc>,
}

impl ValidModule {
    pub fn module(&self) -> &WasmModule {
        &self.module
    }

    pub fn num_imports(&self) -> u32 {
        self.module.imports.len() as u32
    }

    pub(crate) fn compiled(&self, func_index: u32) -> Option<&CompiledFunc> {
        self.funcs
            .get((func_index as usize).checked_sub(self.module.imports.len())?)
    }
}

fn module_err(kind: ValidateErrorKind) -> ValidateError {
    ValidateError {
        func: None,
        offset: None,
        kind,
    }
}

pub fn validate_module(module: WasmModule) -> Result<Arc<ValidModule>, ValidateError> {
    let m = &module;
    for imp in &m.imports {
        if imp.type_index as usize >= m.types.len() {
            return Err(module_err(ValidateErrorKind::TypeIndex(imp.type_index)));
        }
    }
    for limits in [m.table, m.memory].into_iter().flatten() {
        if limits.max.is_some_and(|max| max < limits.min) {
            return Err(module_err(ValidateErrorKind::Limits));
        }
    }
    for (name, export) in &m.exports {
        let ok = match export.kind {
            ExportKind::Func => export.index < m.func_count(),
            ExportKind::Table => m.table.is_some() && export.index == 0,
            ExportKind::Memory => m.memory.is_some() && export.index == 0,
            ExportKind::Global => (export.index as usize) < m.globals.len(),
        };
        if !ok {
            return Err(module_err(ValidateErrorKind::ExportIndex(name.clone())));
        }
    }
    for seg in &m.elements {
        let table = m.table.ok_or(module_err(ValidateErrorKind::NoTable))?;
        if seg.offset as u64 + seg.funcs.len() as u64 > table.min as u64 {
            return Err(module_err(ValidateErrorKind::ElementBounds));
        }
        if let Some(f) = seg.funcs.iter().find(|f| **f >= m.func_count()) {
            return Err(module_err(ValidateErrorKind::FuncIndex(*f)));
        }
    }
    if !m.data.is_empty() && m.memory.is_none() {
        return Err(module_err(ValidateErrorKind::DataWithoutMemory));
    }

    let mut funcs = Vec::with_capacity(m.functions.len());
    for (i, f) in m.functions.iter().enumerate() {
        let func_index = (m.imports.len() + i) as u32;
        let ty = *m.types.get(f.type_index as usize).ok_or(ValidateError {
            func: Some(func_index),
            offset: None,
            kind: ValidateErrorKind::TypeIndex(f.type_index),
        })?;
        if f.locals > MAX_LOCALS {
            return Err(ValidateError {
                func: Some(func_index),
                offset: None,
                kind: ValidateErrorKind::TooManyLocals,
            });
        }
        funcs.push(FuncValidator::new(m, ty, f).run().map_err(|(offset, kind)| {
            ValidateError {
                func: Some(func_index),
                offset: Some(offset),
                kind,
            }
        })?);
    }

    Ok(Arc::new(ValidModule { module, funcs }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CtrlKind {
    Func,
    Block,
    Loop,
    If,
    Else,
}

struct Ctrl {
    kind: CtrlKind,
    height: usize,
    /// Values a branch to this label carries.
    label_arity: usize,
    /// Values left when the construct ends.
    end_arity: usize,
    unreachable: bool,
    loop_start: u32,
    if_op: Option<usize>,
    pending: Vec<usize>,
}

struct FuncValidator<'a> {
    module: &'a WasmModule,
    ty: FuncType,
    func: &'a Function,
    ops: Vec<Op>,
    offsets: Vec<u32>,
    ctrl: Vec<Ctrl>,
    height: usize,
}

type Step = Result<(), ValidateErrorKind>;

impl<'a> FuncValidator<'a> {
    fn new(module: &'a WasmModule, ty: FuncType, func: &'a Function) -> Self {
        Self {
            module,
            ty,
            func,
            ops: Vec::with_capacity(func.body.len()),
            offsets: Vec::with_capacity(func.body.len()),
            ctrl: Vec::new(),
            height: 0,
        }
    }

    fn run(mut self) -> Result<CompiledFunc, (u32, ValidateErrorKind)> {
        let results = self.ty.results as usize;
        self.ctrl.push(Ctrl {
            kind: CtrlKind::Func,
            height: 0,
            label_arity: results,
            end_arity: results,
            unreachable: false,
            loop_start: 0,
            if_op: None,
            pending: Vec::new(),
        });
        let mut offset = 0u32;
        let mut scratch = Vec::new();
        for (i, instr) in self.func.body.iter().enumerate() {
            if self.ctrl.is_empty() {
                return Err((offset, ValidateErrorKind::TrailingCode));
            }
            self.instr(i, instr).map_err(|k| (offset, k))?;
            self.offsets.push(offset);
            scratch.clear();
            encode_instr(&mut scratch, instr);
            offset += scratch.len() as u32;
        }
        if !self.ctrl.is_empty() {
            return Err((offset, ValidateErrorKind::StackHeight {
                expected: 0,
                found: self.height,
            }));
        }
        Ok(CompiledFunc {
            ty: self.ty,
            locals: self.func.locals,
            ops: self.ops,
            offsets: self.offsets,
        })
    }

    fn top(&mut self) -> &mut Ctrl {
        self.ctrl.last_mut().expect("control stack non-empty")
    }

    fn pop(&mut self, n: usize) -> Step {
        for _ in 0..n {
            let ctrl = self.ctrl.last().expect("control stack non-empty");
            if self.height > ctrl.height {
                self.height -= 1;
            } else if !ctrl.unreachable {
                return Err(ValidateErrorKind::StackUnderflow);
            }
        }
        Ok(())
    }

    fn push(&mut self, n: usize) {
        self.height += n;
    }

    fn set_unreachable(&mut self) {
        let h = self.top().height;
        self.height = h;
        self.top().unreachable = true;
    }

    fn label(&self, depth: u32) -> Result<usize, ValidateErrorKind> {
        let d = depth as usize;
        if d >= self.ctrl.len() {
            return Err(ValidateErrorKind::LabelIndex(depth));
        }
        Ok(self.ctrl.len() - 1 - d)
    }

    fn check_local(&self, idx: u32) -> Step {
        if idx as u64 >= self.ty.params as u64 + self.func.locals as u64 {
            return Err(ValidateErrorKind::LocalIndex(idx));
        }
        Ok(())
    }

    fn check_global(&self, idx: u32) -> Result<Global, ValidateErrorKind> {
        self.module
            .globals
            .get(idx as usize)
            .copied()
            .ok_or(ValidateErrorKind::GlobalIndex(idx))
    }

    fn check_mem(&self, align: u32, width: u32) -> Step {
        if self.module.memory.is_none() {
            return Err(ValidateErrorKind::NoMemory);
        }
        if align >= 32 || (1u32 << align) > width {
            return Err(ValidateErrorKind::Alignment);
        }
        Ok(())
    }

    /// Shared by `br` and `br_if`: operand check plus target/keep/drop.
    fn branch(&mut self, depth: u32, at: usize) -> Result<Op, ValidateErrorKind> {
        let li = self.label(depth)?;
        let arity = self.ctrl[li].label_arity;
        self.pop(arity)?;
        let drop = (self.height - self.ctrl[li].height) as u32;
        self.push(arity);
        let keep = arity as u32;
        Ok(match self.ctrl[li].kind {
            CtrlKind::Func => Op::Return,
            CtrlKind::Loop => Op::Br {
                target: self.ctrl[li].loop_start,
                keep,
                drop,
            },
            _ => {
                self.ctrl[li].pending.push(at);
                Op::Br {
                    target: u32::MAX,
                    keep,
                    drop,
                }
            }
        })
    }

    fn instr(&mut self, i: usize, instr: &Instr) -> Step {
        let op = match *instr {
            Instr::Unreachable => {
                self.set_unreachable();
                Op::Unreachable
            }
            Instr::Nop => Op::Nop,
            Instr::Block(bt) | Instr::Loop(bt) => {
                let is_loop = matches!(instr, Instr::Loop(_));
                self.ctrl.push(Ctrl {
                    kind: if is_loop { CtrlKind::Loop } else { CtrlKind::Block },
                    height: self.height,
                    label_arity: if is_loop { 0 } else { bt.arity() },
                    end_arity: bt.arity(),
                    unreachable: false,
                    loop_start: i as u32 + 1,
                    if_op: None,
                    pending: Vec::new(),
                });
                Op::Nop
            }
            Instr::If(bt) => {
                self.pop(1)?;
                self.ctrl.push(Ctrl {
                    kind: CtrlKind::If,
                    height: self.height,
                    label_arity: bt.arity(),
                    end_arity: bt.arity(),
                    unreachable: false,
                    loop_start: 0,
                    if_op: Some(i),
                    pending: Vec::new(),
                });
                Op::IfFalse(u32::MAX)
            }
            Instr::Else => {
                if self.top().kind != CtrlKind::If {
                    return Err(ValidateErrorKind::StrayElse);
                }
                self.close_block_values()?;
                let ctrl = self.top();
                let if_op = ctrl.if_op.take().expect("if records its op");
                ctrl.kind = CtrlKind::Else;
                ctrl.unreachable = false;
                ctrl.pending.push(i);
                let h = ctrl.height;
                self.height = h;
                self.ops[if_op] = Op::IfFalse(i as u32 + 1);
                Op::Jump(u32::MAX)
            }
            Instr::End => {
                self.close_block_values()?;
                let ctrl = self.ctrl.pop().expect("control stack non-empty");
                if ctrl.kind == CtrlKind::If && ctrl.end_arity != 0 {
                    return Err(ValidateErrorKind::IfWithoutElse);
                }
                let after = i as u32 + 1;
                if let Some(if_op) = ctrl.if_op {
                    self.ops[if_op] = Op::IfFalse(after);
                }
                for at in ctrl.pending {
                    self.ops[at] = match self.ops[at] {
                        Op::Br { keep, drop, .. } => Op::Br {
                            target: after,
                            keep,
                            drop,
                        },
                        Op::BrIf { keep, drop, .. } => Op::BrIf {
                            target: after,
                            keep,
                            drop,
                        },
                        Op::Jump(_) => Op::Jump(after),
                        other => other,
                    };
                }
                self.height = ctrl.height + ctrl.end_arity;
                if ctrl.kind == CtrlKind::Func {
                    Op::Return
                } else {
                    Op::Nop
                }
            }
            Instr::Br(depth) => {
                let op = self.branch(depth, i)?;
                self.set_unreachable();
                op
            }
            Instr::BrIf(depth) => {
                self.pop(1)?;
                match self.branch(depth, i)? {
                    Op::Br { target, keep, drop } => Op::BrIf { target, keep, drop },
                    // `br_if` to the function label is a conditional return.
                    Op::Return => Op::ReturnIf,
                    other => other,
                }
            }
            Instr::Return => {
                self.pop(self.ty.results as usize)?;
                self.set_unreachable();
                Op::Return
            }
            Instr::Call(f) => {
                let ty = self
                    .module
                    .func_type(f)
                    .ok_or(ValidateErrorKind::FuncIndex(f))?;
                self.pop(ty.params as usize)?;
                self.push(ty.results as usize);
                Op::Call(f)
            }
            Instr::CallIndirect(t) => {
                if self.module.table.is_none() {
                    return Err(ValidateErrorKind::NoTable);
                }
                let ty = *self
                    .module
                    .types
                    .get(t as usize)
                    .ok_or(ValidateErrorKind::TypeIndex(t))?;
                self.pop(1)?;
                self.pop(ty.params as usize)?;
                self.push(ty.results as usize);
                Op::CallIndirect(t)
            }
            Instr::Drop => {
                self.pop(1)?;
                Op::Drop
            }
            Instr::Select => {
                self.pop(3)?;
                self.push(1);
                Op::Select
            }
            Instr::LocalGet(idx) => {
                self.check_local(idx)?;
                self.push(1);
                Op::LocalGet(idx)
            }
            Instr::LocalSet(idx) => {
                self.check_local(idx)?;
                self.pop(1)?;
                Op::LocalSet(idx)
            }
            Instr::LocalTee(idx) => {
                self.check_local(idx)?;
                self.pop(1)?;
                self.push(1);
                Op::LocalTee(idx)
            }
            Instr::GlobalGet(idx) => {
                self.check_global(idx)?;
                self.push(1);
                Op::GlobalGet(idx)
            }
            Instr::GlobalSet(idx) => {
                if !self.check_global(idx)?.mutable {
                    return Err(ValidateErrorKind::ImmutableGlobal(idx));
                }
                self.pop(1)?;
                Op::GlobalSet(idx)
            }
            Instr::Load(kind, arg) => {
                self.check_mem(arg.align, kind.width())?;
                self.pop(1)?;
                self.push(1);
                Op::Load(kind, arg.offset)
            }
            Instr::Store(kind, arg) => {
                self.check_mem(arg.align, kind.width())?;
                self.pop(2)?;
                Op::Store(kind, arg.offset)
            }
            Instr::I32Const(v) => {
                self.push(1);
                Op::Const(v)
            }
            Instr::Eqz => {
                self.pop(1)?;
                self.push(1);
                Op::Eqz
            }
            Instr::Un(op) => {
                self.pop(1)?;
                self.push(1);
                Op::Un(op)
            }
            Instr::Cmp(op) => {
                self.pop(2)?;
                self.push(1);
                Op::Cmp(op)
            }
            Instr::Bin(op) => {
                self.pop(2)?;
                self.push(1);
                Op::Bin(op)
            }
        };
        self.ops.push(op);
        Ok(())
    }

    /// The innermost construct must hold exactly its result values.
    fn close_block_values(&mut self) -> Step {
        let (arity, base) = {
            let ctrl = self.top();
            (ctrl.end_arity, ctrl.height)
        };
        self.pop(arity)?;
        if self.height != base {
            return Err(ValidateErrorKind::StackHeight {
                expected: arity,
                found: self.height - base + arity,
            });
        }
        Ok(())
    }
}
