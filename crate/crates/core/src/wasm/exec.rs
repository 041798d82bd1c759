//! Instance creation and the resumable interpreter.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::memory::{LinearMemory, MemoryConfig};
use super::module::*;
use super::validate::{Op, ValidModule};
use crate::access::ledger::{Category, StepLedger};

/// Operand stack capacity, in values.
const MAX_OPERANDS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HostFuncId(pub u32);

/// Host functions visible to modules, keyed by `(module, field)`.
#[derive(Debug, Clone, Default)]
pub struct HostLinker {
    entries: HashMap<(String, String), (HostFuncId, FuncType)>,
}

impl HostLinker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn define(&mut self, module: &str, field: &str, id: HostFuncId, ty: FuncType) {
        self.entries
            .insert((module.to_owned(), field.to_owned()), (id, ty));
    }

    pub fn resolve(&self, module: &str, field: &str) -> Option<(HostFuncId, FuncType)> {
        self.entries
            .get(&(module.to_owned(), field.to_owned()))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("unresolved import {0}")]
    UnresolvedImport(String),
    #[error("import {0} has a mismatched signature")]
    SignatureMismatch(String),
    #[error("memory of {0} pages does not fit the address space")]
    MemoryTooLarge(u32),
    #[error("data segment at {0:#x} exceeds linear memory")]
    DataOutOfBounds(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapKind {
    OutOfBounds,
    UnreachableInstr,
    StackOverflow,
    DivByZero,
    IntegerOverflow,
    BadIndirectCall,
    HostReject,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct Trap {
    pub kind: TrapKind,
    pub detail: String,
    pub at_function: u32,
    pub at_offset: u32,
}

impl fmt::Display for Trap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trap {:?} in function {} at offset {}",
            self.kind, self.at_function, self.at_offset
        )?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvokeError {
    #[error(transparent)]
    Trap(#[from] Trap),
    #[error("no exported function named {0:?}")]
    NoSuchExport(String),
    #[error("function index {0} is not a defined function")]
    NoSuchFunction(u32),
    #[error("expected {expected} arguments, got {got}")]
    ArityMismatch { expected: u32, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// A load or store that failed the linear-memory bounds check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemAccess {
    pub addr: u32,
    pub width: u32,
    pub kind: AccessKind,
    /// Value to store, truncated to `width`; 0 for reads.
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hook {
    Handled(u32),
    Unhandled,
}

/// Embedder callbacks: imported functions and out-of-bounds re-authorization.
pub trait Host {
    fn call(
        &mut self,
        inst: &mut ModuleInstance,
        func: HostFuncId,
        args: &[i32],
    ) -> Result<Option<i32>, String>;

    /// Called only when the default bounds check fails.
    fn mem_access_hook(&mut self, inst: &mut ModuleInstance, access: MemAccess) -> Hook;
}

/// A host with no imports that rejects every out-of-bounds access.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoHost;

impl Host for NoHost {
    fn call(&mut self, _: &mut ModuleInstance, f: HostFuncId, _: &[i32]) -> Result<Option<i32>, String> {
        Err(format!("no host function {}", f.0))
    }

    fn mem_access_hook(&mut self, _: &mut ModuleInstance, _: MemAccess) -> Hook {
        Hook::Unhandled
    }
}

/// Globals, memory and table shared by all invocations of one module.
#[derive(Debug, Clone)]
pub struct ModuleInstance {
    module: Arc<ValidModule>,
    pub memory: LinearMemory,
    pub globals: Vec<i32>,
    pub table: Vec<Option<u32>>,
    imports: Vec<HostFuncId>,
    pub service_id: u32,
    max_call_depth: usize,
}

impl ModuleInstance {
    pub fn module(&self) -> &Arc<ValidModule> {
        &self.module
    }

    pub fn import_id(&self, import_index: u32) -> HostFuncId {
        self.imports[import_index as usize]
    }

    /// Function index stored at table slot `slot`.
    pub fn table_func(&self, slot: u32) -> Option<u32> {
        self.table.get(slot as usize).copied().flatten()
    }
}

pub fn instantiate(
    module: Arc<ValidModule>,
    linker: &HostLinker,
    cfg: MemoryConfig,
) -> Result<ModuleInstance, LinkError> {
    let m = module.module();
    let mut imports = Vec::with_capacity(m.imports.len());
    for imp in &m.imports {
        let name = format!("{}.{}", imp.module, imp.field);
        let (id, ty) = linker
            .resolve(&imp.module, &imp.field)
            .ok_or_else(|| LinkError::UnresolvedImport(name.clone()))?;
        if m.types[imp.type_index as usize] != ty {
            return Err(LinkError::SignatureMismatch(name));
        }
        imports.push(id);
    }

    let pages = m.memory.map_or(0, |l| l.min);
    let mut memory = LinearMemory::new(pages, cfg.page_size, cfg.conveyor_size)
        .ok_or(LinkError::MemoryTooLarge(pages))?;
    for seg in &m.data {
        let dst = memory
            .data_slice_mut(seg.offset, seg.bytes.len() as u32)
            .ok_or(LinkError::DataOutOfBounds(seg.offset))?;
        dst.copy_from_slice(&seg.bytes);
    }

    let mut table = vec![None; m.table.map_or(0, |t| t.min) as usize];
    for seg in &m.elements {
        for (i, f) in seg.funcs.iter().enumerate() {
            table[seg.offset as usize + i] = Some(*f);
        }
    }

    Ok(ModuleInstance {
        globals: m.globals.iter().map(|g| g.init).collect(),
        module,
        memory,
        table,
        imports,
        service_id: 0,
        max_call_depth: cfg.max_call_depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuncRef<'a> {
    Export(&'a str),
    Index(u32),
}

impl<'a> From<&'a str> for FuncRef<'a> {
    fn from(name: &'a str) -> Self {
        FuncRef::Export(name)
    }
}

impl From<u32> for FuncRef<'_> {
    fn from(index: u32) -> Self {
        FuncRef::Index(index)
    }
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    func: u32,
    pc: u32,
    locals_base: u32,
    stack_base: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Running,
    Finished(Vec<i32>),
}

/// Per-invocation stack machine state. Call frames and operand values live
/// in separate vectors; branch targets come from the compiled code, never
/// from operand values.
#[derive(Debug, Clone)]
pub struct Execution {
    module: Arc<ValidModule>,
    frames: Vec<Frame>,
    stack: Vec<i32>,
    locals: Vec<i32>,
    max_depth: usize,
}

impl Execution {
    pub fn new(inst: &ModuleInstance, func: FuncRef<'_>, args: &[i32]) -> Result<Self, InvokeError> {
        let module = inst.module.clone();
        let index = match func {
            FuncRef::Export(name) => module
                .module()
                .exported_func(name)
                .ok_or_else(|| InvokeError::NoSuchExport(name.to_owned()))?,
            FuncRef::Index(i) => i,
        };
        let code = module
            .compiled(index)
            .ok_or(InvokeError::NoSuchFunction(index))?;
        if code.ty.params as usize != args.len() {
            return Err(InvokeError::ArityMismatch {
                expected: code.ty.params,
                got: args.len(),
            });
        }
        let mut locals = Vec::with_capacity(16);
        locals.extend_from_slice(args);
        locals.resize(args.len() + code.locals as usize, 0);
        Ok(Self {
            frames: vec![Frame {
                func: index,
                pc: 0,
                locals_base: 0,
                stack_base: 0,
            }],
            module,
            stack: Vec::with_capacity(32),
            locals,
            max_depth: inst.max_call_depth,
        })
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Function index of the entry frame.
    pub fn entry_func(&self) -> Option<u32> {
        self.frames.first().map(|f| f.func)
    }

    /// Retires exactly one instruction.
    pub fn step<H: Host + ?Sized>(
        &mut self,
        inst: &mut ModuleInstance,
        host: &mut H,
    ) -> Result<Status, Trap> {
        let Execution {
            module,
            frames,
            stack,
            locals,
            max_depth,
        } = self;
        let frame = frames.last_mut().expect("finished execution stepped");
        let code = &module.funcs[(frame.func - module.num_imports()) as usize];
        let pc = frame.pc as usize;
        let op = code.ops[pc];
        frame.pc += 1;

        let (at_function, at_offset) = (frame.func, code.offsets[pc]);
        let trap = |kind: TrapKind, detail: String| Trap {
            kind,
            detail,
            at_function,
            at_offset,
        };

        macro_rules! pop {
            () => {
                stack.pop().expect("validated code underflowed")
            };
        }

        match op {
            Op::Nop => {}
            Op::Unreachable => {
                return Err(trap(TrapKind::UnreachableInstr, String::new()));
            }
            Op::Jump(target) => frame.pc = target,
            Op::IfFalse(target) => {
                if pop!() == 0 {
                    frame.pc = target;
                }
            }
            Op::Br { target, keep, drop } => {
                shift_down(stack, keep, drop);
                frame.pc = target;
            }
            Op::BrIf { target, keep, drop } => {
                if pop!() != 0 {
                    shift_down(stack, keep, drop);
                    frame.pc = target;
                }
            }
            Op::Return => return Ok(do_return(frames, stack, locals, code.ty.results)),
            Op::ReturnIf => {
                if pop!() != 0 {
                    return Ok(do_return(frames, stack, locals, code.ty.results));
                }
            }
            Op::Call(callee) => {
                return call(module, inst, host, frames, stack, locals, *max_depth, callee)
                    .map_err(|(kind, detail)| trap(kind, detail));
            }
            Op::CallIndirect(type_index) => {
                let slot = pop!() as u32;
                let callee = inst.table_func(slot).ok_or_else(|| {
                    trap(TrapKind::BadIndirectCall, format!("empty table slot {slot}"))
                })?;
                let expected = module.module().types[type_index as usize];
                if module.module().func_type(callee) != Some(expected) {
                    return Err(trap(
                        TrapKind::BadIndirectCall,
                        format!("signature mismatch for function {callee}"),
                    ));
                }
                return call(module, inst, host, frames, stack, locals, *max_depth, callee)
                    .map_err(|(kind, detail)| trap(kind, detail));
            }
            Op::Drop => {
                pop!();
            }
            Op::Select => {
                let c = pop!();
                let b = pop!();
                let a = pop!();
                stack.push(if c != 0 { a } else { b });
            }
            Op::LocalGet(i) => stack.push(locals[frame.locals_base as usize + i as usize]),
            Op::LocalSet(i) => {
                let v = pop!();
                locals[frame.locals_base as usize + i as usize] = v;
            }
            Op::LocalTee(i) => {
                let v = *stack.last().expect("validated code underflowed");
                locals[frame.locals_base as usize + i as usize] = v;
            }
            Op::GlobalGet(i) => stack.push(inst.globals[i as usize]),
            Op::GlobalSet(i) => inst.globals[i as usize] = pop!(),
            Op::Load(kind, offset) => {
                let addr = (pop!() as u32).wrapping_add(offset);
                let width = kind.width();
                let raw = match inst.memory.read(addr, width) {
                    Some(v) => v,
                    None => {
                        let access = MemAccess {
                            addr,
                            width,
                            kind: AccessKind::Read,
                            value: 0,
                        };
                        match host.mem_access_hook(inst, access) {
                            Hook::Handled(v) => v,
                            Hook::Unhandled => {
                                return Err(trap(
                                    TrapKind::OutOfBounds,
                                    format!("load of {width} bytes at {addr:#x}"),
                                ))
                            }
                        }
                    }
                };
                stack.push(extend(kind, raw));
            }
            Op::Store(kind, offset) => {
                let value = pop!() as u32;
                let addr = (pop!() as u32).wrapping_add(offset);
                let width = kind.width();
                let value = match width {
                    1 => value & 0xff,
                    2 => value & 0xffff,
                    _ => value,
                };
                if !inst.memory.write(addr, width, value) {
                    let access = MemAccess {
                        addr,
                        width,
                        kind: AccessKind::Write,
                        value,
                    };
                    if host.mem_access_hook(inst, access) == Hook::Unhandled {
                        return Err(trap(
                            TrapKind::OutOfBounds,
                            format!("store of {width} bytes at {addr:#x}"),
                        ));
                    }
                }
            }
            Op::Const(v) => stack.push(v),
            Op::Eqz => {
                let a = pop!();
                stack.push((a == 0) as i32);
            }
            Op::Un(op) => {
                let a = pop!() as u32;
                stack.push(match op {
                    UnOp::Clz => a.leading_zeros(),
                    UnOp::Ctz => a.trailing_zeros(),
                    UnOp::Popcnt => a.count_ones(),
                } as i32);
            }
            Op::Cmp(op) => {
                let b = pop!();
                let a = pop!();
                let (ua, ub) = (a as u32, b as u32);
                let r = match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    CmpOp::LtS => a < b,
                    CmpOp::LtU => ua < ub,
                    CmpOp::GtS => a > b,
                    CmpOp::GtU => ua > ub,
                    CmpOp::LeS => a <= b,
                    CmpOp::LeU => ua <= ub,
                    CmpOp::GeS => a >= b,
                    CmpOp::GeU => ua >= ub,
                };
                stack.push(r as i32);
            }
            Op::Bin(op) => {
                let b = pop!();
                let a = pop!();
                let r = binary(op, a, b).map_err(|kind| trap(kind, String::new()))?;
                stack.push(r);
            }
        }
        if stack.len() > MAX_OPERANDS {
            return Err(Trap {
                kind: TrapKind::StackOverflow,
                detail: "operand stack exhausted".into(),
                at_function: frames.last().map_or(0, |f| f.func),
                at_offset: 0,
            });
        }
        Ok(Status::Running)
    }
}

fn extend(kind: LoadKind, raw: u32) -> i32 {
    match kind {
        LoadKind::I32 => raw as i32,
        LoadKind::I8S => raw as u8 as i8 as i32,
        LoadKind::I8U => (raw & 0xff) as i32,
        LoadKind::I16S => raw as u16 as i16 as i32,
        LoadKind::I16U => (raw & 0xffff) as i32,
    }
}

fn binary(op: BinOp, a: i32, b: i32) -> Result<i32, TrapKind> {
    let (ua, ub) = (a as u32, b as u32);
    Ok(match op {
        BinOp::Add => a.wrapping_add(b),
        BinOp::Sub => a.wrapping_sub(b),
        BinOp::Mul => a.wrapping_mul(b),
        BinOp::DivS => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            if a == i32::MIN && b == -1 {
                return Err(TrapKind::IntegerOverflow);
            }
            a / b
        }
        BinOp::DivU => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            (ua / ub) as i32
        }
        BinOp::RemS => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            a.wrapping_rem(b)
        }
        BinOp::RemU => {
            if b == 0 {
                return Err(TrapKind::DivByZero);
            }
            (ua % ub) as i32
        }
        BinOp::And => a & b,
        BinOp::Or => a | b,
        BinOp::Xor => a ^ b,
        BinOp::Shl => a.wrapping_shl(ub),
        BinOp::ShrS => a.wrapping_shr(ub),
        BinOp::ShrU => ua.wrapping_shr(ub) as i32,
        BinOp::Rotl => ua.rotate_left(ub & 31) as i32,
        BinOp::Rotr => ua.rotate_right(ub & 31) as i32,
    })
}

/// Moves the top `keep` values down over `drop` discarded ones.
#[inline]
fn shift_down(stack: &mut Vec<i32>, keep: u32, drop: u32) {
    if drop == 0 {
        return;
    }
    let len = stack.len();
    let (keep, drop) = (keep as usize, drop as usize);
    for i in 0..keep {
        stack[len - drop - keep + i] = stack[len - keep + i];
    }
    stack.truncate(len - drop);
}

fn do_return(frames: &mut Vec<Frame>, stack: &mut Vec<i32>, locals: &mut Vec<i32>, results: u32) -> Status {
    let frame = frames.pop().expect("return without frame");
    let results = results as usize;
    let from = stack.len() - results;
    let base = frame.stack_base as usize;
    if from != base {
        for i in 0..results {
            stack[base + i] = stack[from + i];
        }
        stack.truncate(base + results);
    }
    locals.truncate(frame.locals_base as usize);
    if frames.is_empty() {
        Status::Finished(std::mem::take(stack))
    } else {
        Status::Running
    }
}

#[allow(clippy::too_many_arguments)]
fn call<H: Host + ?Sized>(
    module: &Arc<ValidModule>,
    inst: &mut ModuleInstance,
    host: &mut H,
    frames: &mut Vec<Frame>,
    stack: &mut Vec<i32>,
    locals: &mut Vec<i32>,
    max_depth: usize,
    callee: u32,
) -> Result<Status, (TrapKind, String)> {
    let ty = module.module().func_type(callee).expect("validated callee");
    let argc = ty.params as usize;
    let args_at = stack.len() - argc;
    if callee < module.num_imports() {
        let id = inst.import_id(callee);
        let result = host
            .call(inst, id, &stack[args_at..])
            .map_err(|msg| (TrapKind::HostReject, msg))?;
        stack.truncate(args_at);
        match (result, ty.results) {
            (Some(v), 1) => stack.push(v),
            (None, 0) => {}
            _ => {
                return Err((
                    TrapKind::HostReject,
                    format!("host function {} returned the wrong arity", id.0),
                ))
            }
        }
        return Ok(Status::Running);
    }
    if frames.len() >= max_depth {
        return Err((TrapKind::StackOverflow, format!("call depth {max_depth} exceeded")));
    }
    let code = &module.funcs[(callee - module.num_imports()) as usize];
    let locals_base = locals.len() as u32;
    locals.extend_from_slice(&stack[args_at..]);
    locals.resize(locals.len() + code.locals as usize, 0);
    stack.truncate(args_at);
    frames.push(Frame {
        func: callee,
        pc: 0,
        locals_base,
        stack_base: args_at as u32,
    });
    Ok(Status::Running)
}

/// Runs `func` to completion on a fresh execution environment. Every retired
/// instruction is charged to [`Category::Interp`].
pub fn invoke<'a, H: Host + ?Sized>(
    inst: &mut ModuleInstance,
    func: impl Into<FuncRef<'a>>,
    args: &[i32],
    host: &mut H,
    ledger: &mut StepLedger,
) -> Result<Vec<i32>, InvokeError> {
    let mut exec = Execution::new(inst, func.into(), args)?;
    loop {
        let status = exec.step(inst, host);
        ledger.charge(Category::Interp, 1);
        if let Status::Finished(values) = status? {
            return Ok(values);
        }
    }
}
