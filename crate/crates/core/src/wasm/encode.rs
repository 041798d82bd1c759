use thiserror::Error;

use super::decode::section_id;
use super::leb::{write_i32, write_u32};
use super::module::*;

/// Anything the emitter accepts is a [`WasmModule`]; the alias names the role.
pub type ModuleSpec = WasmModule;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("type {0} has more than one result")]
    MultiValue(usize),
    #[error("function {0} body is not a balanced instruction sequence ending in `end`")]
    UnbalancedBody(usize),
}

/// Emits the binary form of a module. Custom sections go last, ordered by name.
pub fn emit_module(spec: &ModuleSpec) -> Result<Vec<u8>, SpecError> {
    let mut out = Vec::with_capacity(64);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION);

    if !spec.types.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.types.len() as u32);
        for (i, ty) in spec.types.iter().enumerate() {
            if ty.results > 1 {
                return Err(SpecError::MultiValue(i));
            }
            s.push(0x60);
            write_u32(&mut s, ty.params);
            s.extend(std::iter::repeat_n(I32, ty.params as usize));
            write_u32(&mut s, ty.results);
            s.extend(std::iter::repeat_n(I32, ty.results as usize));
        }
        push_section(&mut out, section_id::TYPE, &s);
    }

    if !spec.imports.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.imports.len() as u32);
        for imp in &spec.imports {
            write_name(&mut s, &imp.module);
            write_name(&mut s, &imp.field);
            s.push(0x00);
            write_u32(&mut s, imp.type_index);
        }
        push_section(&mut out, section_id::IMPORT, &s);
    }

    if !spec.functions.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.functions.len() as u32);
        for f in &spec.functions {
            write_u32(&mut s, f.type_index);
        }
        push_section(&mut out, section_id::FUNCTION, &s);
    }

    if let Some(limits) = spec.table {
        let mut s = vec![1, 0x70];
        write_limits(&mut s, limits);
        push_section(&mut out, section_id::TABLE, &s);
    }

    if let Some(limits) = spec.memory {
        let mut s = vec![1];
        write_limits(&mut s, limits);
        push_section(&mut out, section_id::MEMORY, &s);
    }

    if !spec.globals.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.globals.len() as u32);
        for g in &spec.globals {
            s.push(I32);
            s.push(g.mutable as u8);
            write_const_expr(&mut s, g.init);
        }
        push_section(&mut out, section_id::GLOBAL, &s);
    }

    if !spec.exports.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.exports.len() as u32);
        for (name, export) in &spec.exports {
            write_name(&mut s, name);
            s.push(export.kind.byte());
            write_u32(&mut s, export.index);
        }
        push_section(&mut out, section_id::EXPORT, &s);
    }

    if !spec.elements.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.elements.len() as u32);
        for seg in &spec.elements {
            write_u32(&mut s, 0);
            write_const_expr(&mut s, seg.offset as i32);
            write_u32(&mut s, seg.funcs.len() as u32);
            for f in &seg.funcs {
                write_u32(&mut s, *f);
            }
        }
        push_section(&mut out, section_id::ELEMENT, &s);
    }

    if !spec.functions.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.functions.len() as u32);
        for (i, f) in spec.functions.iter().enumerate() {
            if !is_balanced(&f.body) {
                return Err(SpecError::UnbalancedBody(i));
            }
            let mut body = Vec::new();
            if f.locals == 0 {
                write_u32(&mut body, 0);
            } else {
                write_u32(&mut body, 1);
                write_u32(&mut body, f.locals);
                body.push(I32);
            }
            for instr in &f.body {
                encode_instr(&mut body, instr);
            }
            write_u32(&mut s, body.len() as u32);
            s.extend_from_slice(&body);
        }
        push_section(&mut out, section_id::CODE, &s);
    }

    if !spec.data.is_empty() {
        let mut s = Vec::new();
        write_u32(&mut s, spec.data.len() as u32);
        for seg in &spec.data {
            write_u32(&mut s, 0);
            write_const_expr(&mut s, seg.offset as i32);
            write_u32(&mut s, seg.bytes.len() as u32);
            s.extend_from_slice(&seg.bytes);
        }
        push_section(&mut out, section_id::DATA, &s);
    }

    for (name, payload) in &spec.custom_sections {
        let mut s = Vec::new();
        write_name(&mut s, name);
        s.extend_from_slice(payload);
        push_section(&mut out, section_id::CUSTOM, &s);
    }

    Ok(out)
}

/// Exactly one trailing `end` closes depth zero.
fn is_balanced(body: &[Instr]) -> bool {
    let mut depth = 0usize;
    for (i, instr) in body.iter().enumerate() {
        match instr {
            Instr::Block(_) | Instr::Loop(_) | Instr::If(_) => depth += 1,
            Instr::End if depth == 0 => return i + 1 == body.len(),
            Instr::End => depth -= 1,
            _ => {}
        }
    }
    false
}

fn push_section(out: &mut Vec<u8>, id: u8, payload: &[u8]) {
    out.push(id);
    write_u32(out, payload.len() as u32);
    out.extend_from_slice(payload);
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    write_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
}

fn write_limits(out: &mut Vec<u8>, limits: Limits) {
    match limits.max {
        None => {
            out.push(0);
            write_u32(out, limits.min);
        }
        Some(max) => {
            out.push(1);
            write_u32(out, limits.min);
            write_u32(out, max);
        }
    }
}

fn write_const_expr(out: &mut Vec<u8>, value: i32) {
    out.push(opcode::I32_CONST);
    write_i32(out, value);
    out.push(opcode::END);
}

fn write_block_type(out: &mut Vec<u8>, bt: BlockType) {
    out.push(match bt {
        BlockType::Empty => 0x40,
        BlockType::I32 => I32,
    });
}

fn write_mem_arg(out: &mut Vec<u8>, arg: MemArg) {
    write_u32(out, arg.align);
    write_u32(out, arg.offset);
}

pub(crate) fn encode_instr(out: &mut Vec<u8>, instr: &Instr) {
    use opcode::*;
    match *instr {
        Instr::Unreachable => out.push(UNREACHABLE),
        Instr::Nop => out.push(NOP),
        Instr::Block(bt) => {
            out.push(BLOCK);
            write_block_type(out, bt);
        }
        Instr::Loop(bt) => {
            out.push(LOOP);
            write_block_type(out, bt);
        }
        Instr::If(bt) => {
            out.push(IF);
            write_block_type(out, bt);
        }
        Instr::Else => out.push(ELSE),
        Instr::End => out.push(END),
        Instr::Br(d) => {
            out.push(BR);
            write_u32(out, d);
        }
        Instr::BrIf(d) => {
            out.push(BR_IF);
            write_u32(out, d);
        }
        Instr::Return => out.push(RETURN),
        Instr::Call(f) => {
            out.push(CALL);
            write_u32(out, f);
        }
        Instr::CallIndirect(t) => {
            out.push(CALL_INDIRECT);
            write_u32(out, t);
            out.push(0);
        }
        Instr::Drop => out.push(DROP),
        Instr::Select => out.push(SELECT),
        Instr::LocalGet(i) => {
            out.push(LOCAL_GET);
            write_u32(out, i);
        }
        Instr::LocalSet(i) => {
            out.push(LOCAL_SET);
            write_u32(out, i);
        }
        Instr::LocalTee(i) => {
            out.push(LOCAL_TEE);
            write_u32(out, i);
        }
        Instr::GlobalGet(i) => {
            out.push(GLOBAL_GET);
            write_u32(out, i);
        }
        Instr::GlobalSet(i) => {
            out.push(GLOBAL_SET);
            write_u32(out, i);
        }
        Instr::Load(kind, arg) => {
            out.push(match kind {
                LoadKind::I32 => I32_LOAD,
                LoadKind::I8S => I32_LOAD8_S,
                LoadKind::I8U => I32_LOAD8_U,
                LoadKind::I16S => I32_LOAD16_S,
                LoadKind::I16U => I32_LOAD16_U,
            });
            write_mem_arg(out, arg);
        }
        Instr::Store(kind, arg) => {
            out.push(match kind {
                StoreKind::I32 => I32_STORE,
                StoreKind::I8 => I32_STORE8,
                StoreKind::I16 => I32_STORE16,
            });
            write_mem_arg(out, arg);
        }
        Instr::I32Const(v) => {
            out.push(I32_CONST);
            write_i32(out, v);
        }
        Instr::Eqz => out.push(I32_EQZ),
        Instr::Cmp(op) => {
            out.push(CMP_FIRST + CMP_OPS.iter().position(|o| *o == op).unwrap() as u8)
        }
        Instr::Un(op) => out.push(UN_FIRST + UN_OPS.iter().position(|o| *o == op).unwrap() as u8),
        Instr::Bin(op) => {
            out.push(BIN_FIRST + BIN_OPS.iter().position(|o| *o == op).unwrap() as u8)
        }
    }
}
