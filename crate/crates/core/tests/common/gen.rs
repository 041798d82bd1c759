//! Seeded generators for round-trip tests.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};
use wasmio_core::manifest::{
    CopyDescriptor, DeviceRequirement, InterruptSubscription, PeripheralRequirements, RegisterRequirement,
    DEFAULT_MAX_COPIES, DUMMY_FLOOR, MAX_LABEL_LEN,
};
use wasmio_core::wasm::*;

const ASCII: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_.-";
const WIDE: [char; 6] = ['µ', 'é', 'ß', '時', '→', 'ü'];

/// A label of 1..=64 bytes. `text_safe` keeps it to the characters the
/// line-based formats accept.
pub fn label(rng: &mut impl Rng, text_safe: bool) -> String {
    let target = if rng.random_bool(0.05) {
        MAX_LABEL_LEN
    } else {
        rng.random_range(1..=16)
    };
    let mut s = String::new();
    while s.len() < target {
        if !text_safe && rng.random_bool(0.2) {
            let c = WIDE[rng.random_range(0..WIDE.len())];
            if s.len() + c.len_utf8() <= target {
                s.push(c);
                continue;
            }
        }
        s.push(ASCII[rng.random_range(0..ASCII.len())] as char);
    }
    s
}

fn unique_labels(rng: &mut impl Rng, n: usize, text_safe: bool) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    while out.len() < n {
        let l = label(rng, text_safe);
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

fn width(rng: &mut impl Rng) -> u8 {
    [1, 2, 4][rng.random_range(0..3)]
}

pub fn requirements(rng: &mut impl Rng, text_safe: bool) -> PeripheralRequirements {
    let nreg = rng.random_range(0..8);
    let mut dummies: Vec<u32> = Vec::new();
    let registers: Vec<RegisterRequirement> = unique_labels(rng, nreg, text_safe)
        .into_iter()
        .map(|label| {
            let w = width(rng);
            let dummy_addr = loop {
                let a = rng.random_range(DUMMY_FLOOR..=u32::MAX) & !(w as u32 - 1);
                if !dummies.contains(&a) {
                    dummies.push(a);
                    break a;
                }
            };
            RegisterRequirement {
                label,
                dummy_addr,
                width: w,
            }
        })
        .collect();
    let ndev = rng.random_range(0..5);
    let devices = unique_labels(rng, ndev, text_safe)
        .into_iter()
        .map(|label| DeviceRequirement { label })
        .collect();
    let nirq = rng.random_range(0..4);
    let interrupts = unique_labels(rng, nirq, text_safe)
        .into_iter()
        .map(|label| {
            let ncopies = if registers.is_empty() {
                0
            } else {
                rng.random_range(0..=DEFAULT_MAX_COPIES)
            };
            let copies = (0..ncopies)
                .map(|_| CopyDescriptor {
                    source: registers[rng.random_range(0..registers.len())].label.clone(),
                    dest: rng.next_u32(),
                    width: width(rng),
                })
                .collect();
            InterruptSubscription {
                label,
                priority: rng.random(),
                handler: rng.random_range(0..1000),
                copies,
            }
        })
        .collect();
    PeripheralRequirements {
        registers,
        devices,
        interrupts,
    }
}

fn block_type(rng: &mut impl Rng) -> BlockType {
    if rng.random_bool(0.5) {
        BlockType::Empty
    } else {
        BlockType::I32
    }
}

fn memarg(rng: &mut impl Rng) -> MemArg {
    MemArg {
        align: rng.random_range(0..3),
        offset: if rng.random_bool(0.3) { rng.next_u32() } else { rng.random_range(0..256) },
    }
}

fn simple_instr(rng: &mut impl Rng) -> Instr {
    use Instr::*;
    const CMPS: [CmpOp; 10] = [
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
    const BINS: [BinOp; 15] = [
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
    const LOADS: [LoadKind; 5] = [LoadKind::I32, LoadKind::I8S, LoadKind::I8U, LoadKind::I16S, LoadKind::I16U];
    const STORES: [StoreKind; 3] = [StoreKind::I32, StoreKind::I8, StoreKind::I16];
    let idx = |rng: &mut dyn RngCore| if rng.next_u32() % 4 == 0 { rng.next_u32() } else { rng.next_u32() % 8 };
    match rng.random_range(0..20) {
        0 => Unreachable,
        1 => Nop,
        2 => Br(idx(rng)),
        3 => BrIf(idx(rng)),
        4 => Return,
        5 => Call(idx(rng)),
        6 => CallIndirect(idx(rng)),
        7 => Drop,
        8 => Select,
        9 => LocalGet(idx(rng)),
        10 => LocalSet(idx(rng)),
        11 => LocalTee(idx(rng)),
        12 => GlobalGet(idx(rng)),
        13 => GlobalSet(idx(rng)),
        14 => Load(*LOADS.choose(rng).unwrap(), memarg(rng)),
        15 => Store(*STORES.choose(rng).unwrap(), memarg(rng)),
        16 => I32Const(rng.next_u32() as i32),
        17 => Eqz,
        18 => Cmp(*CMPS.choose(rng).unwrap()),
        _ => match rng.random_range(0..4) {
            0 => Un([UnOp::Clz, UnOp::Ctz, UnOp::Popcnt][rng.random_range(0..3)]),
            _ => Bin(*BINS.choose(rng).unwrap()),
        },
    }
}

fn instrs(rng: &mut impl Rng, depth: u32, out: &mut Vec<Instr>) {
    let n = rng.random_range(0..8);
    for _ in 0..n {
        if depth < 3 && rng.random_bool(0.15) {
            let bt = block_type(rng);
            match rng.random_range(0..3) {
                0 => out.push(Instr::Block(bt)),
                1 => out.push(Instr::Loop(bt)),
                _ => {
                    out.push(Instr::If(bt));
                    instrs(rng, depth + 1, out);
                    if rng.random_bool(0.5) {
                        out.push(Instr::Else);
                    }
                }
            }
            instrs(rng, depth + 1, out);
            out.push(Instr::End);
        } else {
            out.push(simple_instr(rng));
        }
    }
}

pub fn body(rng: &mut impl Rng) -> Vec<Instr> {
    let mut v = Vec::new();
    instrs(rng, 0, &mut v);
    v.push(Instr::End);
    v
}

fn limits(rng: &mut impl Rng) -> Limits {
    let min = rng.random_range(0..8);
    Limits {
        min,
        max: rng.random_bool(0.5).then(|| min + rng.random_range(0..8)),
    }
}

/// A structurally well-formed module; it need not validate.
pub fn module(rng: &mut impl Rng) -> WasmModule {
    let mut m = WasmModule::default();
    let ntypes = rng.random_range(1..5);
    m.types = (0..ntypes)
        .map(|_| FuncType::new(rng.random_range(0..5), rng.random_range(0..2)))
        .collect();
    for _ in 0..rng.random_range(0..4) {
        m.imports.push(ImportDecl {
            module: if rng.random_bool(0.5) { "env".into() } else { label(rng, false) },
            field: label(rng, false),
            type_index: rng.random_range(0..ntypes),
        });
    }
    for _ in 0..rng.random_range(0..5) {
        m.functions.push(Function {
            type_index: rng.random_range(0..ntypes),
            locals: if rng.random_bool(0.5) { 0 } else { rng.random_range(1..6) },
            body: body(rng),
        });
    }
    if rng.random_bool(0.5) {
        m.table = Some(limits(rng));
    }
    if rng.random_bool(0.7) {
        m.memory = Some(limits(rng));
    }
    for _ in 0..rng.random_range(0..4) {
        m.globals.push(Global {
            mutable: rng.random_bool(0.5),
            init: rng.next_u32() as i32,
        });
    }
    let nfuncs = m.func_count();
    for _ in 0..rng.random_range(0..4) {
        let kind = [ExportKind::Func, ExportKind::Table, ExportKind::Memory, ExportKind::Global][rng.random_range(0..4)];
        let index = match kind {
            ExportKind::Func if nfuncs > 0 => rng.random_range(0..nfuncs),
            ExportKind::Global if !m.globals.is_empty() => rng.random_range(0..m.globals.len() as u32),
            _ => 0,
        };
        m.exports.insert(label(rng, false), Export { kind, index });
    }
    if m.table.is_some() && nfuncs > 0 {
        for _ in 0..rng.random_range(0..3) {
            let funcs = (0..rng.random_range(0..5)).map(|_| rng.random_range(0..nfuncs)).collect();
            m.elements.push(ElementSegment {
                offset: rng.random_range(0..16),
                funcs,
            });
        }
    }
    if m.memory.is_some() {
        for _ in 0..rng.random_range(0..3) {
            let bytes = (0..rng.random_range(0..32)).map(|_| rng.random()).collect();
            m.data.push(DataSegment {
                offset: rng.random_range(0..4096),
                bytes,
            });
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let payload = (0..rng.random_range(0..40)).map(|_| rng.random()).collect();
        m.custom_sections.insert(label(rng, false), payload);
    }
    m
}
