//! Shared fixtures: a test board, a service generator and an independent
//! checker for the level-machine trace properties.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use wasmio_core::access::{imports, AccessMode, TrustMode};
use wasmio_core::interrupts::{FlowKind, Level, TraceEntry, TraceEvent};
use wasmio_core::manifest::{
    encode_requirements, CopyDescriptor, InterruptSubscription, PeripheralRequirements, RegisterRequirement,
    SECTION_NAME,
};
use wasmio_core::platform::{parse_platform, PlatformDescription};
use wasmio_core::wasm::{emit_module, BinOp, BlockType, CmpOp, Instr, LoadKind, MemArg, ModuleBuilder, StoreKind};

pub const SENSOR_BASE: u32 = 0x5000_0000;
pub const SENSOR_MASK: u32 = 0xffff;
pub const DUMMY_BASE: u32 = 0x8000_0000;
/// Handler log: count at `LOG_COUNT`, values from `LOG_BASE`.
pub const LOG_COUNT: u32 = 0x800;
pub const LOG_BASE: u32 = 0x804;
/// Non-MMIO snapshot destinations start here, 4 bytes apart.
pub const COPY_DEST: u32 = 0x400;
/// Scratch word the mainline loop writes.
pub const SCRATCH: u32 = 0x600;

/// `sensors` registers `s0..`, `irqs` lines `irq0..`, and `services`
/// service ids `svc0..`, each owning `sensors_per_service` consecutive
/// sensors and subscribed to every line.
pub fn test_board(services: usize, sensors_per_service: usize, irqs: usize) -> PlatformDescription {
    let mut src = String::new();
    for i in 0..irqs {
        src.push_str(&format!("interrupt irq{i} line={}\n", 10 + i));
    }
    for i in 0..services * sensors_per_service {
        src.push_str(&format!(
            "register s{i} addr={:#x} width=4 mask={SENSOR_MASK:#x} freq={}\n",
            SENSOR_BASE + 4 * i as u32,
            100 - i
        ));
    }
    for s in 0..services {
        src.push_str(&format!("assign svc{s}"));
        for k in 0..sensors_per_service {
            src.push_str(&format!(" s{}", s * sensors_per_service + k));
        }
        for i in 0..irqs {
            src.push_str(&format!(" irq{i}"));
        }
        src.push('\n');
    }
    parse_platform(&src).expect("test board parses")
}

#[derive(Debug, Clone)]
pub struct SubSpec {
    pub label: String,
    pub priority: u8,
    /// Source register labels.
    pub copies: Vec<String>,
    /// Busy-loop iterations after logging.
    pub work: u32,
    pub trap: bool,
}

#[derive(Debug, Clone)]
pub struct SvcSpec {
    pub mode: AccessMode,
    pub trust: TrustMode,
    /// Registers required, in manifest order.
    pub registers: Vec<String>,
    pub subs: Vec<SubSpec>,
    /// Mainline loop iterations; `None` for no mainline export.
    pub main_work: Option<u32>,
}

impl SvcSpec {
    pub fn dummy(&self, label: &str) -> u32 {
        let i = self.registers.iter().position(|r| r == label).expect("copy source is required");
        DUMMY_BASE + 0x10 * i as u32
    }

    /// Destination of copy `k` of subscription `s`.
    pub fn dest(&self, s: usize, k: usize) -> u32 {
        if self.mode.is_mmio() {
            self.dummy(&self.subs[s].copies[k])
        } else {
            COPY_DEST + 4 * (s * 8 + k) as u32
        }
    }
}

fn busy_loop(local: u32, n: u32) -> Vec<Instr> {
    use Instr::*;
    if n == 0 {
        return vec![];
    }
    vec![
        I32Const(n as i32),
        LocalSet(local),
        Loop(BlockType::Empty),
        I32Const(SCRATCH as i32),
        LocalGet(local),
        Store(StoreKind::I32, MemArg::offset(0)),
        LocalGet(local),
        I32Const(1),
        Bin(BinOp::Sub),
        LocalTee(local),
        I32Const(0),
        Cmp(CmpOp::GtS),
        BrIf(0),
        End,
    ]
}

/// Handlers append every observed copy value to the log, then spin.
pub fn build_service(spec: &SvcSpec) -> Vec<u8> {
    use Instr::*;
    let mut b = ModuleBuilder::new();
    for (field, _, params, results) in imports::TABLE {
        b.import(imports::MODULE, field, params, results);
    }
    b.memory(1);
    let mut req = PeripheralRequirements::default();
    for (i, r) in spec.registers.iter().enumerate() {
        req.registers.push(RegisterRequirement {
            label: r.clone(),
            dummy_addr: DUMMY_BASE + 0x10 * i as u32,
            width: 4,
        });
    }
    let mut handlers = Vec::new();
    for (s, sub) in spec.subs.iter().enumerate() {
        req.interrupts.push(InterruptSubscription {
            label: sub.label.clone(),
            priority: sub.priority,
            handler: s as u32,
            copies: (0..sub.copies.len())
                .map(|k| CopyDescriptor {
                    source: sub.copies[k].clone(),
                    dest: spec.dest(s, k),
                    width: 4,
                })
                .collect(),
        });
        let mut body = Vec::new();
        for k in 0..sub.copies.len() {
            // log[count] = observed; count += 1
            body.extend([
                I32Const(LOG_COUNT as i32),
                Load(LoadKind::I32, MemArg::offset(0)),
                I32Const(2),
                Bin(BinOp::Shl),
                I32Const(spec.dest(s, k) as i32),
                Load(LoadKind::I32, MemArg::offset(0)),
                Store(StoreKind::I32, MemArg::offset(LOG_BASE)),
                I32Const(LOG_COUNT as i32),
                I32Const(LOG_COUNT as i32),
                Load(LoadKind::I32, MemArg::offset(0)),
                I32Const(1),
                Bin(BinOp::Add),
                Store(StoreKind::I32, MemArg::offset(0)),
            ]);
        }
        body.extend(busy_loop(0, sub.work));
        if sub.trap {
            body.push(Unreachable);
        }
        body.push(End);
        handlers.push(b.internal_func(0, 0, 1, body));
    }
    if !handlers.is_empty() {
        b.table(handlers.len() as u32);
        b.elements(0, handlers);
    }
    if let Some(n) = spec.main_work {
        let mut body = busy_loop(0, n);
        body.push(End);
        b.func("main", 0, 0, 1, body);
    }
    b.custom(SECTION_NAME, encode_requirements(&req).expect("valid requirements"));
    emit_module(&b.build()).expect("well-formed module")
}

/// What the checker needs to know about one subscription.
#[derive(Debug, Clone)]
pub struct SubInfo {
    pub service: String,
    pub label: String,
    pub priority: u8,
    /// `(dest, physical source address)` per copy.
    pub copies: Vec<(u32, u32)>,
}

#[derive(Debug, Clone)]
struct OpenFlow {
    level: Level,
    kind: FlowKind,
    service: Option<String>,
    suspended: bool,
}

/// Checks trace properties 1-8. `subs` lists subscriptions in registration
/// order. Returns one message per violation.
pub fn check_trace(trace: &[TraceEntry], subs: &[SubInfo], mask: u32) -> Vec<String> {
    let mut v = Vec::new();
    let mut open: BTreeMap<u64, OpenFlow> = BTreeMap::new();
    let mut regs: HashMap<u32, u32> = HashMap::new();
    // Register values read by each pending interrupt's prologue.
    let mut prologue_regs: HashMap<u64, HashMap<u32, u32>> = HashMap::new();
    let mut raised: Vec<u64> = Vec::new();
    let mut pending_label: HashMap<u64, String> = HashMap::new();
    let mut quarter_order: HashMap<u64, Vec<(String, u8, usize)>> = HashMap::new();
    let reg_order: HashMap<(&str, &str), usize> = subs
        .iter()
        .enumerate()
        .map(|(i, s)| ((s.service.as_str(), s.label.as_str()), i))
        .collect();

    for (i, e) in trace.iter().enumerate() {
        let here = format!("entry {i} (step {}, {:?} {:?})", e.step, e.level, e.event);
        match e.event {
            TraceEvent::Raise => {
                let p = e.pending.expect("raise carries an id");
                raised.push(p);
                pending_label.insert(p, e.label.clone().unwrap_or_default());
                // Property 1: the prologue follows before any lower-level progress.
                let mut j = i + 1;
                loop {
                    match trace.get(j) {
                        None => {
                            v.push(format!("{here}: raise never served"));
                            break;
                        }
                        Some(n) if n.level == Some(Level::E1) => break,
                        Some(n) if matches!(n.event, TraceEvent::Raise | TraceEvent::SetRegister | TraceEvent::Suspend) => {
                            if n.step != e.step {
                                v.push(format!("{here}: prologue delayed to step {}", n.step));
                                break;
                            }
                            j += 1;
                        }
                        Some(n) => {
                            v.push(format!("{here}: {:?} {:?} ran before the prologue", n.level, n.event));
                            break;
                        }
                    }
                }
            }
            TraceEvent::SetRegister => {
                for (a, val) in &e.values {
                    regs.insert(*a, *val);
                }
            }
            TraceEvent::Begin | TraceEvent::Resume => {
                let (Some(level), Some(flow), Some(kind)) = (e.level, e.flow, e.kind) else {
                    v.push(format!("{here}: incomplete entry"));
                    continue;
                };
                // Properties 2 and 3: everything else open is lower and suspended.
                for (id, f) in &open {
                    if *id == flow {
                        continue;
                    }
                    if f.level >= level {
                        v.push(format!("{here}: flow {id} at {} still open", f.level));
                    } else if !f.suspended {
                        v.push(format!("{here}: lower flow {id} not suspended"));
                    }
                    // Property 7.
                    if kind == FlowKind::WasmEpilogue
                        && f.kind == FlowKind::Mainline
                        && f.service == e.service
                        && !f.suspended
                    {
                        v.push(format!("{here}: mainline and epilogue of one service overlap"));
                    }
                }
                if e.event == TraceEvent::Begin {
                    if open.contains_key(&flow) {
                        v.push(format!("{here}: flow {flow} begun twice"));
                    }
                    open.insert(
                        flow,
                        OpenFlow {
                            level,
                            kind,
                            service: e.service.clone(),
                            suspended: false,
                        },
                    );
                    if kind == FlowKind::Prologue {
                        let p = e.pending.unwrap_or(u64::MAX);
                        if raised.first() != Some(&p) {
                            v.push(format!("{here}: prologue out of arrival order"));
                        } else {
                            raised.remove(0);
                        }
                        prologue_regs.insert(p, regs.clone());
                    }
                    if kind == FlowKind::WasmEpilogue {
                        let svc = e.service.clone().unwrap_or_default();
                        let label = e.label.clone().unwrap_or_default();
                        let p = e.pending.unwrap_or(u64::MAX);
                        // Property 4: filtering.
                        match reg_order.get(&(svc.as_str(), label.as_str())) {
                            None => v.push(format!("{here}: {svc} runs for unsubscribed `{label}`")),
                            Some(&r) => {
                                if pending_label.get(&p) != Some(&label) {
                                    v.push(format!("{here}: label does not match the raise"));
                                }
                                quarter_order.entry(p).or_default().push((svc, subs[r].priority, r));
                            }
                        }
                    }
                } else {
                    match open.get_mut(&flow) {
                        Some(f) if f.suspended => f.suspended = false,
                        _ => v.push(format!("{here}: resume of a flow that is not suspended")),
                    }
                }
            }
            TraceEvent::Suspend => {
                let Some(flow) = e.flow else { continue };
                match open.get_mut(&flow) {
                    Some(f) if !f.suspended => f.suspended = true,
                    _ => v.push(format!("{here}: suspend of a flow that is not running")),
                }
                // The preempting level must be higher.
                if let Some(n) = trace[i + 1..].iter().find(|n| !matches!(n.event, TraceEvent::Suspend | TraceEvent::Raise | TraceEvent::SetRegister)) {
                    if n.level <= e.level {
                        v.push(format!("{here}: suspended for a level that is not higher"));
                    }
                }
            }
            TraceEvent::End | TraceEvent::Trap => {
                let Some(flow) = e.flow else { continue };
                match open.remove(&flow) {
                    Some(f) if !f.suspended => {}
                    Some(_) => v.push(format!("{here}: suspended flow finished")),
                    None => v.push(format!("{here}: flow {flow} was never begun")),
                }
            }
            TraceEvent::Snapshot => {
                // Property 6: values equal the registers at prologue time.
                let p = e.pending.unwrap_or(u64::MAX);
                let svc = e.service.clone().unwrap_or_default();
                let label = e.label.clone().unwrap_or_default();
                let Some(before) = prologue_regs.get(&p) else {
                    v.push(format!("{here}: snapshot without prologue"));
                    continue;
                };
                let Some(&r) = reg_order.get(&(svc.as_str(), label.as_str())) else {
                    continue;
                };
                let expected: Vec<(u32, u32)> = subs[r]
                    .copies
                    .iter()
                    .map(|(dest, src)| (*dest, before.get(src).copied().unwrap_or(0) & mask))
                    .collect();
                if e.values != expected {
                    v.push(format!("{here}: snapshot {:x?}, registers were {:x?}", e.values, expected));
                }
            }
            TraceEvent::Drop => {}
        }
    }
    // Property 5 and 8: every subscriber ran, in (priority, registration) order.
    for (p, label) in &pending_label {
        let mut expected: Vec<(String, u8, usize)> = subs
            .iter()
            .enumerate()
            .filter(|(_, s)| &s.label == label)
            .map(|(r, s)| (s.service.clone(), s.priority, r))
            .collect();
        expected.sort_by_key(|(_, prio, r)| (*prio, *r));
        let got = quarter_order.remove(p).unwrap_or_default();
        if got != expected {
            v.push(format!("irq {p} ({label}): epilogues {got:?}, expected {expected:?}"));
        }
    }
    for (id, f) in open {
        v.push(format!("flow {id} ({}) never finished", f.kind.name()));
    }
    v
}

pub mod world {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use wasmio_core::access::{AccessMode, TrustMode};
    use wasmio_core::interrupts::{EventKind, Machine, ScheduledEvent};
    use wasmio_core::platform::{build_access_config, PlatformDescription};
    use wasmio_core::system::load_service;
    use wasmio_core::wasm::DEFAULT_PAGE_SIZE;

    use super::*;

    pub const SENSORS_PER_SERVICE: usize = 2;

    pub struct World {
        pub machine: Machine,
        pub specs: Vec<SvcSpec>,
        pub subs: Vec<SubInfo>,
    }

    pub fn sensor_addr(label: &str) -> u32 {
        let i: u32 = label[1..].parse().unwrap();
        SENSOR_BASE + 4 * i
    }

    /// Loads `specs` as `svc0..` onto `desc`.
    pub fn assemble(desc: &PlatformDescription, specs: Vec<SvcSpec>) -> World {
        let cfg = build_access_config(desc, &desc.assignment_sets()).unwrap();
        let mut machine = Machine::new(desc.clone());
        let mut subs = Vec::new();
        for (i, spec) in specs.iter().enumerate() {
            let id = format!("svc{i}");
            let loaded = load_service(&id, &build_service(spec), spec.mode, spec.trust, desc, &cfg, DEFAULT_PAGE_SIZE)
                .unwrap_or_else(|e| panic!("{id}: {e}"));
            let entry = spec.main_work.map(|_| "main".to_owned());
            machine.add_service(loaded, entry).unwrap();
            for (s, sub) in spec.subs.iter().enumerate() {
                subs.push(SubInfo {
                    service: id.clone(),
                    label: sub.label.clone(),
                    priority: sub.priority,
                    copies: (0..sub.copies.len())
                        .map(|k| (spec.dest(s, k), sensor_addr(&sub.copies[k])))
                        .collect(),
                });
            }
        }
        World { machine, specs, subs }
    }

    /// A seeded random world: 3-4 services, 2-3 interrupt lines, random
    /// subscriptions, firmware epilogues, raises and register mutations.
    pub fn random_world(seed: u64) -> World {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_svc = rng.random_range(3..=4);
        let n_irq = rng.random_range(2..=3);
        let desc = test_board(n_svc, SENSORS_PER_SERVICE, n_irq);
        let mut specs = Vec::new();
        for s in 0..n_svc {
            let sensors: Vec<String> = (0..SENSORS_PER_SERVICE).map(|k| format!("s{}", s * SENSORS_PER_SERVICE + k)).collect();
            let mut subs = Vec::new();
            for i in 0..n_irq {
                if rng.random_bool(0.6) {
                    let n = rng.random_range(1..=SENSORS_PER_SERVICE);
                    let mut copies = sensors.clone();
                    copies.rotate_left(rng.random_range(0..SENSORS_PER_SERVICE));
                    copies.truncate(n);
                    subs.push(SubSpec {
                        label: format!("irq{i}"),
                        priority: rng.random_range(0..4),
                        copies,
                        work: rng.random_range(0..40),
                        trap: rng.random_bool(0.1),
                    });
                }
            }
            specs.push(SvcSpec {
                mode: AccessMode::ALL[rng.random_range(0..AccessMode::ALL.len())],
                trust: TrustMode::ALL[rng.random_range(0..2)],
                registers: sensors,
                subs,
                main_work: rng.random_bool(0.8).then(|| rng.random_range(1..300)),
            });
        }
        let mut w = assemble(&desc, specs);
        for i in 0..n_irq {
            if rng.random_bool(0.3) {
                w.machine.add_firmware_epilogue(&format!("irq{i}"), rng.random_range(1..20)).unwrap();
            }
        }
        let horizon = 6000;
        let mut events = Vec::new();
        for _ in 0..rng.random_range(1..8) {
            events.push(ScheduledEvent {
                step: rng.random_range(0..horizon),
                kind: EventKind::Raise(format!("irq{}", rng.random_range(0..n_irq))),
            });
        }
        for _ in 0..rng.random_range(0..12) {
            events.push(ScheduledEvent {
                step: rng.random_range(0..horizon),
                kind: EventKind::SetRegister(
                    format!("s{}", rng.random_range(0..n_svc * SENSORS_PER_SERVICE)),
                    rng.random::<u32>(),
                ),
            });
        }
        w.machine.schedule(events).unwrap();
        w
    }

    /// Values each service's handlers logged, in order.
    pub fn handler_log(m: &Machine, service: usize) -> Vec<u32> {
        let mem = &m.services[service].instance.memory;
        let word = |a: u32| u32::from_le_bytes(mem.data_slice(a, 4).unwrap().try_into().unwrap());
        (0..word(LOG_COUNT)).map(|i| word(LOG_BASE + 4 * i)).collect()
    }
}

pub mod gen;

pub mod shim {
    use wasmio_core::access::{imports, AccessMode, TrustMode};
    use wasmio_core::interrupts::Machine;
    use wasmio_core::manifest::{encode_requirements, PeripheralRequirements, SECTION_NAME};
    use wasmio_core::platform::{build_access_config, PlatformDescription};
    use wasmio_core::system::{load_service, LoadError};
    use wasmio_core::wasm::{emit_module, Instr, LoadKind, MemArg, ModuleBuilder, StoreKind, DEFAULT_PAGE_SIZE};

    pub const LABELS: u32 = 0x100;

    /// A service whose exports wrap each host import and raw memory access:
    /// `rh(ptr,len) rr(h) rw(h,v) dh(ptr,len) oc(h,op,a0,a1,a2) ir(ptr,len,prio,slot)`,
    /// `ld(addr) st(addr,v) ld8(addr) st8(addr,v) nop()`.
    pub fn shim_service(req: &PeripheralRequirements, labels: &[&str]) -> (Vec<u8>, Vec<(i32, i32)>) {
        use Instr::*;
        let mut b = ModuleBuilder::new();
        for (field, _, params, results) in imports::TABLE {
            b.import(imports::MODULE, field, params, results);
        }
        b.memory(1);
        let mut ptrs = Vec::new();
        let mut at = LABELS;
        for l in labels {
            b.data(at, l.as_bytes().to_vec());
            ptrs.push((at as i32, l.len() as i32));
            at += l.len() as u32;
        }
        for (i, (field, _, params, results)) in imports::TABLE.iter().enumerate() {
            let name = match *field {
                "wio_device_handle" => "dh",
                "wio_osapi_call" => "oc",
                "wio_rapi_handle" => "rh",
                "wio_rapi_read" => "rr",
                "wio_rapi_write" => "rw",
                _ => "ir",
            };
            let mut body: Vec<Instr> = (0..*params).map(LocalGet).collect();
            body.extend([Call(i as u32), End]);
            b.func(name, *params, *results, 0, body);
        }
        b.func("ld", 1, 1, 0, vec![LocalGet(0), Load(LoadKind::I32, MemArg::offset(0)), End]);
        b.func("ld8", 1, 1, 0, vec![LocalGet(0), Load(LoadKind::I8U, MemArg::offset(0)), End]);
        b.func("st", 2, 0, 0, vec![LocalGet(0), LocalGet(1), Store(StoreKind::I32, MemArg::offset(0)), End]);
        b.func("st8", 2, 0, 0, vec![LocalGet(0), LocalGet(1), Store(StoreKind::I8, MemArg::offset(0)), End]);
        b.func("nop", 0, 0, 0, vec![End]);
        b.custom(SECTION_NAME, encode_requirements(req).expect("valid requirements"));
        (emit_module(&b.build()).unwrap(), ptrs)
    }

    pub struct Shim {
        pub m: Machine,
        pub labels: Vec<(i32, i32)>,
    }

    impl Shim {
        pub fn load(
            desc: &PlatformDescription,
            id: &str,
            req: &PeripheralRequirements,
            labels: &[&str],
            mode: AccessMode,
            trust: TrustMode,
        ) -> Result<Shim, LoadError> {
            let (bytes, labels) = shim_service(req, labels);
            let cfg = build_access_config(desc, &desc.assignment_sets()).unwrap();
            let loaded = load_service(id, &bytes, mode, trust, desc, &cfg, DEFAULT_PAGE_SIZE)?;
            let mut m = Machine::new(desc.clone());
            m.add_service(loaded, None).unwrap();
            Ok(Shim { m, labels })
        }

        pub fn call(&mut self, name: &str, args: &[i32]) -> i32 {
            self.try_call(name, args).unwrap_or_else(|e| panic!("{name}{args:?}: {e}"))
        }

        pub fn try_call(&mut self, name: &str, args: &[i32]) -> Result<i32, wasmio_core::interrupts::MachineError> {
            let out = self.m.call(0, name.into(), args)?;
            Ok(out.first().copied().unwrap_or(0))
        }

        pub fn handle(&mut self, label: usize) -> i32 {
            let (p, l) = self.labels[label];
            self.call("rh", &[p, l])
        }
    }
}

/// Exhaustive load-time matching cases over an eight-label universe.
pub mod containment {
    use std::collections::{BTreeMap, BTreeSet};

    use wasmio_core::manifest::{DeviceRequirement, InterruptSubscription, PeripheralRequirements, RegisterRequirement};
    use wasmio_core::platform::{build_access_config, match_requirements, parse_platform, PlatformDescription};

    /// Registers r0..r3, devices d0 d1, interrupts i0 i1.
    pub const UNIVERSE: [&str; 8] = ["r0", "r1", "r2", "r3", "d0", "d1", "i0", "i1"];

    pub fn platform() -> PlatformDescription {
        parse_platform(
            "register r0 addr=0x60000000 width=4 mask=0xffffffff freq=4\n\
             register r1 addr=0x60000004 width=4 mask=0xff freq=3\n\
             register r2 addr=0x60000008 width=2 mask=0xff freq=2\n\
             register r3 addr=0x6000000c width=1 mask=0x1 freq=1\n\
             device d0 kind=gpio base=0x48000000\n\
             device d1 kind=spi base=0x40013000\n\
             interrupt i0 line=1\n\
             interrupt i1 line=2\n",
        )
        .unwrap()
    }

    const EXPOSED_WIDTH: [u8; 4] = [4, 4, 2, 1];

    fn labels(mask: u8) -> impl Iterator<Item = (usize, &'static str)> {
        UNIVERSE.iter().copied().enumerate().filter(move |(i, _)| mask >> i & 1 == 1)
    }

    /// Requirements for the labels in `mask`. Registers whose bit is set in
    /// `wrong_width` ask for a width the platform does not expose.
    pub fn requirements(mask: u8, wrong_width: u8) -> PeripheralRequirements {
        let mut req = PeripheralRequirements::default();
        for (i, l) in labels(mask) {
            match i {
                0..=3 => {
                    let exposed = EXPOSED_WIDTH[i];
                    let width = if wrong_width >> i & 1 == 1 { if exposed == 4 { 2 } else { 4 } } else { exposed };
                    req.registers.push(RegisterRequirement {
                        label: l.into(),
                        dummy_addr: 0x8000_0000 + 0x10 * i as u32,
                        width,
                    });
                }
                4 | 5 => req.devices.push(DeviceRequirement { label: l.into() }),
                _ => req.interrupts.push(InterruptSubscription {
                    label: l.into(),
                    priority: 0,
                    handler: 0,
                    copies: vec![],
                }),
            }
        }
        req
    }

    /// Runs one case and compares it with the set-containment oracle.
    /// Returns a description of the disagreement, if any.
    pub fn check(desc: &PlatformDescription, assigned: u8, required: u8, wrong_width: u8) -> Option<String> {
        let set: BTreeSet<String> = labels(assigned).map(|(_, l)| l.to_owned()).collect();
        let cfg = build_access_config(desc, &BTreeMap::from([("svc".to_owned(), set)])).unwrap();
        let req = requirements(required, wrong_width);
        let expected_missing: BTreeSet<&str> = labels(required)
            .filter(|(i, _)| assigned >> i & 1 == 0 || (*i < 4 && wrong_width >> i & 1 == 1))
            .map(|(_, l)| l)
            .collect();
        match match_requirements("svc", &req, &cfg, desc) {
            Ok(r) if expected_missing.is_empty() => {
                let want = labels(required).filter(|(i, _)| *i < 4).count();
                (r.bindings.len() != want).then(|| format!("{assigned:08b}/{required:08b}: {} bindings", r.bindings.len()))
            }
            Ok(_) => Some(format!("{assigned:08b}/{required:08b}/{wrong_width:04b}: accepted, expected {expected_missing:?}")),
            Err(rej) => {
                let got: BTreeSet<&str> = rej.labels().into_iter().collect();
                (got != expected_missing)
                    .then(|| format!("{assigned:08b}/{required:08b}/{wrong_width:04b}: missing {got:?}, expected {expected_missing:?}"))
            }
        }
    }
}
