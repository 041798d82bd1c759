//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::shim::Shim;
use common::world::{assemble, handler_log, random_world, sensor_addr};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasmio_core::access::{imports, AccessMode, Category, TrustMode};
use wasmio_core::devices::{BusOp, Origin};
use wasmio_core::harness::{gpio_roundtrip, report_csv, run_scenario, spi_rate, BoardLabels, ScenarioId, ScenarioResult};
use wasmio_core::interrupts::{EventKind, Machine, ScheduledEvent, TraceEvent};
use wasmio_core::manifest::{
    decode_requirements, encode_requirements, DeviceRequirement, PeripheralRequirements, RegisterRequirement,
    SECTION_NAME,
};
use wasmio_core::platform::{build_access_config, parse_platform, PlatformDescription};
use wasmio_core::system::load_service;
use wasmio_core::wasm::{decode_module, emit_module, Instr, LoadKind, MemArg, ModuleBuilder, StoreKind, DEFAULT_PAGE_SIZE};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("priority model", priority_model),
        ("isolation", isolation),
        ("trace equivalence", trace_equivalence),
        ("ordering", ordering),
        ("linear scaling", linear_scaling),
        ("interrupt phases", interrupt_phases),
        ("spi case study", spi_case_study),
        ("format round trips", format_round_trips),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        let line = match &outcome {
            Ok(detail) => format!("criterion {} ({name}): PASS in {secs:.1}s; {detail}", i + 1),
            Err(why) => {
                failed += 1;
                format!("criterion {} ({name}): FAIL in {secs:.1}s; {why}", i + 1)
            }
        };
        writeln!(std::io::stdout().lock(), "{line}").unwrap();
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn demo() -> PlatformDescription {
    parse_platform(include_str!("../../../platforms/demo.platform")).unwrap()
}

fn priority_model() -> Outcome {
    const WORLDS: u64 = 1000;
    let t0 = Instant::now();
    let mut entries = 0;
    for seed in 0..WORLDS {
        let mut w = random_world(seed);
        ensure!(w.specs.len() >= 3, "seed {seed}: only {} services", w.specs.len());
        w.machine.run_until_idle().map_err(|e| format!("seed {seed}: {e}"))?;
        let v = check_trace(w.machine.trace(), &w.subs, SENSOR_MASK);
        ensure!(v.is_empty(), "seed {seed}: {} violations, first: {}", v.len(), v[0]);
        entries += w.machine.trace().len();
    }
    let took = t0.elapsed();
    ensure!(took < Duration::from_secs(60), "took {took:?}");
    Ok(format!("{WORLDS} schedules, {entries} trace entries, 0 violations"))
}

// A board for direct access tests: r0..r3 owned by svc0, `other` by svc1.
const DUMMY: u32 = 0x8000_0000;
const REG_BASE: u32 = 0x6000_0000;
const MASKS: [u32; 4] = [0xffff_ffff, 0xffff, 0x1, 0xff00_ff00];
const LABELS: [&str; 8] = ["r0", "r1", "r2", "r3", "other", "gpioa", "spi1", "nope"];
const OTHER: u32 = 0x6000_0100;

fn board() -> PlatformDescription {
    let mut s = String::from(
        "device gpioa kind=gpio base=0x48000000 pins=16\n\
         device spi1 kind=spi base=0x40013000 divider=2\n\
         register other addr=0x60000100 width=4 mask=0xffffffff freq=1\n",
    );
    for (i, m) in MASKS.iter().enumerate() {
        s += &format!("register r{i} addr={:#x} width=4 mask={m:#x} freq={}\n", REG_BASE + 4 * i as u32, 100 - i);
    }
    s += "assign svc0 gpioa spi1 r0 r1 r2 r3\nassign svc1 other\n";
    parse_platform(&s).unwrap()
}

fn four_registers() -> PeripheralRequirements {
    PeripheralRequirements {
        registers: (0..4)
            .map(|i| RegisterRequirement {
                label: format!("r{i}"),
                dummy_addr: DUMMY + 0x10 * i,
                width: 4,
            })
            .collect(),
        devices: vec![DeviceRequirement { label: "gpioa".into() }, DeviceRequirement { label: "spi1".into() }],
        interrupts: vec![],
    }
}

fn probe_address(rng: &mut impl Rng, limit: u32) -> u32 {
    let jitter = rng.random_range(0..17u32).wrapping_sub(8);
    let hot = [REG_BASE, REG_BASE + 12, OTHER, 0x4800_0014, 0x4001_300c];
    match rng.random_range(0..6) {
        0 => rng.random(),
        1 => rng.random_range(0..limit),
        2 => limit.wrapping_add(jitter),
        3 => (DUMMY + 0x10 * rng.random_range(0..5)).wrapping_add(jitter),
        4 => hot[rng.random_range(0..hot.len())].wrapping_add(jitter),
        _ => jitter,
    }
}

fn isolation() -> Outcome {
    const PROBES_PER_MODE: usize = 25_000;
    let desc = board();
    let own: Vec<u32> = (0..4).map(|i| REG_BASE + 4 * i).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x15_0_1a7e);
    let mut probes = 0;
    let mut traps = 0;
    for mode in AccessMode::ALL {
        let mut s = Shim::load(&desc, "svc0", &four_registers(), &LABELS, mode, TrustMode::Trusted).unwrap();
        let mem = &s.m.services[0].instance.memory;
        let limit = mem.limit() as u32;

        // Handle requests for anything but the four owned registers fail.
        let (handle_fn, valid): (&str, &[&str]) = match mode {
            AccessMode::Osapi => ("dh", &["gpioa", "spi1"]),
            _ => ("rh", &["r0", "r1", "r2", "r3"]),
        };
        for (k, l) in LABELS.iter().enumerate() {
            let h = s.call(handle_fn, &[s.labels[k].0, s.labels[k].1]);
            ensure!((h >= 0) == valid.contains(l), "{mode}: {handle_fn}(`{l}`) = {h}");
        }
        for _ in 0..500 {
            let len = rng.random_range(0..=64);
            let bytes: Vec<u8> = (0..len).map(|_| rng.random_range(b'0'..=b'z')).collect();
            for (k, b) in bytes.iter().enumerate() {
                s.call("st8", &[0x300 + k as i32, *b as i32]);
            }
            let h = s.call(handle_fn, &[0x300, len]);
            let authorized = valid.iter().any(|v| v.as_bytes() == bytes);
            ensure!((h >= 0) == authorized, "{mode}: {handle_fn}({:?}) = {h}", String::from_utf8_lossy(&bytes));
        }

        for _ in 0..PROBES_PER_MODE {
            let addr = probe_address(&mut rng, limit);
            let (name, width, store) = [("ld", 4, false), ("st", 4, true), ("ld8", 1, false), ("st8", 1, true)]
                [rng.random_range(0..4)];
            let args: Vec<i32> = if store { vec![addr as i32, rng.random()] } else { vec![addr as i32] };
            let in_memory = addr as u64 + width <= limit as u64;
            let own_dummy = mode == AccessMode::Mmio && width == 4 && (0..4).any(|i| addr == DUMMY + 0x10 * i);
            let before = s.m.board.trace().len();
            let ok = s.try_call(name, &args).is_ok();
            probes += 1;
            traps += !ok as usize;
            ensure!(ok == (in_memory || own_dummy), "{mode} {name}({addr:#x}): ok={ok}");
            let touched = &s.m.board.trace()[before..];
            if !own_dummy {
                // Plain memory accesses reach the bus only through the conveyor.
                ensure!(
                    touched.iter().all(|e| e.origin == Origin::Dma),
                    "{mode} {name}({addr:#x}) reached the bus"
                );
            }
            ensure!(
                touched.iter().all(|e| own.contains(&e.addr)),
                "{mode} {name}({addr:#x}) touched a foreign address"
            );
        }
        ensure!(s.m.board.peek(OTHER, 4, 0) == 0, "{mode}: foreign register changed");
    }

    let desc = containment::platform();
    let mut cases = 0u64;
    for assigned in 0..=255u8 {
        for required in 0..=255u8 {
            for wrong_width in 0..16u8 {
                // Width flags only matter for required registers.
                if wrong_width & !required & 0xf != 0 {
                    continue;
                }
                cases += 1;
                if let Some(e) = containment::check(&desc, assigned, required, wrong_width) {
                    return Err(e);
                }
            }
        }
    }
    Ok(format!("{probes} probes ({traps} trapped), {cases} containment cases"))
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Read(usize),
    Write(usize, i32),
}

fn import_index(field: &str) -> u32 {
    imports::TABLE.iter().position(|t| t.0 == field).unwrap() as u32
}

/// A straight-line program over r0..r3 as a service binary, either through
/// handles or through dummy addresses.
fn program_service(ops: &[Op], mmio: bool) -> Vec<u8> {
    use Instr::*;
    let mut b = ModuleBuilder::new();
    for (field, _, params, results) in imports::TABLE {
        b.import(imports::MODULE, field, params, results);
    }
    b.memory(1);
    let mut body = Vec::new();
    if !mmio {
        for i in 0..4u32 {
            b.data(0x100 + 2 * i, format!("r{i}").into_bytes());
            body.extend([
                I32Const(0x100 + 2 * i as i32),
                I32Const(2),
                Call(import_index("wio_rapi_handle")),
                LocalSet(i),
            ]);
        }
    }
    let dummy = |r: usize| I32Const((DUMMY + 0x10 * r as u32) as i32);
    for op in ops {
        match (*op, mmio) {
            (Op::Read(r), false) => body.extend([LocalGet(r as u32), Call(import_index("wio_rapi_read")), Drop]),
            (Op::Write(r, v), false) => {
                body.extend([LocalGet(r as u32), I32Const(v), Call(import_index("wio_rapi_write")), Drop])
            }
            (Op::Read(r), true) => body.extend([dummy(r), Load(LoadKind::I32, MemArg::offset(0)), Drop]),
            (Op::Write(r, v), true) => body.extend([dummy(r), I32Const(v), Store(StoreKind::I32, MemArg::offset(0))]),
        }
    }
    body.push(End);
    b.func("prog", 0, 0, 4, body);
    b.custom(SECTION_NAME, encode_requirements(&four_registers()).unwrap());
    emit_module(&b.build()).unwrap()
}

fn machine_for(desc: &PlatformDescription, bytes: &[u8], mode: AccessMode) -> Machine {
    let cfg = build_access_config(desc, &desc.assignment_sets()).unwrap();
    let loaded = load_service("svc0", bytes, mode, TrustMode::Trusted, desc, &cfg, DEFAULT_PAGE_SIZE).unwrap();
    let mut m = Machine::new(desc.clone());
    m.add_service(loaded, None).unwrap();
    m
}

type Access = (u32, BusOp, u32);

fn run_program(desc: &PlatformDescription, ops: &[Op], mode: AccessMode, initial: &[u32; 4]) -> (Vec<Access>, [u32; 4]) {
    let mut m = machine_for(desc, &program_service(ops, mode.is_mmio()), mode);
    for (i, v) in initial.iter().enumerate() {
        m.board.bus_write(REG_BASE + 4 * i as u32, 4, *v, 0, Origin::External);
    }
    m.dma_sync_all();
    m.board.clear_trace();
    m.call(0, "prog".into(), &[]).unwrap();
    m.dma_sync_all();
    let trace = m
        .board
        .trace()
        .iter()
        .filter(|e| mode.base() == mode || e.op == BusOp::Write)
        .map(|e| (e.addr, e.op, e.value))
        .collect();
    let regs = std::array::from_fn(|i| m.board.peek(REG_BASE + 4 * i as u32, 4, m.now()));
    (trace, regs)
}

fn trace_equivalence() -> Outcome {
    const PROGRAMS: u64 = 500;
    let desc = board();
    let dummies: Vec<i32> = (0..4).map(|i| (DUMMY + 0x10 * i) as i32).collect();
    let mut accesses = 0;
    for seed in 0..PROGRAMS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let initial: [u32; 4] = std::array::from_fn(|i| rng.random::<u32>() & MASKS[i]);
        let value = |rng: &mut ChaCha8Rng| loop {
            let v: i32 = rng.random();
            if !dummies.contains(&v) {
                break v;
            }
        };
        let ops: Vec<Op> = (0..rng.random_range(1..40))
            .map(|_| {
                let r = rng.random_range(0..4);
                if rng.random_bool(0.5) { Op::Read(r) } else { Op::Write(r, value(&mut rng)) }
            })
            .collect();
        let (rapi, rapi_regs) = run_program(&desc, &ops, AccessMode::Rapi, &initial);
        let (mmio, mmio_regs) = run_program(&desc, &ops, AccessMode::Mmio, &initial);
        ensure!(rapi == mmio, "program {seed}: traces differ\n{rapi:x?}\n{mmio:x?}");
        ensure!(rapi_regs == mmio_regs, "program {seed}: final registers differ");
        accesses += rapi.len();

        // One write per register per period: keep the last write of each and
        // make sure it changes the slot so the controller pushes it.
        let mut last = [None; 4];
        for op in &ops {
            if let Op::Write(r, v) = *op {
                last[r] = Some(v);
            }
        }
        let restricted: Vec<Op> = ops
            .iter()
            .filter_map(|op| match *op {
                Op::Read(r) => Some(Op::Read(r)),
                Op::Write(r, v) if last[r] == Some(v) && v as u32 != initial[r] => {
                    last[r] = None;
                    Some(Op::Write(r, v))
                }
                Op::Write(..) => None,
            })
            .collect();
        let (mut plain, plain_regs) = run_program(&desc, &restricted, AccessMode::Mmio, &initial);
        let (mut dma, dma_regs) = run_program(&desc, &restricted, AccessMode::MmioDma, &initial);
        plain.retain(|a| a.1 == BusOp::Write);
        let key = |a: &Access| (a.0, a.1 == BusOp::Write, a.2);
        plain.sort_by_key(key);
        dma.sort_by_key(key);
        ensure!(plain == dma, "program {seed}: DMA writes differ\n{plain:x?}\n{dma:x?}");
        ensure!(plain_regs == dma_regs, "program {seed}: DMA final registers differ");
    }
    Ok(format!("{PROGRAMS} programs, {accesses} register accesses compared"))
}

fn golden(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn all_runs(id: ScenarioId) -> Vec<ScenarioResult> {
    let desc = demo();
    let mut out = Vec::new();
    for mode in AccessMode::ALL {
        for trust in TrustMode::ALL {
            out.push(run_scenario(id, &desc, &BoardLabels::default(), mode, trust, &[]).unwrap());
        }
    }
    out
}

fn ordering() -> Outcome {
    let desc = demo();
    let l = BoardLabels::default();
    let rt = |mode, trust| gpio_roundtrip(&desc, &l, mode, trust).unwrap().metric("roundtrip").unwrap();
    let t = |m| rt(m, TrustMode::Trusted);
    let u = |m| rt(m, TrustMode::Untrusted);
    use AccessMode::*;
    ensure!(t(Mmio) < t(Rapi), "trusted mmio {} >= rapi {}", t(Mmio), t(Rapi));
    ensure!(t(Rapi) <= t(Osapi), "trusted rapi {} > osapi {}", t(Rapi), t(Osapi));
    ensure!(u(Mmio) > u(Rapi), "untrusted mmio {} <= rapi {}", u(Mmio), u(Rapi));
    let cs = desc.costs.context_switch as i64;
    for m in [Osapi, Rapi, Mmio] {
        ensure!(u(m) - t(m) >= 2 * cs, "{m}: untrusted adds only {}", u(m) - t(m));
    }
    ensure!(
        report_csv(&all_runs(ScenarioId::GpioRoundtrip)) == golden("gpio-roundtrip.csv"),
        "gpio roundtrip differs from golden report"
    );
    ensure!(
        report_csv(&all_runs(ScenarioId::IrqLatency)) == golden("irq-latency.csv"),
        "irq latency differs from golden report"
    );
    Ok(format!(
        "trusted mmio {} < rapi {} <= osapi {}; untrusted mmio {} > rapi {}; golden reports match",
        t(Mmio),
        t(Rapi),
        t(Osapi),
        u(Mmio),
        u(Rapi)
    ))
}

fn linear_scaling() -> Outcome {
    let ns = [1u32, 4, 8, 16, 32];
    let mut points = Vec::new();
    for mode in [AccessMode::Rapi, AccessMode::Mmio] {
        for &n in &ns {
            let mut src = String::new();
            for i in 0..n {
                src += &format!("register r{i:02} addr={:#x} width=4 mask=0xffffffff freq=1\n", REG_BASE + 4 * i);
            }
            src += "assign svc";
            for i in 0..n {
                src += &format!(" r{i:02}");
            }
            let desc = parse_platform(&(src + "\n")).unwrap();
            let req = PeripheralRequirements {
                registers: (0..n)
                    .map(|i| RegisterRequirement {
                        label: format!("r{i:02}"),
                        dummy_addr: DUMMY + 0x10 * i,
                        width: 4,
                    })
                    .collect(),
                ..Default::default()
            };
            // Equal frequencies sort by label, so the target is last.
            let target = format!("r{:02}", n - 1);
            let mut s = Shim::load(&desc, "svc", &req, &[&target], mode, TrustMode::Trusted).unwrap();
            let before = s.m.meter.ledger.get(Category::WasmioCheck);
            if mode == AccessMode::Rapi {
                ensure!(s.handle(0) == n as i32 - 1, "{mode} N={n}: target not last");
            } else {
                s.call("ld", &[(DUMMY + 0x10 * (n - 1)) as i32]);
            }
            points.push((mode, n as f64, (s.m.meter.ledger.get(Category::WasmioCheck) - before) as f64));
        }
    }
    let mut summary = Vec::new();
    for mode in [AccessMode::Rapi, AccessMode::Mmio] {
        let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.0 == mode).map(|p| (p.1, p.2)).collect();
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        ensure!(slope == 1.0, "{mode}: slope {slope}, points {pts:?}");
        summary.push(format!("{mode} slope {slope} intercept {intercept}"));
    }
    Ok(summary.join(", "))
}

/// Registers s0.. are `SENSOR_MASK` wide; snapshots hold the masked value.
fn mutation_schedule(seed: u64) -> (common::world::World, Vec<ScheduledEvent>) {
    const GAP: u64 = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_svc = rng.random_range(3..=4);
    let n_irq = rng.random_range(2..=3);
    let desc = test_board(n_svc, world::SENSORS_PER_SERVICE, n_irq);
    let specs = (0..n_svc)
        .map(|s| {
            let sensors: Vec<String> = (0..world::SENSORS_PER_SERVICE).map(|k| format!("s{}", s * 2 + k)).collect();
            let mut subs = Vec::new();
            for i in 0..n_irq {
                if rng.random_bool(0.7) {
                    subs.push(SubSpec {
                        label: format!("irq{i}"),
                        priority: rng.random_range(0..4),
                        copies: if rng.random_bool(0.5) {
                            sensors.clone()
                        } else {
                            vec![sensors[rng.random_range(0..2)].clone()]
                        },
                        work: rng.random_range(0..20),
                        trap: false,
                    });
                }
            }
            SvcSpec {
                mode: [AccessMode::Rapi, AccessMode::Mmio, AccessMode::RapiDma, AccessMode::MmioDma, AccessMode::Osapi]
                    [rng.random_range(0..5)],
                trust: TrustMode::ALL[rng.random_range(0..2)],
                registers: sensors,
                subs,
                main_work: rng.random_bool(0.5).then(|| rng.random_range(1..200)),
            }
        })
        .collect();
    let w = assemble(&desc, specs);
    // Raises are spaced so no prologue is still pending when the next
    // mutation lands; mutations avoid the window right after a raise.
    let mut events = Vec::new();
    let mut raises = Vec::new();
    let mut at = rng.random_range(0..GAP);
    for _ in 0..rng.random_range(1..6) {
        raises.push(at);
        events.push(ScheduledEvent {
            step: at,
            kind: EventKind::Raise(format!("irq{}", rng.random_range(0..n_irq))),
        });
        at += GAP + rng.random_range(0..3 * GAP);
    }
    for _ in 0..rng.random_range(1..20) {
        let step = rng.random_range(0..at);
        if raises.iter().any(|r| (*r..*r + GAP).contains(&step)) {
            continue;
        }
        events.push(ScheduledEvent {
            step,
            kind: EventKind::SetRegister(format!("s{}", rng.random_range(0..n_svc * 2)), rng.random()),
        });
    }
    events.sort_by_key(|e| e.step);
    (w, events)
}

fn interrupt_phases() -> Outcome {
    let runs = all_runs(ScenarioId::IrqLatency);
    for trust in TrustMode::ALL {
        let prologues: Vec<_> = runs
            .iter()
            .filter(|r| r.trust == trust)
            .map(|r| (r.mode, r.phase("prologue").unwrap().total()))
            .collect();
        ensure!(prologues.windows(2).all(|w| w[0].1 == w[1].1), "{trust}: prologues differ {prologues:?}");
    }

    const SCHEDULES: u64 = 1000;
    let mut snapshots = 0;
    for seed in 0..SCHEDULES {
        let (mut w, events) = mutation_schedule(seed);
        w.machine.schedule(events.clone()).unwrap();
        w.machine.run_until_idle().map_err(|e| format!("schedule {seed}: {e}"))?;
        // Register values when each raise is taken, from the schedule alone.
        // A raise arriving inside a host transition is taken at the next
        // instruction boundary, after stimuli due at that step.
        let at_step = |step: u64| {
            let mut regs: HashMap<u32, u32> = HashMap::new();
            for e in events.iter().take_while(|e| e.step <= step) {
                if let EventKind::SetRegister(l, v) = &e.kind {
                    regs.insert(sensor_addr(l), *v & SENSOR_MASK);
                }
            }
            regs
        };
        let raise_step: BTreeMap<u64, u64> = w
            .machine
            .trace()
            .iter()
            .filter(|e| e.event == TraceEvent::Raise)
            .map(|e| (e.pending.unwrap(), e.step))
            .collect();
        let mut per_service: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for e in w.machine.trace().iter().filter(|e| e.event == TraceEvent::Snapshot) {
            let svc = e.service.clone().unwrap();
            let label = e.label.clone().unwrap();
            let sub = w.subs.iter().find(|s| s.service == svc && s.label == label).unwrap();
            let regs = at_step(raise_step[&e.pending.unwrap()]);
            let want: Vec<(u32, u32)> =
                sub.copies.iter().map(|(dest, src)| (*dest, regs.get(src).copied().unwrap_or(0))).collect();
            ensure!(e.values == want, "schedule {seed}: {svc} got {:x?}, registers were {want:x?}", e.values);
            per_service.entry(svc).or_default().extend(want.iter().map(|v| v.1));
            snapshots += 1;
        }
        for i in 0..w.specs.len() {
            let seen = per_service.remove(&format!("svc{i}")).unwrap_or_default();
            ensure!(handler_log(&w.machine, i) == seen, "schedule {seed}: svc{i} handler saw other values");
        }
    }
    ensure!(snapshots > SCHEDULES, "only {snapshots} snapshots");
    Ok(format!("prologues equal across modes; {SCHEDULES} schedules, {snapshots} snapshots all match"))
}

fn spi_case_study() -> Outcome {
    let t0 = Instant::now();
    let desc = demo();
    let dividers: Vec<u32> = (1..=11).map(|k| 1 << k).collect();
    let mut points = 0;
    for trust in TrustMode::ALL {
        let mut sweeps = HashMap::new();
        for mode in AccessMode::ALL {
            let r = spi_rate(&desc, &BoardLabels::default(), mode, trust, &dividers).map_err(|e| e.to_string())?;
            for w in r.rates.windows(2) {
                ensure!(
                    w[0].measured <= w[1].measured,
                    "{mode} {trust}: {} at divider {} > {} at {}",
                    w[0].measured,
                    w[0].divider,
                    w[1].measured,
                    w[1].divider
                );
            }
            points += r.rates.len();
            sweeps.insert(mode, r.rates);
        }
        if trust == TrustMode::Untrusted {
            for (dma, plain) in [(AccessMode::RapiDma, AccessMode::Rapi), (AccessMode::MmioDma, AccessMode::Mmio)] {
                for (a, b) in sweeps[&dma].iter().zip(&sweeps[&plain]) {
                    ensure!(a.measured >= b.measured, "{dma} {} < {plain} {} at {}", a.measured, b.measured, a.divider);
                }
            }
        }
    }
    let took = t0.elapsed();
    ensure!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("{points} sweep points"))
}

fn format_round_trips() -> Outcome {
    const N: u64 = 10_000;
    let mut bytes_total = 0;
    for seed in 0..N {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let req = gen::requirements(&mut rng, false);
        let bytes = encode_requirements(&req).map_err(|e| format!("requirements {seed}: {e}"))?;
        ensure!(decode_requirements(&bytes).as_ref() == Ok(&req), "requirements {seed} did not round-trip");
        let m = gen::module(&mut rng);
        let bytes = emit_module(&m).map_err(|e| format!("module {seed}: {e}"))?;
        let back = decode_module(&bytes).map_err(|e| format!("module {seed}: {e}"))?;
        ensure!(back == m, "module {seed} did not round-trip");
        ensure!(emit_module(&back).as_ref() == Ok(&bytes), "module {seed} re-emits differently");
        bytes_total += bytes.len();
    }
    Ok(format!("{N} requirements and {N} modules ({bytes_total} module bytes)"))
}

