//! The level machine. One control flow is active or suspended per level;
//! the highest level with work always runs, preempting lower levels at
//! instruction boundaries.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use thiserror::Error;

use super::scenario::{EventKind, Scenario, ScheduledEvent};
use super::{
    FlowKind, InterruptConfig, Level, PendingInterrupt, RegisterError, SnapshotItem, Subscription, TraceEntry,
    TraceEvent, WasmEpilogueEntry,
};
use crate::access::{imports, Bus, Category, CostModel, Meter, ServiceAccess, StepLedger, TrustMode};
use crate::devices::{Origin, RegisterFile};
use crate::manifest::DEFAULT_MAX_COPIES;
use crate::platform::{build_access_config, ClearAction, ConfigError, PlatformDescription};
use crate::system::{load_service, LoadError, LoadedService};
use crate::wasm::{
    Execution, FuncRef, FuncType, Hook, Host, HostFuncId, InvokeError, MemAccess, ModuleInstance, Status, Trap,
    DEFAULT_PAGE_SIZE,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("step limit {0} exceeded")]
    StepLimit(u64),
    #[error("unknown service `{0}`")]
    UnknownService(String),
    #[error("unknown interrupt `{0}`")]
    UnknownInterrupt(String),
    #[error("unknown register `{0}`")]
    UnknownRegister(String),
    #[error("service `{service}`: subscription to `{label}` rejected: {err}")]
    Subscription {
        service: String,
        label: String,
        err: RegisterError,
    },
    #[error("service `{service}`: {err}")]
    Load { service: String, err: LoadError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Invoke(#[from] InvokeError),
    #[error(transparent)]
    Trap(#[from] Trap),
}

#[derive(Debug, Clone)]
pub struct ServiceSlot {
    pub id: String,
    pub instance: ModuleInstance,
    pub access: ServiceAccess,
    pub entry: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct Flow {
    id: u64,
    suspended: bool,
}

#[derive(Debug, Clone)]
struct HalfTask {
    kind: FlowKind,
    pending: PendingInterrupt,
    remaining: u64,
}

#[derive(Debug, Clone)]
struct ActiveWasm {
    flow: Flow,
    service: usize,
    exec: Execution,
    pending: Option<u64>,
    label: Option<String>,
}

pub const DEFAULT_STEP_LIMIT: u64 = 1 << 40;

#[derive(Debug, Clone)]
pub struct Machine {
    desc: PlatformDescription,
    pub board: RegisterFile,
    pub meter: Meter,
    pub costs: CostModel,
    pub services: Vec<ServiceSlot>,
    pub irq: InterruptConfig,
    pub max_copies: usize,
    pub step_limit: u64,
    firmware: BTreeMap<String, u32>,
    events: VecDeque<ScheduledEvent>,
    e1: VecDeque<PendingInterrupt>,
    ehalf: VecDeque<HalfTask>,
    ehalf_flow: Option<Flow>,
    equarter: VecDeque<WasmEpilogueEntry>,
    active_q: Option<ActiveWasm>,
    active_main: Option<ActiveWasm>,
    next_main: usize,
    trace: Vec<TraceEntry>,
    level_ledgers: [StepLedger; 4],
    retired: u32,
    next_flow: u64,
    next_pending: u64,
}

/// Import dispatch and the out-of-bounds hook for one service.
struct ServiceHost<'a> {
    bus: Bus<'a>,
    access: &'a mut ServiceAccess,
    irq: &'a mut InterruptConfig,
    service: usize,
    max_copies: usize,
}

impl Host for ServiceHost<'_> {
    fn call(&mut self, inst: &mut ModuleInstance, func: HostFuncId, a: &[i32]) -> Result<Option<i32>, String> {
        let bus = &mut self.bus;
        let r = match func {
            imports::DEVICE_HANDLE => self.access.device_handle(bus, &inst.memory, a[0], a[1]),
            imports::OSAPI_CALL => self.access.osapi_call(bus, &inst.memory, a[0], a[1], [a[2], a[3], a[4]]),
            imports::RAPI_HANDLE => self.access.rapi_handle(bus, &inst.memory, a[0], a[1]),
            imports::RAPI_READ => self.access.rapi_read(bus, &inst.memory, a[0]),
            imports::RAPI_WRITE => self.access.rapi_write(bus, &mut inst.memory, a[0], a[1]),
            imports::IRQ_REGISTER => {
                self.access.call_prologue(bus, true);
                let label = ServiceAccess::label_bytes(&inst.memory, a[0], a[1])
                    .and_then(|b| String::from_utf8(b).ok());
                let r = match (label, u8::try_from(a[2]), u32::try_from(a[3])) {
                    (Some(label), Ok(prio), Ok(slot)) => {
                        match register_wasm_epilogue(self.irq, self.service, self.access, inst, &label, prio, slot, self.max_copies) {
                            Ok(()) => 0,
                            Err(_) => -1,
                        }
                    }
                    _ => -1,
                };
                self.access.call_epilogue(bus, true);
                r
            }
            other => return Err(format!("unknown host function {}", other.0)),
        };
        Ok(Some(r))
    }

    fn mem_access_hook(&mut self, _: &mut ModuleInstance, access: MemAccess) -> Hook {
        self.access.mmio_intercept(&mut self.bus, access)
    }
}

/// Records a WASM epilogue for `label`. The copy descriptors come from the
/// service's manifest subscription to the same label, if any.
#[allow(clippy::too_many_arguments)]
pub fn register_wasm_epilogue(
    irq: &mut InterruptConfig,
    service: usize,
    access: &ServiceAccess,
    inst: &ModuleInstance,
    label: &str,
    priority: u8,
    slot: u32,
    max_copies: usize,
) -> Result<(), RegisterError> {
    if !access.resolved.interrupts.iter().any(|i| i.label == label) {
        return Err(RegisterError::NotExposed);
    }
    let func = inst.table_func(slot).ok_or(RegisterError::BadHandler)?;
    if inst.module().module().func_type(func) != Some(FuncType::new(0, 0)) {
        return Err(RegisterError::BadHandler);
    }
    let copies = access
        .resolved
        .requirements
        .subscription(label)
        .map(|s| s.copies.clone())
        .unwrap_or_default();
    if copies.len() > max_copies {
        return Err(RegisterError::TooManyCopies);
    }
    irq.insert(Subscription {
        service,
        label: label.to_owned(),
        priority,
        slot,
        func,
        copies,
        seq: 0,
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn step_exec(
    exec: &mut Execution,
    slot: &mut ServiceSlot,
    service: usize,
    board: &mut RegisterFile,
    meter: &mut Meter,
    costs: &CostModel,
    irq: &mut InterruptConfig,
    max_copies: usize,
) -> Result<Status, Trap> {
    meter.charge(Category::Interp, 1);
    let mut host = ServiceHost {
        bus: Bus { board, meter, costs },
        access: &mut slot.access,
        irq,
        service,
        max_copies,
    };
    exec.step(&mut slot.instance, &mut host)
}

fn width_mask(width: u8) -> u32 {
    match width {
        1 => 0xff,
        2 => 0xffff,
        _ => u32::MAX,
    }
}

impl Machine {
    pub fn new(desc: PlatformDescription) -> Self {
        Self {
            board: RegisterFile::from_platform(&desc),
            costs: desc.costs,
            desc,
            meter: Meter::new(),
            services: Vec::new(),
            irq: InterruptConfig::default(),
            max_copies: DEFAULT_MAX_COPIES,
            step_limit: DEFAULT_STEP_LIMIT,
            firmware: BTreeMap::new(),
            events: VecDeque::new(),
            e1: VecDeque::new(),
            ehalf: VecDeque::new(),
            ehalf_flow: None,
            equarter: VecDeque::new(),
            active_q: None,
            active_main: None,
            next_main: 0,
            trace: Vec::new(),
            level_ledgers: [StepLedger::new(); 4],
            retired: 0,
            next_flow: 0,
            next_pending: 0,
        }
    }

    pub fn platform(&self) -> &PlatformDescription {
        &self.desc
    }

    /// Builds a machine from a scenario; wasm paths are relative to `base`.
    pub fn from_scenario(desc: PlatformDescription, sc: &Scenario, base: &Path) -> Result<Self, MachineError> {
        let cfg = build_access_config(&desc, &desc.assignment_sets())?;
        let mut m = Machine::new(desc);
        for s in &sc.services {
            let path = base.join(&s.wasm);
            let bytes = std::fs::read(&path).map_err(|e| MachineError::Io(format!("{}: {e}", path.display())))?;
            let loaded = load_service(&s.id, &bytes, s.mode, s.trust, &m.desc, &cfg, DEFAULT_PAGE_SIZE)
                .map_err(|err| MachineError::Load {
                    service: s.id.clone(),
                    err,
                })?;
            m.add_service(loaded, s.entry.clone())?;
        }
        for (label, steps) in &sc.firmware {
            m.add_firmware_epilogue(label, *steps)?;
        }
        m.schedule(sc.events.iter().cloned())?;
        Ok(m)
    }

    /// Adds a service, primes its conveyor and registers the epilogues its
    /// manifest declares. Returns the service index.
    pub fn add_service(&mut self, loaded: LoadedService, entry: Option<String>) -> Result<usize, MachineError> {
        let idx = self.services.len();
        self.services.push(ServiceSlot {
            id: loaded.id,
            instance: loaded.instance,
            access: loaded.access,
            entry,
        });
        self.sync_service(idx);
        let slot = &self.services[idx];
        for sub in slot.access.resolved.requirements.interrupts.clone() {
            register_wasm_epilogue(
                &mut self.irq,
                idx,
                &slot.access,
                &slot.instance,
                &sub.label,
                sub.priority,
                sub.handler,
                self.max_copies,
            )
            .map_err(|err| MachineError::Subscription {
                service: slot.id.clone(),
                label: sub.label.clone(),
                err,
            })?;
        }
        Ok(idx)
    }

    pub fn service_index(&self, id: &str) -> Option<usize> {
        self.services.iter().position(|s| s.id == id)
    }

    /// Runs a native firmware epilogue of `steps` steps before the system
    /// epilogue of every `label` interrupt.
    pub fn add_firmware_epilogue(&mut self, label: &str, steps: u32) -> Result<(), MachineError> {
        if self.desc.interrupt(label).is_none() {
            return Err(MachineError::UnknownInterrupt(label.into()));
        }
        self.firmware.insert(label.to_owned(), steps);
        Ok(())
    }

    pub fn schedule(&mut self, events: impl IntoIterator<Item = ScheduledEvent>) -> Result<(), MachineError> {
        for e in events {
            match &e.kind {
                EventKind::Raise(l) if self.desc.interrupt(l).is_none() => {
                    return Err(MachineError::UnknownInterrupt(l.clone()))
                }
                EventKind::SetRegister(l, _) if self.desc.register(l).is_none() => {
                    return Err(MachineError::UnknownRegister(l.clone()))
                }
                _ => self.events.push_back(e),
            }
        }
        self.events.make_contiguous().sort_by_key(|e| e.step);
        Ok(())
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn level_ledger(&self, level: Level) -> StepLedger {
        self.level_ledgers[level.index()]
    }

    pub fn now(&self) -> u64 {
        self.meter.now
    }

    fn bus(&mut self) -> Bus<'_> {
        Bus {
            board: &mut self.board,
            meter: &mut self.meter,
            costs: &self.costs,
        }
    }

    fn sync_service(&mut self, idx: usize) {
        let slot = &mut self.services[idx];
        if slot.access.conveyor.is_some() {
            let mut bus = Bus {
                board: &mut self.board,
                meter: &mut self.meter,
                costs: &self.costs,
            };
            slot.access.dma_sync(&mut bus, &mut slot.instance.memory);
        }
    }

    /// One DMA synchronization of every conveyor.
    pub fn dma_sync_all(&mut self) {
        for i in 0..self.services.len() {
            self.sync_service(i);
        }
    }

    /// Entering or leaving a service invocation crosses into user space
    /// when the runtime is untrusted.
    fn transition(&mut self, service: usize) {
        if self.services[service].access.trust == TrustMode::Untrusted {
            self.meter.charge(Category::ContextSwitch, self.costs.context_switch as u64);
        }
    }

    fn retire(&mut self) {
        self.retired += 1;
        if self.retired >= self.costs.dma_period {
            self.retired = 0;
            self.dma_sync_all();
        }
    }

    /// Runs an export of one service to completion outside the level
    /// machine (no interrupts are taken). DMA synchronizes as usual.
    pub fn call(&mut self, service: usize, func: FuncRef<'_>, args: &[i32]) -> Result<Vec<i32>, MachineError> {
        let mut exec = Execution::new(&self.services[service].instance, func, args)?;
        self.transition(service);
        loop {
            let status = step_exec(
                &mut exec,
                &mut self.services[service],
                service,
                &mut self.board,
                &mut self.meter,
                &self.costs,
                &mut self.irq,
                self.max_copies,
            );
            self.retire();
            let status = match status {
                Ok(s) => s,
                Err(trap) => {
                    self.transition(service);
                    return Err(trap.into());
                }
            };
            if let Status::Finished(v) = status {
                self.transition(service);
                self.sync_service(service);
                return Ok(v);
            }
            if self.meter.now > self.step_limit {
                return Err(MachineError::StepLimit(self.step_limit));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn log(
        &mut self,
        level: Option<Level>,
        service: Option<usize>,
        event: TraceEvent,
        flow: Option<(u64, FlowKind)>,
        pending: Option<u64>,
        label: Option<String>,
        values: Vec<(u32, u32)>,
    ) {
        self.trace.push(TraceEntry {
            step: self.meter.now,
            level,
            service: service.map(|s| self.services[s].id.clone()),
            event,
            flow: flow.map(|f| f.0),
            kind: flow.map(|f| f.1),
            pending,
            label,
            values,
        });
    }

    fn new_flow(&mut self) -> Flow {
        self.next_flow += 1;
        Flow {
            id: self.next_flow,
            suspended: false,
        }
    }

    fn raise(&mut self, label: &str, arrival: u64) {
        let line = self.desc.interrupt(label).map_or(0, |i| i.line);
        let id = self.next_pending;
        self.next_pending += 1;
        self.log(None, None, TraceEvent::Raise, None, Some(id), Some(label.to_owned()), vec![]);
        self.e1.push_back(PendingInterrupt {
            id,
            line,
            label: label.to_owned(),
            arrival_step: arrival,
            buffered: Vec::new(),
        });
    }

    fn apply_due_events(&mut self) {
        while self.events.front().is_some_and(|e| e.step <= self.meter.now) {
            let e = self.events.pop_front().unwrap();
            match e.kind {
                EventKind::Raise(label) => self.raise(&label, e.step),
                EventKind::SetRegister(label, value) => {
                    let r = self.desc.register(&label).expect("validated at schedule time");
                    let (addr, width) = (r.phys_addr, r.width);
                    self.board.bus_write(addr, width, value, self.meter.now, Origin::External);
                    self.log(None, None, TraceEvent::SetRegister, None, None, Some(label), vec![(addr, value)]);
                }
            }
        }
    }

    fn collect_irqs(&mut self) {
        self.board.settle(self.meter.now);
        for irq in self.board.take_irqs() {
            self.raise(&irq.label, irq.step);
        }
    }

    fn highest(&self) -> Option<Level> {
        if !self.e1.is_empty() {
            Some(Level::E1)
        } else if !self.ehalf.is_empty() {
            Some(Level::EHalf)
        } else if self.active_q.is_some() || !self.equarter.is_empty() {
            Some(Level::EQuarter)
        } else if self.active_main.is_some() || self.next_mainline().is_some() {
            Some(Level::E0)
        } else {
            None
        }
    }

    fn next_mainline(&self) -> Option<usize> {
        (self.next_main..self.services.len()).find(|i| self.services[*i].entry.is_some())
    }

    /// Marks every active flow below `level` as suspended.
    fn preempt_below(&mut self, level: Level) {
        let mut events = Vec::new();
        if level > Level::EHalf {
            if let Some(f) = self.ehalf_flow.as_mut().filter(|f| !f.suspended) {
                f.suspended = true;
                let t = self.ehalf.front().expect("flow without task");
                events.push((Level::EHalf, None, (f.id, t.kind), Some(t.pending.id), None));
            }
        }
        if level > Level::EQuarter {
            if let Some(a) = self.active_q.as_mut().filter(|a| !a.flow.suspended) {
                a.flow.suspended = true;
                events.push((Level::EQuarter, Some(a.service), (a.flow.id, FlowKind::WasmEpilogue), a.pending, a.label.clone()));
            }
        }
        if level > Level::E0 {
            if let Some(a) = self.active_main.as_mut().filter(|a| !a.flow.suspended) {
                a.flow.suspended = true;
                events.push((Level::E0, Some(a.service), (a.flow.id, FlowKind::Mainline), None, None));
            }
        }
        for (lvl, svc, flow, pending, label) in events {
            self.log(Some(lvl), svc, TraceEvent::Suspend, Some(flow), pending, label, vec![]);
        }
    }

    /// Runs the level machine until no level has work and no event is due.
    pub fn run_until_idle(&mut self) -> Result<(), MachineError> {
        loop {
            if self.meter.now > self.step_limit {
                return Err(MachineError::StepLimit(self.step_limit));
            }
            self.apply_due_events();
            self.collect_irqs();
            let Some(level) = self.highest() else {
                let next = [self.events.front().map(|e| e.step), self.board.next_event()]
                    .into_iter()
                    .flatten()
                    .min();
                match next {
                    Some(t) => {
                        self.meter.now = self.meter.now.max(t);
                        continue;
                    }
                    None => break,
                }
            };
            self.preempt_below(level);
            let before = self.meter.ledger;
            match level {
                Level::E1 => self.run_prologue(),
                Level::EHalf => self.step_half(),
                Level::EQuarter => self.step_quarter(),
                Level::E0 => self.step_main(),
            }
            self.level_ledgers[level.index()] += self.meter.ledger - before;
        }
        self.dma_sync_all();
        Ok(())
    }

    fn run_prologue(&mut self) {
        let mut p = self.e1.pop_front().expect("no prologue pending");
        let flow = (self.new_flow().id, FlowKind::Prologue);
        self.log(Some(Level::E1), None, TraceEvent::Begin, Some(flow), Some(p.id), Some(p.label.clone()), vec![]);
        self.meter.charge(Category::Driver, self.costs.irq_entry as u64);

        let mut sources = Vec::new();
        let mut n_copies = 0u64;
        for s in self.irq.subscribers(&p.label) {
            let access = &self.services[s.service].access;
            for c in &s.copies {
                n_copies += 1;
                if let Some(i) = access.resolved.binding_index(&c.source) {
                    let b = access.resolved.bindings[i].clone();
                    if !sources.iter().any(|x: &crate::platform::Binding| x.phys_addr == b.phys_addr) {
                        sources.push(b);
                    }
                }
            }
        }
        for b in sources {
            let v = self.bus().masked_read(&b);
            p.buffered.push((b.phys_addr, v));
        }
        if let Some(ClearAction::Write { register, value }) = self.desc.interrupt(&p.label).map(|i| i.clear.clone()) {
            if let Some(r) = self.desc.register(&register) {
                let (addr, width) = (r.phys_addr, r.width);
                self.bus().register_write(addr, width, value);
            }
        }
        if let Some(steps) = self.firmware.get(&p.label) {
            self.ehalf.push_back(HalfTask {
                kind: FlowKind::Firmware,
                pending: p.clone(),
                remaining: *steps as u64,
            });
        }
        let remaining = self.costs.epilogue_dispatch as u64 + self.costs.copy_item as u64 * n_copies;
        let (id, label) = (p.id, p.label.clone());
        self.ehalf.push_back(HalfTask {
            kind: FlowKind::SystemEpilogue,
            pending: p,
            remaining,
        });
        self.log(Some(Level::E1), None, TraceEvent::End, Some(flow), Some(id), Some(label), vec![]);
    }

    fn step_half(&mut self) {
        let (kind, pid, label) = {
            let t = self.ehalf.front().expect("no half task");
            (t.kind, t.pending.id, t.pending.label.clone())
        };
        match self.ehalf_flow {
            None => {
                let f = self.new_flow();
                self.ehalf_flow = Some(f);
                self.log(Some(Level::EHalf), None, TraceEvent::Begin, Some((f.id, kind)), Some(pid), Some(label.clone()), vec![]);
            }
            Some(ref mut f) if f.suspended => {
                f.suspended = false;
                let id = f.id;
                self.log(Some(Level::EHalf), None, TraceEvent::Resume, Some((id, kind)), Some(pid), Some(label.clone()), vec![]);
            }
            _ => {}
        }
        let t = self.ehalf.front_mut().unwrap();
        if t.remaining > 0 {
            t.remaining -= 1;
            self.meter.charge(Category::Driver, 1);
            if self.ehalf.front().unwrap().remaining > 0 {
                return;
            }
        }
        let task = self.ehalf.pop_front().unwrap();
        let flow = (self.ehalf_flow.take().unwrap().id, kind);
        if kind == FlowKind::SystemEpilogue {
            self.system_epilogue_done(&task.pending, flow);
        }
        self.log(Some(Level::EHalf), None, TraceEvent::End, Some(flow), Some(pid), Some(label), vec![]);
    }

    fn system_epilogue_done(&mut self, p: &PendingInterrupt, flow: (u64, FlowKind)) {
        let subs: Vec<Subscription> = self.irq.subscribers(&p.label).into_iter().cloned().collect();
        if subs.is_empty() {
            self.log(Some(Level::EHalf), None, TraceEvent::Drop, Some(flow), Some(p.id), Some(p.label.clone()), vec![]);
            return;
        }
        for s in subs {
            let access = &self.services[s.service].access;
            let snapshot = s
                .copies
                .iter()
                .map(|c| {
                    let addr = access
                        .resolved
                        .binding_index(&c.source)
                        .map(|i| access.resolved.bindings[i].phys_addr);
                    let value = addr.and_then(|a| p.buffered_value(a)).unwrap_or(0) & width_mask(c.width);
                    SnapshotItem {
                        dest: c.dest,
                        value,
                        width: c.width,
                    }
                })
                .collect();
            self.equarter.push_back(WasmEpilogueEntry {
                pending: p.id,
                label: p.label.clone(),
                service: s.service,
                func: s.func,
                priority: s.priority,
                seq: s.seq,
                snapshot,
            });
        }
    }

    fn dispatch_quarter(&mut self) {
        let e = self.equarter.pop_front().unwrap();
        self.meter.charge(Category::Driver, self.costs.env_setup as u64);
        let slot = &mut self.services[e.service];
        if slot.access.mode.is_mmio() {
            let pairs = e.snapshot.iter().map(|s| (s.dest, s.value)).collect();
            slot.access.set_snapshot(&mut slot.instance.memory, pairs);
        } else {
            for s in &e.snapshot {
                if let Some(dst) = slot.instance.memory.data_slice_mut(s.dest, s.width as u32) {
                    dst.copy_from_slice(&s.value.to_le_bytes()[..s.width as usize]);
                }
            }
        }
        let flow = self.new_flow();
        let fk = (flow.id, FlowKind::WasmEpilogue);
        let label = Some(e.label.clone());
        self.log(Some(Level::EQuarter), Some(e.service), TraceEvent::Begin, Some(fk), Some(e.pending), label.clone(), vec![]);
        let values = e.snapshot.iter().map(|s| (s.dest, s.value)).collect();
        self.log(Some(Level::EQuarter), Some(e.service), TraceEvent::Snapshot, Some(fk), Some(e.pending), label.clone(), values);
        match Execution::new(&self.services[e.service].instance, FuncRef::Index(e.func), &[]) {
            Ok(exec) => {
                self.transition(e.service);
                self.active_q = Some(ActiveWasm {
                    flow,
                    service: e.service,
                    exec,
                    pending: Some(e.pending),
                    label,
                })
            }
            Err(err) => {
                self.services[e.service].access.clear_snapshot();
                self.log(Some(Level::EQuarter), Some(e.service), TraceEvent::Trap, Some(fk), Some(e.pending), Some(err.to_string()), vec![]);
            }
        }
    }

    fn step_quarter(&mut self) {
        if self.active_q.is_none() {
            self.dispatch_quarter();
            return;
        }
        self.step_active(Level::EQuarter);
    }

    fn step_main(&mut self) {
        if self.active_main.is_none() {
            let idx = self.next_mainline().expect("no mainline");
            self.next_main = idx + 1;
            let flow = self.new_flow();
            let fk = (flow.id, FlowKind::Mainline);
            self.log(Some(Level::E0), Some(idx), TraceEvent::Begin, Some(fk), None, None, vec![]);
            let entry = self.services[idx].entry.clone().unwrap();
            match Execution::new(&self.services[idx].instance, FuncRef::Export(&entry), &[]) {
                Ok(exec) => {
                    self.transition(idx);
                    self.active_main = Some(ActiveWasm {
                        flow,
                        service: idx,
                        exec,
                        pending: None,
                        label: None,
                    })
                }
                Err(err) => self.log(Some(Level::E0), Some(idx), TraceEvent::Trap, Some(fk), None, Some(err.to_string()), vec![]),
            }
            return;
        }
        self.step_active(Level::E0);
    }

    fn step_active(&mut self, level: Level) {
        let kind = if level == Level::E0 { FlowKind::Mainline } else { FlowKind::WasmEpilogue };
        let active = match level {
            Level::E0 => self.active_main.as_mut(),
            _ => self.active_q.as_mut(),
        }
        .unwrap();
        let fk = (active.flow.id, kind);
        let (svc, pending, label) = (active.service, active.pending, active.label.clone());
        if active.flow.suspended {
            active.flow.suspended = false;
            self.log(Some(level), Some(svc), TraceEvent::Resume, Some(fk), pending, label.clone(), vec![]);
        }
        let active = match level {
            Level::E0 => self.active_main.as_mut(),
            _ => self.active_q.as_mut(),
        }
        .unwrap();
        let status = step_exec(
            &mut active.exec,
            &mut self.services[svc],
            svc,
            &mut self.board,
            &mut self.meter,
            &self.costs,
            &mut self.irq,
            self.max_copies,
        );
        self.retire();
        let ended = match status {
            Ok(Status::Running) => None,
            Ok(Status::Finished(_)) => Some((TraceEvent::End, label)),
            Err(trap) => Some((TraceEvent::Trap, Some(trap.to_string()))),
        };
        if let Some((event, detail)) = ended {
            self.transition(svc);
            match level {
                Level::E0 => self.active_main = None,
                _ => {
                    self.active_q = None;
                    self.services[svc].access.clear_snapshot();
                }
            }
            self.sync_service(svc);
            self.log(Some(level), Some(svc), event, Some(fk), pending, detail, vec![]);
        }
    }
}
