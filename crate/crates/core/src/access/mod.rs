//! Synchronous register access from services: OSAPI, RAPI, MMIO and their
//! DMA-backed variants, with mask enforcement and step accounting.

pub mod conveyor;
pub mod cost;
pub mod imports;
pub mod ledger;

use std::fmt;
use std::str::FromStr;

pub use conveyor::{Conveyor, ConveyorSlot, SLOT_BYTES};
pub use cost::CostModel;
pub use ledger::{Category, StepLedger};

use crate::devices::{gpio, spi, Origin, RegisterFile};
use crate::platform::{Binding, DriverKind, ResolvedService};
use crate::wasm::{AccessKind, Hook, LinearMemory, MemAccess};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessMode {
    Osapi,
    Rapi,
    Mmio,
    RapiDma,
    MmioDma,
}

impl AccessMode {
    pub const ALL: [AccessMode; 5] = [Self::Osapi, Self::Rapi, Self::Mmio, Self::RapiDma, Self::MmioDma];

    pub fn name(self) -> &'static str {
        match self {
            Self::Osapi => "osapi",
            Self::Rapi => "rapi",
            Self::Mmio => "mmio",
            Self::RapiDma => "rapi_dma",
            Self::MmioDma => "mmio_dma",
        }
    }

    pub fn uses_dma(self) -> bool {
        matches!(self, Self::RapiDma | Self::MmioDma)
    }

    pub fn is_mmio(self) -> bool {
        matches!(self, Self::Mmio | Self::MmioDma)
    }

    pub fn is_rapi(self) -> bool {
        matches!(self, Self::Rapi | Self::RapiDma)
    }

    /// The same mode without DMA.
    pub fn base(self) -> AccessMode {
        match self {
            Self::RapiDma => Self::Rapi,
            Self::MmioDma => Self::Mmio,
            m => m,
        }
    }
}

impl FromStr for AccessMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown access mode `{s}`"))
    }
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrustMode {
    /// Interpreter runs in kernel space.
    Trusted,
    /// Interpreter runs in user space; every kernel entry is a domain transition.
    Untrusted,
}

impl TrustMode {
    pub const ALL: [TrustMode; 2] = [Self::Trusted, Self::Untrusted];

    pub fn name(self) -> &'static str {
        match self {
            Self::Trusted => "trusted",
            Self::Untrusted => "untrusted",
        }
    }
}

impl FromStr for TrustMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown trust mode `{s}`"))
    }
}

impl fmt::Display for TrustMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Simulated clock plus the ledger it is derived from. CPU categories move
/// the clock; DMA work does not.
#[derive(Debug, Clone, Default)]
pub struct Meter {
    pub now: u64,
    pub ledger: StepLedger,
    /// Physical address whose first write is recorded in `probe_hit`.
    pub probe: Option<u32>,
    pub probe_hit: Option<ProbeHit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeHit {
    pub step: u64,
    pub ledger: StepLedger,
}

impl Meter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, category: Category, steps: u64) {
        self.ledger.charge(category, steps);
        if category.occupies_cpu() {
            self.now += steps;
        }
    }

    pub fn watch(&mut self, addr: u32) {
        self.probe = Some(addr);
        self.probe_hit = None;
    }

    fn observe_write(&mut self, addr: u32) {
        if self.probe == Some(addr) && self.probe_hit.is_none() {
            self.probe_hit = Some(ProbeHit {
                step: self.now,
                ledger: self.ledger,
            });
        }
    }
}

/// Everything a host-side access path touches.
pub struct Bus<'a> {
    pub board: &'a mut RegisterFile,
    pub meter: &'a mut Meter,
    pub costs: &'a CostModel,
}

impl Bus<'_> {
    pub fn charge(&mut self, category: Category, steps: u32) {
        self.meter.charge(category, steps as u64);
    }

    fn read_raw(&mut self, addr: u32, width: u8, category: Category, origin: Origin) -> u32 {
        self.charge(category, self.costs.bus_access);
        self.board.bus_read(addr, width, self.meter.now, origin)
    }

    fn write_raw(&mut self, addr: u32, width: u8, value: u32, mask: u32, category: Category, origin: Origin) {
        self.charge(category, self.costs.bus_access);
        self.board.write_masked(addr, width, value, mask, self.meter.now, origin);
        self.meter.observe_write(addr);
    }

    /// Register AND mask; one bus read.
    pub fn masked_read(&mut self, b: &Binding) -> u32 {
        self.read_raw(b.phys_addr, b.width, Category::Driver, Origin::Cpu) & b.mask
    }

    /// `reg <- (reg AND NOT mask) OR (value AND mask)`; one bus write.
    pub fn masked_write(&mut self, b: &Binding, value: u32) {
        self.write_raw(b.phys_addr, b.width, value, b.mask, Category::Driver, Origin::Cpu);
    }

    pub(crate) fn dma_read(&mut self, b: &Binding) -> u32 {
        self.read_raw(b.phys_addr, b.width, Category::Dma, Origin::Dma) & b.mask
    }

    pub(crate) fn dma_write(&mut self, b: &Binding, value: u32) {
        self.write_raw(b.phys_addr, b.width, value, b.mask, Category::Dma, Origin::Dma);
    }

    /// Unmasked driver access to a device register.
    pub fn driver_read(&mut self, addr: u32) -> u32 {
        self.read_raw(addr, 4, Category::Driver, Origin::Cpu)
    }

    pub fn driver_write(&mut self, addr: u32, value: u32, mask: u32) {
        self.write_raw(addr, 4, value, mask, Category::Driver, Origin::Cpu);
    }

    /// Full-width kernel write, e.g. an interrupt clear action.
    pub fn register_write(&mut self, addr: u32, width: u8, value: u32) {
        self.write_raw(addr, width, value, u32::MAX, Category::Driver, Origin::Cpu);
    }
}

/// Operations accepted by `wio_osapi_call`.
pub mod osapi_op {
    /// `gpio_set(pin, level)`
    pub const GPIO_SET: i32 = 0;
    /// `gpio_get(pin)`: input level of the pin.
    pub const GPIO_GET: i32 = 1;
    /// `spi_transfer(offset, len)`: sends `len` bytes of linear memory as
    /// little-endian 16-bit words and returns once the last word is out.
    pub const SPI_TRANSFER: i32 = 2;
}

/// Per-service access state fixed at load time.
#[derive(Debug, Clone)]
pub struct ServiceAccess {
    pub resolved: ResolvedService,
    pub mode: AccessMode,
    pub trust: TrustMode,
    pub conveyor: Option<Conveyor>,
    /// Values served to MMIO reads of these dummy addresses while an
    /// epilogue of this service runs.
    snapshot: Option<Vec<(u32, u32)>>,
}

impl ServiceAccess {
    /// `data_size` is the byte size of the service's linear memory; DMA modes
    /// place the conveyor directly above it.
    pub fn new(resolved: ResolvedService, mode: AccessMode, trust: TrustMode, data_size: u32) -> Self {
        let conveyor = mode
            .uses_dma()
            .then(|| Conveyor::for_bindings(data_size, &resolved.bindings));
        Self {
            resolved,
            mode,
            trust,
            conveyor,
            snapshot: None,
        }
    }

    /// Conveyor bytes a service with these bindings needs in `mode`.
    pub fn conveyor_len(mode: AccessMode, resolved: &ResolvedService) -> u32 {
        if mode.uses_dma() {
            Conveyor::len_for(resolved.bindings.len())
        } else {
            0
        }
    }

    fn enter(&self, bus: &mut Bus) {
        if self.trust == TrustMode::Untrusted {
            bus.charge(Category::ContextSwitch, bus.costs.context_switch);
        }
    }

    fn exit(&self, bus: &mut Bus) {
        self.enter(bus)
    }

    /// Copies the label out of linear memory before anything is checked.
    pub(crate) fn label_bytes(mem: &LinearMemory, ptr: i32, len: i32) -> Option<Vec<u8>> {
        if len < 0 {
            return None;
        }
        let bytes = mem.data_slice(ptr as u32, len as u32)?.to_vec();
        std::str::from_utf8(&bytes).ok()?;
        Some(bytes)
    }

    fn binding(&self, handle: i32) -> Option<&Binding> {
        usize::try_from(handle).ok().and_then(|i| self.resolved.bindings.get(i))
    }

    /// Import-call entry: argument glue plus, for register modes that reach
    /// the kernel, the domain transition.
    pub(crate) fn call_prologue(&self, bus: &mut Bus, kernel: bool) {
        bus.charge(Category::ImportGlue, bus.costs.import_glue);
        if kernel {
            self.enter(bus);
        }
    }

    pub(crate) fn call_epilogue(&self, bus: &mut Bus, kernel: bool) {
        if kernel {
            self.exit(bus);
        }
    }

    pub fn rapi_handle(&self, bus: &mut Bus, mem: &LinearMemory, ptr: i32, len: i32) -> i32 {
        self.call_prologue(bus, true);
        let handle = match Self::label_bytes(mem, ptr, len) {
            Some(label) => {
                let (idx, cmps) = self.resolved.lookup_label(&label);
                bus.charge(Category::WasmioCheck, cmps);
                idx.map_or(-1, |i| i as i32)
            }
            None => -1,
        };
        self.call_epilogue(bus, true);
        handle
    }

    pub fn rapi_read(&self, bus: &mut Bus, mem: &LinearMemory, handle: i32) -> i32 {
        let dma = self.mode.uses_dma();
        self.call_prologue(bus, !dma);
        bus.charge(Category::WasmioCheck, 1);
        let value = match self.binding(handle) {
            None => -1,
            Some(b) => match &self.conveyor {
                Some(c) => (c.load(mem, handle as usize) & b.mask) as i32,
                None => bus.masked_read(b) as i32,
            },
        };
        self.call_epilogue(bus, !dma);
        value
    }

    pub fn rapi_write(&self, bus: &mut Bus, mem: &mut LinearMemory, handle: i32, value: i32) -> i32 {
        let dma = self.mode.uses_dma();
        self.call_prologue(bus, !dma);
        bus.charge(Category::WasmioCheck, 1);
        let status = match self.binding(handle) {
            None => -1,
            Some(b) => {
                match &self.conveyor {
                    Some(c) => c.store(mem, handle as usize, value as u32 & b.mask),
                    None => bus.masked_write(b, value as u32),
                }
                0
            }
        };
        self.call_epilogue(bus, !dma);
        status
    }

    pub fn device_handle(&self, bus: &mut Bus, mem: &LinearMemory, ptr: i32, len: i32) -> i32 {
        self.call_prologue(bus, true);
        let handle = match Self::label_bytes(mem, ptr, len) {
            Some(label) => {
                let pos = self.resolved.devices.iter().position(|d| d.label.as_bytes() == label);
                let cmps = pos.map_or(self.resolved.devices.len(), |p| p + 1);
                bus.charge(Category::WasmioCheck, cmps as u32);
                pos.map_or(-1, |p| p as i32)
            }
            None => -1,
        };
        self.call_epilogue(bus, true);
        handle
    }

    pub fn osapi_call(&self, bus: &mut Bus, mem: &LinearMemory, handle: i32, op: i32, args: [i32; 3]) -> i32 {
        self.call_prologue(bus, true);
        bus.charge(Category::WasmioCheck, 1);
        let device = usize::try_from(handle).ok().and_then(|i| self.resolved.devices.get(i));
        let status = match device {
            None => -1,
            Some(dev) => {
                bus.charge(Category::Driver, bus.costs.osapi_indirection);
                let base = dev.base();
                match (dev.kind, op) {
                    (DriverKind::Gpio, osapi_op::GPIO_SET) => {
                        let pins = dev.param_u32("pins").unwrap_or(16);
                        match u32::try_from(args[0]) {
                            Ok(pin) if pin < pins => {
                                let level = (args[1] != 0) as u32;
                                bus.driver_write(base + gpio::ODR, level << pin, 1 << pin);
                                0
                            }
                            _ => -1,
                        }
                    }
                    (DriverKind::Gpio, osapi_op::GPIO_GET) => {
                        let pins = dev.param_u32("pins").unwrap_or(16);
                        match u32::try_from(args[0]) {
                            Ok(pin) if pin < pins => (bus.driver_read(base + gpio::IDR) >> pin & 1) as i32,
                            _ => -1,
                        }
                    }
                    (DriverKind::Spi, osapi_op::SPI_TRANSFER) => spi_transfer(bus, mem, base, args[0], args[1]),
                    _ => -1,
                }
            }
        };
        self.call_epilogue(bus, true);
        status
    }

    /// Out-of-bounds hook: re-authorizes loads and stores that hit one of the
    /// service's dummy addresses with the exact binding width.
    pub fn mmio_intercept(&self, bus: &mut Bus, access: MemAccess) -> Hook {
        if self.mode != AccessMode::Mmio {
            return Hook::Unhandled;
        }
        let untrusted = self.trust == TrustMode::Untrusted;
        if untrusted {
            bus.charge(Category::ContextSwitch, bus.costs.context_switch);
            bus.charge(Category::ContextSwitch, bus.costs.bookkeeping_copy);
        }
        let (idx, cmps) = self.resolved.lookup_dummy(access.addr);
        bus.charge(Category::WasmioCheck, cmps);
        let hook = match idx.map(|i| &self.resolved.bindings[i]) {
            Some(b) if b.width as u32 == access.width => match access.kind {
                AccessKind::Read => {
                    let snap = self
                        .snapshot
                        .as_ref()
                        .and_then(|s| s.iter().find(|(a, _)| *a == access.addr));
                    match snap {
                        Some((_, v)) => Hook::Handled(*v),
                        None => Hook::Handled(bus.masked_read(b)),
                    }
                }
                AccessKind::Write => {
                    bus.masked_write(b, access.value);
                    Hook::Handled(0)
                }
            },
            _ => Hook::Unhandled,
        };
        if untrusted {
            bus.charge(Category::ContextSwitch, bus.costs.context_switch);
        }
        hook
    }

    /// Installs an epilogue snapshot for MMIO services: `(dest, value)`
    /// pairs where `dest` is a dummy address. DMA services get the value
    /// placed in the matching conveyor slot, frozen until `clear_snapshot`.
    pub fn set_snapshot(&mut self, mem: &mut LinearMemory, values: Vec<(u32, u32)>) {
        if let Some(c) = &mut self.conveyor {
            for (dest, v) in &values {
                if let (Some(i), _) = self.resolved.lookup_dummy(*dest) {
                    c.freeze(mem, i, *v);
                }
            }
        }
        self.snapshot = Some(values);
    }

    pub fn clear_snapshot(&mut self) {
        if let Some(c) = &mut self.conveyor {
            c.thaw();
        }
        self.snapshot = None;
    }

    pub fn dma_sync(&mut self, bus: &mut Bus, mem: &mut LinearMemory) {
        if let Some(c) = &mut self.conveyor {
            c.sync(bus, mem, &self.resolved.bindings);
        }
    }
}

/// Native polling driver: waits for TXE before every word and for the
/// shifter to go idle at the end.
fn spi_transfer(bus: &mut Bus, mem: &LinearMemory, base: u32, offset: i32, len: i32) -> i32 {
    if offset < 0 || len < 0 || len % 2 != 0 {
        return -1;
    }
    let Some(bytes) = mem.data_slice(offset as u32, len as u32) else {
        return -1;
    };
    let words: Vec<u16> = bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    for w in words {
        while bus.driver_read(base + spi::SR) & spi::SR_TXE == 0 {
            bus.charge(Category::Driver, bus.costs.driver_poll);
        }
        bus.driver_write(base + spi::DR, w as u32, u32::MAX);
    }
    while bus.driver_read(base + spi::SR) & spi::SR_BSY != 0 {
        bus.charge(Category::Driver, bus.costs.driver_poll);
    }
    0
}
