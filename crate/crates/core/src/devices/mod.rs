//! Simulated peripherals behind a register bus.

pub mod gpio;
pub mod spi;
pub mod timer;

use std::collections::BTreeMap;

pub use gpio::{GpioBank, PinEdge};
pub use spi::{spi_effective_rate, IncompleteTransfer, SpiController, WireWord};
pub use timer::TimerDevice;

use crate::platform::{DriverKind, PlatformDescription};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Cpu,
    Dma,
    /// Stimulus from outside the chip (scenario events, test probes).
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BusOp {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BusEvent {
    pub step: u64,
    pub addr: u32,
    pub op: BusOp,
    pub origin: Origin,
    pub value: u32,
}

/// Which events the register file keeps. Writes are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TracePolicy {
    pub reads: bool,
    pub dma_reads: bool,
}

impl Default for TracePolicy {
    fn default() -> Self {
        Self {
            reads: true,
            dma_reads: false,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DeviceModel {
    Gpio(GpioBank),
    Spi(SpiController),
    Timer(TimerDevice),
}

#[derive(Debug, Clone)]
pub struct Mounted {
    pub label: String,
    pub base: u32,
    pub footprint: u32,
    pub irq: Option<String>,
    pub model: DeviceModel,
    /// Offsets inside the block the model does not decode.
    spare: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaisedIrq {
    pub label: String,
    pub step: u64,
}

/// The bus: device register blocks plus plain cells for every other exposed
/// register. Accessing any other address is a host fault.
#[derive(Debug, Clone, Default)]
pub struct RegisterFile {
    cells: BTreeMap<u32, (u32, u8)>,
    devices: Vec<Mounted>,
    trace: Vec<BusEvent>,
    policy: TracePolicy,
    raised: Vec<RaisedIrq>,
    settled: u64,
}

fn truncate(value: u32, width: u8) -> u32 {
    match width {
        1 => value & 0xff,
        2 => value & 0xffff,
        _ => value,
    }
}

impl RegisterFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_platform(desc: &PlatformDescription) -> Self {
        let mut rf = Self::new();
        for d in &desc.devices {
            let model = match d.kind {
                DriverKind::Gpio => DeviceModel::Gpio(GpioBank::new(d.param_u32("pins").unwrap_or(16) as u8)),
                DriverKind::Spi => DeviceModel::Spi(SpiController::new(d.param_u32("divider").unwrap_or(2))),
                DriverKind::Timer => DeviceModel::Timer(TimerDevice::new(d.param_u32("compare"))),
            };
            rf.mount(&d.label, d.base(), d.irq().map(str::to_owned), model);
        }
        for r in &desc.registers {
            if rf.device_at(r.phys_addr).is_none() {
                rf.add_cell(r.phys_addr, r.width, 0);
            }
        }
        rf
    }

    pub fn mount(&mut self, label: &str, base: u32, irq: Option<String>, model: DeviceModel) {
        let footprint = match model {
            DeviceModel::Gpio(_) => gpio::FOOTPRINT,
            DeviceModel::Spi(_) => spi::FOOTPRINT,
            DeviceModel::Timer(_) => timer::FOOTPRINT,
        };
        self.devices.push(Mounted {
            label: label.to_owned(),
            base,
            footprint,
            irq,
            model,
            spare: BTreeMap::new(),
        });
    }

    pub fn add_cell(&mut self, addr: u32, width: u8, value: u32) {
        self.cells.insert(addr, (truncate(value, width), width));
    }

    pub fn set_policy(&mut self, policy: TracePolicy) {
        self.policy = policy;
    }

    fn device_at(&self, addr: u32) -> Option<usize> {
        self.devices
            .iter()
            .position(|d| addr >= d.base && ((addr - d.base) as u64) < d.footprint as u64)
    }

    /// Brings every device up to `now` and collects the interrupts it raised.
    pub fn settle(&mut self, now: u64) {
        for d in &mut self.devices {
            let fired = match &mut d.model {
                DeviceModel::Gpio(_) => Vec::new(),
                DeviceModel::Spi(s) => {
                    s.settle(now);
                    s.take_completions()
                }
                DeviceModel::Timer(t) => {
                    t.settle(now);
                    t.take_fired()
                }
            };
            if let Some(label) = &d.irq {
                self.raised.extend(fired.into_iter().map(|step| RaisedIrq {
                    label: label.clone(),
                    step,
                }));
            }
        }
        self.settled = now;
    }

    /// Earliest future step at which a device changes state on its own.
    pub fn next_event(&self) -> Option<u64> {
        self.devices
            .iter()
            .filter_map(|d| match &d.model {
                DeviceModel::Gpio(_) => None,
                DeviceModel::Spi(s) => s.next_event(),
                DeviceModel::Timer(t) => t.next_event(),
            })
            .min()
    }

    pub fn take_irqs(&mut self) -> Vec<RaisedIrq> {
        std::mem::take(&mut self.raised)
    }

    /// Side-effect-free read used for masking and inspection.
    pub fn peek(&self, addr: u32, width: u8, now: u64) -> u32 {
        let raw = if let Some(i) = self.device_at(addr) {
            let d = &self.devices[i];
            let off = addr - d.base;
            let decoded = match &d.model {
                DeviceModel::Gpio(g) => g.read(off),
                DeviceModel::Spi(s) => s.read(off),
                DeviceModel::Timer(t) => t.read(off, now),
            };
            decoded.unwrap_or_else(|| d.spare.get(&off).copied().unwrap_or(0))
        } else {
            match self.cells.get(&addr) {
                Some((v, _)) => *v,
                None => panic!("bus fault: read of unmapped address {addr:#010x}"),
            }
        };
        truncate(raw, width)
    }

    fn store(&mut self, addr: u32, width: u8, value: u32, now: u64) {
        let value = truncate(value, width);
        if let Some(i) = self.device_at(addr) {
            let d = &mut self.devices[i];
            let off = addr - d.base;
            let decoded = match &mut d.model {
                DeviceModel::Gpio(g) => g.write(off, value, now),
                DeviceModel::Spi(s) => s.write(off, value, now),
                DeviceModel::Timer(t) => t.write(off, value, now),
            };
            if !decoded {
                d.spare.insert(off, value);
            }
        } else {
            match self.cells.get_mut(&addr) {
                Some(cell) => cell.0 = truncate(value, cell.1),
                None => panic!("bus fault: write of unmapped address {addr:#010x}"),
            }
        }
    }

    pub fn bus_read(&mut self, addr: u32, width: u8, now: u64, origin: Origin) -> u32 {
        self.settle(now);
        let value = self.peek(addr, width, now);
        let keep = match origin {
            Origin::Dma => self.policy.dma_reads,
            _ => self.policy.reads,
        };
        if keep {
            self.trace.push(BusEvent {
                step: now,
                addr,
                op: BusOp::Read,
                origin,
                value,
            });
        }
        value
    }

    pub fn bus_write(&mut self, addr: u32, width: u8, value: u32, now: u64, origin: Origin) {
        self.settle(now);
        self.store(addr, width, value, now);
        self.trace.push(BusEvent {
            step: now,
            addr,
            op: BusOp::Write,
            origin,
            value: truncate(value, width),
        });
    }

    /// One bus write of `(reg & !mask) | (value & mask)`.
    pub fn write_masked(&mut self, addr: u32, width: u8, value: u32, mask: u32, now: u64, origin: Origin) {
        self.settle(now);
        let merged = (self.peek(addr, width, now) & !mask) | (value & mask);
        self.bus_write(addr, width, merged, now, origin);
    }

    pub fn trace(&self) -> &[BusEvent] {
        &self.trace
    }

    pub fn clear_trace(&mut self) {
        self.trace.clear();
    }

    pub fn device(&self, label: &str) -> Option<&Mounted> {
        self.devices.iter().find(|d| d.label == label)
    }

    pub fn device_mut(&mut self, label: &str) -> Option<&mut Mounted> {
        self.devices.iter_mut().find(|d| d.label == label)
    }

    pub fn gpio(&self, label: &str) -> Option<&GpioBank> {
        match &self.device(label)?.model {
            DeviceModel::Gpio(g) => Some(g),
            _ => None,
        }
    }

    pub fn spi(&self, label: &str) -> Option<&SpiController> {
        match &self.device(label)?.model {
            DeviceModel::Spi(s) => Some(s),
            _ => None,
        }
    }

    pub fn timer(&self, label: &str) -> Option<&TimerDevice> {
        match &self.device(label)?.model {
            DeviceModel::Timer(t) => Some(t),
            _ => None,
        }
    }
}
