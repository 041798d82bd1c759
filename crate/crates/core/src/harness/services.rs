//! Service binaries used by the measurement scenarios, generated per access
//! mode. Each one imports the full `env` interface so one linker fits all.

use crate::access::{imports, osapi_op, AccessMode};
use crate::devices::spi;
use crate::manifest::{
    encode_requirements, CopyDescriptor, DeviceRequirement, InterruptSubscription, PeripheralRequirements,
    RegisterRequirement, SECTION_NAME,
};
use crate::wasm::{emit_module, BinOp, Instr, LoadKind, MemArg, ModuleBuilder, StoreKind};

/// First byte used for label strings.
const LABEL_BASE: u32 = 0x100;
/// RAPI/OSAPI snapshot destination in linear memory.
pub const SNAPSHOT_DEST: u32 = 0x200;
/// Where interrupt handlers record the value they observed.
pub const OBSERVED_ADDR: u32 = 0x300;
/// Handler invocation counter.
pub const HANDLER_COUNT_ADDR: u32 = 0x304;
/// SPI payload location.
pub const SPI_DATA: u32 = 0x400;
pub const SPI_WORDS: u32 = 512;
/// First dummy address handed out by the generators.
pub const DUMMY_BASE: u32 = 0x8000_0000;

/// Labels and pin the measurement scenarios use on a board.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoardLabels {
    pub service: String,
    /// Register whose mask selects the measurement pin.
    pub meas_register: String,
    pub gpio: String,
    pub timer_irq: String,
    pub sensor: String,
    pub spi: String,
    pub spi_dr: String,
    pub spi_sr: String,
}

impl Default for BoardLabels {
    fn default() -> Self {
        Self {
            service: "svc".into(),
            meas_register: "meas_odr".into(),
            gpio: "gpioa".into(),
            timer_irq: "tim2_irq".into(),
            sensor: "sensor_data".into(),
            spi: "spi1".into(),
            spi_dr: "spi1_dr".into(),
            spi_sr: "spi1_sr".into(),
        }
    }
}

fn import_index(id: crate::wasm::HostFuncId) -> u32 {
    imports::TABLE.iter().position(|t| t.1 == id).unwrap() as u32
}

/// A register as a generated service refers to it.
#[derive(Debug, Clone, Copy)]
struct Reg {
    dummy: u32,
    /// Global holding the RAPI handle.
    handle: u32,
}

struct Gen {
    b: ModuleBuilder,
    mode: AccessMode,
    req: PeripheralRequirements,
    next_label: u32,
    setup: Vec<Instr>,
}

impl Gen {
    fn new(mode: AccessMode) -> Self {
        let mut b = ModuleBuilder::new();
        for (field, _, params, results) in imports::TABLE {
            b.import(imports::MODULE, field, params, results);
        }
        b.memory(1);
        Self {
            b,
            mode,
            req: PeripheralRequirements::default(),
            next_label: LABEL_BASE,
            setup: Vec::new(),
        }
    }

    fn label(&mut self, s: &str) -> (u32, u32) {
        let ptr = self.next_label;
        self.b.data(ptr, s.as_bytes().to_vec());
        self.next_label += s.len() as u32;
        (ptr, s.len() as u32)
    }

    fn register(&mut self, label: &str) -> Reg {
        let dummy = DUMMY_BASE + 0x10 * self.req.registers.len() as u32;
        self.req.registers.push(RegisterRequirement {
            label: label.into(),
            dummy_addr: dummy,
            width: 4,
        });
        let handle = self.b.global(true, -1);
        let l = self.label(label);
        if self.mode.is_rapi() {
            self.setup.extend([
                Instr::I32Const(l.0 as i32),
                Instr::I32Const(l.1 as i32),
                Instr::Call(import_index(imports::RAPI_HANDLE)),
                Instr::GlobalSet(handle),
            ]);
        }
        Reg { dummy, handle }
    }

    /// Global holding an OSAPI device handle.
    fn device(&mut self, label: &str) -> u32 {
        self.req.devices.push(DeviceRequirement { label: label.into() });
        let g = self.b.global(true, -1);
        let (ptr, len) = self.label(label);
        self.setup.extend([
            Instr::I32Const(ptr as i32),
            Instr::I32Const(len as i32),
            Instr::Call(import_index(imports::DEVICE_HANDLE)),
            Instr::GlobalSet(g),
        ]);
        g
    }

    fn write(&self, r: Reg, value: &[Instr]) -> Vec<Instr> {
        let mut v = Vec::new();
        if self.mode.is_rapi() {
            v.push(Instr::GlobalGet(r.handle));
            v.extend_from_slice(value);
            v.extend([Instr::Call(import_index(imports::RAPI_WRITE)), Instr::Drop]);
        } else {
            v.push(Instr::I32Const(r.dummy as i32));
            v.extend_from_slice(value);
            v.push(Instr::Store(StoreKind::I32, MemArg::offset(0)));
        }
        v
    }

    fn read(&self, r: Reg) -> Vec<Instr> {
        if self.mode.is_rapi() {
            vec![Instr::GlobalGet(r.handle), Instr::Call(import_index(imports::RAPI_READ))]
        } else {
            vec![Instr::I32Const(r.dummy as i32), Instr::Load(LoadKind::I32, MemArg::offset(0))]
        }
    }

    fn gpio_set(&self, dev: u32, pin: u32, level: bool) -> Vec<Instr> {
        vec![
            Instr::GlobalGet(dev),
            Instr::I32Const(osapi_op::GPIO_SET),
            Instr::I32Const(pin as i32),
            Instr::I32Const(level as i32),
            Instr::I32Const(0),
            Instr::Call(import_index(imports::OSAPI_CALL)),
            Instr::Drop,
        ]
    }

    fn func(&mut self, name: &str, mut body: Vec<Instr>) -> u32 {
        body.push(Instr::End);
        self.b.func(name, 0, 0, 0, body)
    }

    fn finish(mut self) -> Vec<u8> {
        let mut setup = std::mem::take(&mut self.setup);
        setup.push(Instr::End);
        self.b.func("setup", 0, 0, 0, setup);
        let payload = encode_requirements(&self.req).expect("generated requirements are valid");
        self.b.custom(SECTION_NAME, payload);
        emit_module(&self.b.build()).expect("generated module is well formed")
    }
}

/// Pin-toggle service: `setup` acquires handles, `set` drives the pin high
/// with a single I/O operation, `reset` drives it low.
pub fn gpio_service(mode: AccessMode, labels: &BoardLabels, pin: u32) -> Vec<u8> {
    let mut g = Gen::new(mode);
    if mode == AccessMode::Osapi {
        let dev = g.device(&labels.gpio);
        let set = g.gpio_set(dev, pin, true);
        let reset = g.gpio_set(dev, pin, false);
        g.func("set", set);
        g.func("reset", reset);
    } else {
        let r = g.register(&labels.meas_register);
        let set = g.write(r, &[Instr::I32Const((1u32 << pin) as i32)]);
        let reset = g.write(r, &[Instr::I32Const(0)]);
        g.func("set", set);
        g.func("reset", reset);
    }
    g.finish()
}

/// Interrupt service: `main` acquires handles and registers the handler in
/// table slot 0; the handler records its snapshot of the sensor register at
/// [`OBSERVED_ADDR`], bumps [`HANDLER_COUNT_ADDR`] and raises the pin.
pub fn irq_service(mode: AccessMode, labels: &BoardLabels, pin: u32) -> Vec<u8> {
    let mut g = Gen::new(mode);
    let sensor = g.register(&labels.sensor);
    let (observe, raise_pin, dest) = if mode == AccessMode::Osapi {
        let dev = g.device(&labels.gpio);
        let observe = vec![Instr::I32Const(SNAPSHOT_DEST as i32), Instr::Load(LoadKind::I32, MemArg::offset(0))];
        (observe, g.gpio_set(dev, pin, true), SNAPSHOT_DEST)
    } else {
        let meas = g.register(&labels.meas_register);
        let observe = if mode.is_mmio() {
            g.read(sensor)
        } else {
            vec![Instr::I32Const(SNAPSHOT_DEST as i32), Instr::Load(LoadKind::I32, MemArg::offset(0))]
        };
        let dest = if mode.is_mmio() { sensor.dummy } else { SNAPSHOT_DEST };
        (observe, g.write(meas, &[Instr::I32Const((1u32 << pin) as i32)]), dest)
    };
    g.req.interrupts.push(InterruptSubscription {
        label: labels.timer_irq.clone(),
        priority: 0,
        handler: 0,
        copies: vec![CopyDescriptor {
            source: labels.sensor.clone(),
            dest,
            width: 4,
        }],
    });

    let mut handler = vec![Instr::I32Const(OBSERVED_ADDR as i32)];
    handler.extend(observe);
    handler.extend([
        Instr::Store(StoreKind::I32, MemArg::offset(0)),
        Instr::I32Const(HANDLER_COUNT_ADDR as i32),
        Instr::I32Const(HANDLER_COUNT_ADDR as i32),
        Instr::Load(LoadKind::I32, MemArg::offset(0)),
        Instr::I32Const(1),
        Instr::Bin(BinOp::Add),
        Instr::Store(StoreKind::I32, MemArg::offset(0)),
    ]);
    handler.extend(raise_pin);
    handler.push(Instr::End);
    let hf = g.b.internal_func(0, 0, 0, handler);
    g.b.table(1);
    g.b.elements(0, vec![hf]);

    let (ptr, len) = g.label(&labels.timer_irq);
    let mut main = std::mem::take(&mut g.setup);
    main.extend([
        Instr::I32Const(ptr as i32),
        Instr::I32Const(len as i32),
        Instr::I32Const(0),
        Instr::I32Const(0),
        Instr::Call(import_index(imports::IRQ_REGISTER)),
        Instr::Drop,
    ]);
    g.func("main", main);
    g.finish()
}

/// The payload: 512 distinct 16-bit words.
pub fn spi_payload() -> Vec<u16> {
    (0..SPI_WORDS as u16).map(|k| 0x8000 | k).collect()
}

/// SPI writer: `main` sends the payload word by word, waiting for TXE
/// before each write; OSAPI services hand the buffer to the driver.
pub fn spi_service(mode: AccessMode, labels: &BoardLabels) -> Vec<u8> {
    let mut g = Gen::new(mode);
    let bytes: Vec<u8> = spi_payload().iter().flat_map(|w| w.to_le_bytes()).collect();
    g.b.data(SPI_DATA, bytes);
    let mut main;
    if mode == AccessMode::Osapi {
        let dev = g.device(&labels.spi);
        main = std::mem::take(&mut g.setup);
        main.extend([
            Instr::GlobalGet(dev),
            Instr::I32Const(osapi_op::SPI_TRANSFER),
            Instr::I32Const(SPI_DATA as i32),
            Instr::I32Const((SPI_WORDS * 2) as i32),
            Instr::I32Const(0),
            Instr::Call(import_index(imports::OSAPI_CALL)),
            Instr::Drop,
        ]);
    } else {
        let sr = g.register(&labels.spi_sr);
        let dr = g.register(&labels.spi_dr);
        main = std::mem::take(&mut g.setup);
        let mut wait = vec![Instr::Loop(crate::wasm::BlockType::Empty)];
        wait.extend(g.read(sr));
        wait.extend([
            Instr::I32Const(spi::SR_TXE as i32),
            Instr::Bin(BinOp::And),
            Instr::Eqz,
            Instr::BrIf(0),
            Instr::End,
        ]);
        let word = [
            Instr::LocalGet(0),
            Instr::I32Const(1),
            Instr::Bin(BinOp::Shl),
            Instr::Load(LoadKind::I16U, MemArg::offset(SPI_DATA)),
        ];
        main.push(Instr::Loop(crate::wasm::BlockType::Empty));
        main.extend(wait);
        main.extend(g.write(dr, &word));
        main.extend([
            Instr::LocalGet(0),
            Instr::I32Const(1),
            Instr::Bin(BinOp::Add),
            Instr::LocalTee(0),
            Instr::I32Const(SPI_WORDS as i32),
            Instr::Cmp(crate::wasm::CmpOp::LtU),
            Instr::BrIf(0),
            Instr::End,
        ]);
    }
    main.push(Instr::End);
    g.b.func("main", 0, 0, 1, main);
    g.finish()
}
