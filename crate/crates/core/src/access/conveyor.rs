//! Conveyor memory: one slot per bound register, placed directly above the
//! linear memory and kept in step with the registers by a simulated DMA
//! controller.

use super::{Bus, Category};
use crate::platform::Binding;
use crate::wasm::LinearMemory;

/// Slots are word-aligned regardless of register width.
pub const SLOT_BYTES: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConveyorSlot {
    /// Byte offset from the conveyor base.
    pub offset: u32,
    pub binding: usize,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conveyor {
    /// Index of the first conveyor byte (the linear memory size).
    pub base: u32,
    pub slots: Vec<ConveyorSlot>,
    /// Slot contents as of the last synchronization.
    shadow: Vec<u32>,
    frozen: Vec<bool>,
    primed: bool,
}

impl Conveyor {
    pub fn len_for(bindings: usize) -> u32 {
        bindings as u32 * SLOT_BYTES
    }

    /// Slots in binding order.
    pub fn for_bindings(base: u32, bindings: &[Binding]) -> Self {
        let slots = bindings
            .iter()
            .enumerate()
            .map(|(i, b)| ConveyorSlot {
                offset: i as u32 * SLOT_BYTES,
                binding: i,
                width: b.width,
            })
            .collect();
        Self {
            base,
            slots,
            shadow: vec![0; bindings.len()],
            frozen: vec![false; bindings.len()],
            primed: false,
        }
    }

    pub fn len(&self) -> u32 {
        Self::len_for(self.slots.len())
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Linear-memory index of the slot for `binding`.
    pub fn addr_of(&self, binding: usize) -> u32 {
        self.base + self.slots[binding].offset
    }

    pub fn load(&self, mem: &LinearMemory, binding: usize) -> u32 {
        let s = self.slots[binding];
        mem.read(self.base + s.offset, s.width as u32).expect("conveyor slot outside memory")
    }

    pub fn store(&self, mem: &mut LinearMemory, binding: usize, value: u32) {
        let s = self.slots[binding];
        assert!(mem.write(self.base + s.offset, s.width as u32, value));
    }

    /// Pins a slot to `value` until `thaw`; the register is not written.
    pub fn freeze(&mut self, mem: &mut LinearMemory, binding: usize, value: u32) {
        self.store(mem, binding, value);
        self.shadow[binding] = self.load(mem, binding);
        self.frozen[binding] = true;
    }

    pub fn thaw(&mut self) {
        self.frozen.iter_mut().for_each(|f| *f = false);
    }

    /// Pushes slots changed by the service to their registers, then refreshes
    /// every unfrozen slot from its register, so after a sync each slot holds
    /// what its register holds.
    pub fn sync(&mut self, bus: &mut Bus, mem: &mut LinearMemory, bindings: &[Binding]) {
        if self.primed {
            for i in 0..self.slots.len() {
                bus.charge(Category::Dma, bus.costs.dma_slot);
                let cur = self.load(mem, i);
                if cur != self.shadow[i] {
                    bus.dma_write(&bindings[i], cur);
                }
            }
        }
        for i in 0..self.slots.len() {
            if self.frozen[i] {
                continue;
            }
            bus.charge(Category::Dma, bus.costs.dma_slot);
            let v = bus.dma_read(&bindings[i]);
            self.store(mem, i, v);
            self.shadow[i] = self.load(mem, i);
        }
        self.primed = true;
    }
}
