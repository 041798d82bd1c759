//! GPIO bank: input data register at +0x10, output data register at +0x14.

pub const IDR: u32 = 0x10;
pub const ODR: u32 = 0x14;
pub const FOOTPRINT: u32 = 0x18;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PinEdge {
    pub step: u64,
    pub pin: u8,
    pub high: bool,
}

#[derive(Debug, Clone)]
pub struct GpioBank {
    pins: u8,
    odr: u32,
    idr: u32,
    edges: Vec<PinEdge>,
}

impl GpioBank {
    pub fn new(pins: u8) -> Self {
        assert!((1..=32).contains(&pins));
        Self {
            pins,
            odr: 0,
            idr: 0,
            edges: Vec::new(),
        }
    }

    fn pin_mask(&self) -> u32 {
        if self.pins == 32 {
            u32::MAX
        } else {
            (1 << self.pins) - 1
        }
    }

    pub fn read(&self, offset: u32) -> Option<u32> {
        match offset {
            IDR => Some(self.idr),
            ODR => Some(self.odr),
            _ => None,
        }
    }

    /// Returns false for offsets the bank does not decode.
    pub fn write(&mut self, offset: u32, value: u32, now: u64) -> bool {
        match offset {
            ODR => {
                let new = value & self.pin_mask();
                let changed = self.odr ^ new;
                for pin in 0..self.pins {
                    if changed >> pin & 1 == 1 {
                        self.edges.push(PinEdge {
                            step: now,
                            pin,
                            high: new >> pin & 1 == 1,
                        });
                    }
                }
                self.odr = new;
                true
            }
            // Inputs are driven from outside the chip.
            IDR => true,
            _ => false,
        }
    }

    /// Observed level of an output pin.
    pub fn pin(&self, pin: u8) -> bool {
        pin < self.pins && self.odr >> pin & 1 == 1
    }

    pub fn drive_input(&mut self, pin: u8, high: bool) {
        if pin < self.pins {
            self.idr = (self.idr & !(1 << pin)) | ((high as u32) << pin);
        }
    }

    pub fn edges(&self) -> &[PinEdge] {
        &self.edges
    }

    pub fn pin_count(&self) -> u8 {
        self.pins
    }
}
