//! SPI controller with a one-word transmit buffer and loopback receive.
//!
//! | offset | register | notes                                   |
//! |--------|----------|-----------------------------------------|
//! | 0x00   | CR       | clock divider (power of two, 2..=2048)  |
//! | 0x08   | SR       | bit0 RXNE, bit1 TXE, bit6 OVR, bit7 BSY |
//! | 0x0C   | DR       | 16-bit data                             |
//!
//! A word takes `divider * 16` steps on the wire. Reads have no side
//! effects; RXNE clears when the next word starts shifting.

pub const CR: u32 = 0x00;
pub const SR: u32 = 0x08;
pub const DR: u32 = 0x0c;
pub const FOOTPRINT: u32 = 0x10;

pub const SR_RXNE: u32 = 1 << 0;
pub const SR_TXE: u32 = 1 << 1;
pub const SR_OVR: u32 = 1 << 6;
pub const SR_BSY: u32 = 1 << 7;

pub const WORD_BITS: u32 = 16;

pub fn valid_divider(d: u32) -> bool {
    d.is_power_of_two() && (2..=2048).contains(&d)
}

pub fn cycles_per_word(divider: u32) -> u64 {
    divider as u64 * WORD_BITS as u64
}

/// One word on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireWord {
    pub word: u16,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone)]
pub struct SpiController {
    divider: u32,
    tx_buf: Option<u16>,
    shifting: Option<WireWord>,
    rx: u16,
    rxne: bool,
    ovr: bool,
    wire: Vec<WireWord>,
    /// Completion steps not yet reported as interrupts.
    completions: Vec<u64>,
}

impl SpiController {
    pub fn new(divider: u32) -> Self {
        assert!(valid_divider(divider));
        Self {
            divider,
            tx_buf: None,
            shifting: None,
            rx: 0,
            rxne: false,
            ovr: false,
            wire: Vec::new(),
            completions: Vec::new(),
        }
    }

    pub fn divider(&self) -> u32 {
        self.divider
    }

    pub fn cycles_per_word(&self) -> u64 {
        cycles_per_word(self.divider)
    }

    fn start(&mut self, word: u16, at: u64) {
        self.rxne = false;
        self.shifting = Some(WireWord {
            word,
            start: at,
            end: at + self.cycles_per_word(),
        });
    }

    /// Advances the shifter to `now`.
    pub fn settle(&mut self, now: u64) {
        while let Some(w) = self.shifting {
            if w.end > now {
                break;
            }
            self.wire.push(w);
            self.completions.push(w.end);
            self.rx = w.word;
            self.shifting = None;
            self.rxne = true;
            if let Some(next) = self.tx_buf.take() {
                self.start(next, w.end);
            }
        }
    }

    pub fn next_event(&self) -> Option<u64> {
        self.shifting.map(|w| w.end)
    }

    pub fn status(&self) -> u32 {
        let mut sr = 0;
        if self.rxne {
            sr |= SR_RXNE;
        }
        if self.tx_buf.is_none() {
            sr |= SR_TXE;
        }
        if self.ovr {
            sr |= SR_OVR;
        }
        if self.shifting.is_some() {
            sr |= SR_BSY;
        }
        sr
    }

    pub fn read(&self, offset: u32) -> Option<u32> {
        match offset {
            CR => Some(self.divider),
            SR => Some(self.status()),
            DR => Some(self.rx as u32),
            _ => None,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, now: u64) -> bool {
        match offset {
            CR => {
                if valid_divider(value) {
                    self.divider = value;
                }
                true
            }
            SR => {
                // Only the overrun flag is software-clearable.
                if value & SR_OVR == 0 {
                    self.ovr = false;
                }
                true
            }
            DR => {
                let word = value as u16;
                if self.tx_buf.is_some() {
                    self.ovr = true;
                } else if self.shifting.is_none() {
                    self.start(word, now);
                } else {
                    self.tx_buf = Some(word);
                }
                true
            }
            _ => false,
        }
    }

    pub fn wire(&self) -> &[WireWord] {
        &self.wire
    }

    pub fn take_completions(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.completions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("transfer incomplete: {done} of {expected} words finished")]
pub struct IncompleteTransfer {
    pub done: usize,
    pub expected: usize,
}

/// Configured-rate fraction reached by the first `word_count` words on the
/// wire: ideal duration over observed duration.
pub fn spi_effective_rate(
    wire: &[WireWord],
    word_count: usize,
    cycles_per_word: u64,
) -> Result<f64, IncompleteTransfer> {
    if word_count == 0 || wire.len() < word_count {
        return Err(IncompleteTransfer {
            done: wire.len(),
            expected: word_count,
        });
    }
    let start = wire[0].start;
    let end = wire[word_count - 1].end;
    Ok((word_count as u64 * cycles_per_word) as f64 / (end - start) as f64)
}
