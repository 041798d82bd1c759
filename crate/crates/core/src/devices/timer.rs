//! Free-running timer: CNT at +0x00, CMP at +0x04, SR at +0x08 (bit0 = match flag).
//!
//! The counter advances once per step. A match fires when the counter equals
//! the compare value; writing CMP or CNT re-arms it.

pub const CNT: u32 = 0x00;
pub const CMP: u32 = 0x04;
pub const SR: u32 = 0x08;
pub const FOOTPRINT: u32 = 0x0c;

#[derive(Debug, Clone)]
pub struct TimerDevice {
    /// Step at which the counter read zero.
    origin: u64,
    compare: u32,
    flag: bool,
    armed: bool,
    settled: u64,
    fired: Vec<u64>,
}

impl TimerDevice {
    pub fn new(compare: Option<u32>) -> Self {
        Self {
            origin: 0,
            compare: compare.unwrap_or(0),
            flag: false,
            armed: compare.is_some(),
            settled: 0,
            fired: Vec::new(),
        }
    }

    pub fn counter(&self, now: u64) -> u32 {
        now.wrapping_sub(self.origin) as u32
    }

    fn match_step(&self) -> u64 {
        self.origin + self.compare as u64
    }

    pub fn next_event(&self) -> Option<u64> {
        (self.armed && self.match_step() >= self.settled).then(|| self.match_step())
    }

    pub fn settle(&mut self, now: u64) {
        if self.armed && self.match_step() <= now && self.match_step() >= self.settled {
            self.flag = true;
            self.armed = false;
            self.fired.push(self.match_step());
        }
        self.settled = now;
    }

    pub fn read(&self, offset: u32, now: u64) -> Option<u32> {
        match offset {
            CNT => Some(self.counter(now)),
            CMP => Some(self.compare),
            SR => Some(self.flag as u32),
            _ => None,
        }
    }

    pub fn write(&mut self, offset: u32, value: u32, now: u64) -> bool {
        match offset {
            CNT => {
                self.origin = now.wrapping_sub(value as u64);
                self.armed = self.match_step() >= now;
                true
            }
            CMP => {
                self.compare = value;
                self.armed = self.match_step() >= now;
                true
            }
            SR => {
                self.flag = value & 1 == 1;
                true
            }
            _ => false,
        }
    }

    /// Match steps not yet turned into interrupts.
    pub fn take_fired(&mut self) -> Vec<u64> {
        std::mem::take(&mut self.fired)
    }
}
