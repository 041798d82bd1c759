use std::fmt;
use std::ops::{Add, AddAssign, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Interp,
    WasmioCheck,
    Driver,
    ContextSwitch,
    Dma,
    ImportGlue,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Interp,
        Category::WasmioCheck,
        Category::Driver,
        Category::ContextSwitch,
        Category::Dma,
        Category::ImportGlue,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Interp => "interp",
            Category::WasmioCheck => "wasmio_check",
            Category::Driver => "driver",
            Category::ContextSwitch => "context_switch",
            Category::Dma => "dma",
            Category::ImportGlue => "import_glue",
        }
    }

    /// DMA transfers run beside the CPU and never advance the clock.
    pub fn occupies_cpu(self) -> bool {
        self != Category::Dma
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Categorized step counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct StepLedger {
    counts: [u64; 6],
}

impl StepLedger {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn charge(&mut self, category: Category, steps: u64) {
        self.counts[category as usize] += steps;
    }

    pub fn get(&self, category: Category) -> u64 {
        self.counts[category as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Everything except DMA.
    pub fn cpu_total(&self) -> u64 {
        self.total() - self.get(Category::Dma)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Category, u64)> + '_ {
        Category::ALL.iter().map(|c| (*c, self.get(*c)))
    }

    /// True when no counter of `self` is below the one in `earlier`.
    pub fn dominates(&self, earlier: &StepLedger) -> bool {
        self.counts.iter().zip(earlier.counts).all(|(a, b)| *a >= b)
    }
}

impl Add for StepLedger {
    type Output = StepLedger;

    fn add(mut self, rhs: StepLedger) -> StepLedger {
        self += rhs;
        self
    }
}

impl AddAssign for StepLedger {
    fn add_assign(&mut self, rhs: StepLedger) {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            *a += b;
        }
    }
}

/// Difference between two snapshots of a monotone ledger.
impl Sub for StepLedger {
    type Output = StepLedger;

    fn sub(mut self, rhs: StepLedger) -> StepLedger {
        for (a, b) in self.counts.iter_mut().zip(rhs.counts) {
            *a = a.checked_sub(b).expect("ledger snapshots taken out of order");
        }
        self
    }
}
