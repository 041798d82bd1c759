use crate::text::{directives, ParseError};

/// Step prices for everything the interpreter does not count itself.
///
/// Override file syntax: one `cost <name>=<u32>` per line, `#` comments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    /// One protection-domain transition (charged twice per untrusted call).
    pub context_switch: u32,
    /// Kernel copy of interpreter bookkeeping for untrusted MMIO.
    pub bookkeeping_copy: u32,
    pub bus_access: u32,
    /// Host-import frame setup and argument conversion.
    pub import_glue: u32,
    /// Extra kernel API hop taken by OSAPI calls.
    pub osapi_indirection: u32,
    /// One iteration of a native driver polling loop, excluding the bus read.
    pub driver_poll: u32,
    /// Interrupt entry and exit in the system prologue.
    pub irq_entry: u32,
    /// Dequeue and bookkeeping per system epilogue.
    pub epilogue_dispatch: u32,
    /// Per buffered value moved into a snapshot.
    pub copy_item: u32,
    /// Creating a fresh execution environment.
    pub env_setup: u32,
    /// Per conveyor slot per synchronization.
    pub dma_slot: u32,
    /// Retired instructions between DMA synchronizations.
    pub dma_period: u32,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            context_switch: 200,
            bookkeeping_copy: 300,
            bus_access: 2,
            import_glue: 40,
            osapi_indirection: 1,
            driver_poll: 2,
            irq_entry: 20,
            epilogue_dispatch: 10,
            copy_item: 1,
            env_setup: 30,
            dma_slot: 1,
            dma_period: 1,
        }
    }
}

impl CostModel {
    pub const NAMES: [&'static str; 12] = [
        "context_switch",
        "bookkeeping_copy",
        "bus_access",
        "import_glue",
        "osapi_indirection",
        "driver_poll",
        "irq_entry",
        "epilogue_dispatch",
        "copy_item",
        "env_setup",
        "dma_slot",
        "dma_period",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut u32> {
        Some(match name {
            "context_switch" => &mut self.context_switch,
            "bookkeeping_copy" => &mut self.bookkeeping_copy,
            "bus_access" => &mut self.bus_access,
            "import_glue" => &mut self.import_glue,
            "osapi_indirection" => &mut self.osapi_indirection,
            "driver_poll" => &mut self.driver_poll,
            "irq_entry" => &mut self.irq_entry,
            "epilogue_dispatch" => &mut self.epilogue_dispatch,
            "copy_item" => &mut self.copy_item,
            "env_setup" => &mut self.env_setup,
            "dma_slot" => &mut self.dma_slot,
            "dma_period" => &mut self.dma_period,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: u32) -> Result<(), String> {
        if name == "dma_period" && value == 0 {
            return Err("dma_period must be at least 1".into());
        }
        *self
            .slot(name)
            .ok_or_else(|| format!("unknown cost `{name}`"))? = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        let mut copy = *self;
        copy.slot(name).map(|v| *v)
    }

    /// Applies a `cost` directive (already split by the caller).
    pub(crate) fn apply(&mut self, d: &crate::text::Directive<'_>) -> Result<(), ParseError> {
        d.expect_words(0)?;
        let mut any = false;
        for (k, v) in d.options() {
            let value: u32 = v
                .parse()
                .map_err(|_| d.err(format!("cost `{k}` expects a u32, got `{v}`")))?;
            self.set(k, value).map_err(|e| d.err(e))?;
            any = true;
        }
        if !any {
            return Err(d.err("`cost` needs at least one name=value"));
        }
        Ok(())
    }

    /// Default model with the overrides in `src` applied.
    pub fn parse(src: &str) -> Result<Self, ParseError> {
        let mut model = Self::default();
        model.apply_overrides(src)?;
        Ok(model)
    }

    pub fn apply_overrides(&mut self, src: &str) -> Result<(), ParseError> {
        for d in directives(src) {
            let d = d?;
            if d.keyword != "cost" {
                return Err(d.err(format!("expected `cost`, found `{}`", d.keyword)));
            }
            self.apply(&d)?;
        }
        Ok(())
    }
}
