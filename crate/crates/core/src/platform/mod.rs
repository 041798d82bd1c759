//! OEM platform description, per-service access configuration, and
//! load-time matching of service requirements.

mod config;
mod matching;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

pub use config::{
    build_access_config, build_access_config_with, Binding, ConfigError, MemoryAccessConfiguration,
    ServiceAccessConfig, DEFAULT_MAX_REGISTERS,
};
pub use matching::{match_requirements, LabelCategory, MissingLabel, RejectReason, Rejection, ResolvedService};

use crate::access::CostModel;
use crate::text::{directives, parse_hex, ParseError};

pub type ServiceId = String;

/// Lines available on the simulated interrupt controller.
pub const IRQ_LINES: u8 = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposedRegister {
    pub label: String,
    pub phys_addr: u32,
    pub width: u8,
    pub mask: u32,
    pub usage_freq: u32,
}

impl ExposedRegister {
    fn end(&self) -> u64 {
        self.phys_addr as u64 + self.width as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DriverKind {
    Gpio,
    Spi,
    Timer,
}

impl DriverKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gpio" => Some(Self::Gpio),
            "spi" => Some(Self::Spi),
            "timer" => Some(Self::Timer),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gpio => "gpio",
            Self::Spi => "spi",
            Self::Timer => "timer",
        }
    }

    fn allowed_params(self) -> &'static [&'static str] {
        match self {
            Self::Gpio => &["base", "pins", "irq"],
            Self::Spi => &["base", "divider", "irq"],
            Self::Timer => &["base", "compare", "irq"],
        }
    }

    /// Bytes of register space the device decodes, starting at `base`.
    pub fn footprint(self) -> u32 {
        match self {
            Self::Gpio => crate::devices::gpio::FOOTPRINT,
            Self::Spi => crate::devices::spi::FOOTPRINT,
            Self::Timer => crate::devices::timer::FOOTPRINT,
        }
    }
}

impl fmt::Display for DriverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposedDevice {
    pub label: String,
    pub kind: DriverKind,
    pub params: BTreeMap<String, String>,
}

impl ExposedDevice {
    pub fn base(&self) -> u32 {
        self.params
            .get("base")
            .and_then(|v| parse_hex(v))
            .expect("validated at parse time")
    }

    pub fn param_u32(&self, key: &str) -> Option<u32> {
        let v = self.params.get(key)?;
        if v.starts_with("0x") {
            parse_hex(v)
        } else {
            v.parse().ok()
        }
    }

    pub fn irq(&self) -> Option<&str> {
        self.params.get("irq").map(String::as_str)
    }

    pub fn range(&self) -> (u64, u64) {
        let base = self.base() as u64;
        (base, base + self.kind.footprint() as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClearAction {
    None,
    Write { register: String, value: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExposedInterrupt {
    pub label: String,
    pub line: u8,
    pub clear: ClearAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlatformDescription {
    pub registers: Vec<ExposedRegister>,
    pub devices: Vec<ExposedDevice>,
    pub interrupts: Vec<ExposedInterrupt>,
    /// `assign` lines, in file order per service.
    pub assignments: BTreeMap<ServiceId, Vec<String>>,
    pub costs: CostModel,
}

impl PlatformDescription {
    pub fn register(&self, label: &str) -> Option<&ExposedRegister> {
        self.registers.iter().find(|r| r.label == label)
    }

    pub fn device(&self, label: &str) -> Option<&ExposedDevice> {
        self.devices.iter().find(|d| d.label == label)
    }

    pub fn interrupt(&self, label: &str) -> Option<&ExposedInterrupt> {
        self.interrupts.iter().find(|i| i.label == label)
    }

    pub fn register_at(&self, addr: u32) -> Option<&ExposedRegister> {
        self.registers
            .iter()
            .find(|r| (r.phys_addr as u64..r.end()).contains(&(addr as u64)))
    }

    /// Assignment sets as consumed by [`build_access_config`].
    pub fn assignment_sets(&self) -> BTreeMap<ServiceId, BTreeSet<String>> {
        self.assignments
            .iter()
            .map(|(s, labels)| (s.clone(), labels.iter().cloned().collect()))
            .collect()
    }
}

pub fn parse_platform(src: &str) -> Result<PlatformDescription, ParseError> {
    let mut desc = PlatformDescription::default();
    let mut pending_clears = Vec::new();
    let mut pending_irqs = Vec::new();
    let mut labels: BTreeMap<&str, (&str, usize)> = BTreeMap::new();

    for d in directives(src) {
        let d = d?;
        match d.keyword {
            "register" | "device" | "interrupt" => {
                let label = d.expect_words(1)?[0];
                if label.len() > crate::manifest::MAX_LABEL_LEN {
                    return Err(d.err(format!("label `{label}` exceeds 64 bytes")));
                }
                // Labels are unique within a category; cross-category reuse
                // would make `assign` ambiguous, so it is refused too.
                if let Some((kind, line)) = labels.insert(label, (d.keyword, d.line)) {
                    return Err(d.err(format!("duplicate label `{label}` (first defined as {kind} on line {line})")));
                }
            }
            _ => {}
        }
        match d.keyword {
            "register" => {
                d.only_options(&["addr", "width", "mask", "freq"])?;
                let reg = ExposedRegister {
                    label: d.words[0].into(),
                    phys_addr: d.hex("addr")?,
                    width: d.width("width")?,
                    mask: d.hex("mask")?,
                    usage_freq: d.num("freq")?,
                };
                if reg.phys_addr % reg.width as u32 != 0 {
                    return Err(d.err("address not aligned to width"));
                }
                if reg.mask == 0 {
                    return Err(d.err("mask must be nonzero"));
                }
                if reg.width < 4 && reg.mask >> (reg.width as u32 * 8) != 0 {
                    return Err(d.err("mask wider than the register"));
                }
                if let Some(other) = desc
                    .registers
                    .iter()
                    .find(|o| o.phys_addr as u64 <= reg.end() - 1 && reg.phys_addr as u64 <= o.end() - 1)
                {
                    return Err(d.err(format!(
                        "register `{}` overlaps `{}`",
                        reg.label, other.label
                    )));
                }
                desc.registers.push(reg);
            }
            "device" => {
                let kind_s = d.required("kind")?;
                let kind = DriverKind::parse(kind_s)
                    .ok_or_else(|| d.err(format!("unknown driver kind `{kind_s}`")))?;
                let mut allowed = vec!["kind"];
                allowed.extend_from_slice(kind.allowed_params());
                d.only_options(&allowed)?;
                parse_hex(d.required("base")?).ok_or_else(|| d.err("`base` expects a hex u32"))?;
                let params: BTreeMap<String, String> = d
                    .options()
                    .filter(|(k, _)| *k != "kind")
                    .map(|(k, v)| (k.to_owned(), v.to_owned()))
                    .collect();
                let dev = ExposedDevice {
                    label: d.words[0].into(),
                    kind,
                    params,
                };
                for key in ["pins", "divider", "compare"] {
                    if dev.params.contains_key(key) && dev.param_u32(key).is_none() {
                        return Err(d.err(format!("`{key}` expects a number")));
                    }
                }
                if let Some(p) = dev.param_u32("pins") {
                    if !(1..=32).contains(&p) {
                        return Err(d.err("pins must be between 1 and 32"));
                    }
                }
                if let Some(div) = dev.param_u32("divider") {
                    if !crate::devices::spi::valid_divider(div) {
                        return Err(d.err("divider must be a power of two in 2..=2048"));
                    }
                }
                let (lo, hi) = dev.range();
                if hi > 1 << 32 {
                    return Err(d.err("device register block exceeds the address space"));
                }
                if let Some(other) = desc.devices.iter().find(|o| {
                    let (a, b) = o.range();
                    a < hi && lo < b
                }) {
                    return Err(d.err(format!("device `{}` overlaps `{}`", dev.label, other.label)));
                }
                if let Some(irq) = dev.irq() {
                    pending_irqs.push((d.line, irq.to_owned()));
                }
                desc.devices.push(dev);
            }
            "interrupt" => {
                d.only_options(&["line", "clear"])?;
                let line: u8 = d.num("line")?;
                if line >= IRQ_LINES {
                    return Err(d.err(format!("line {line} does not exist (0..{IRQ_LINES})")));
                }
                let clear = match d.raw("clear") {
                    None => ClearAction::None,
                    Some(spec) => {
                        let (reg, value) = spec
                            .split_once(':')
                            .ok_or_else(|| d.err("clear expects <register-label>:<hex>"))?;
                        let value = parse_hex(value).ok_or_else(|| d.err("clear value must be hex"))?;
                        pending_clears.push((d.line, reg.to_owned()));
                        ClearAction::Write {
                            register: reg.to_owned(),
                            value,
                        }
                    }
                };
                desc.interrupts.push(ExposedInterrupt {
                    label: d.words[0].into(),
                    line,
                    clear,
                });
            }
            "assign" => {
                d.only_options(&[])?;
                if d.words.len() < 2 {
                    return Err(d.err("`assign` needs a service id and at least one label"));
                }
                let entry = desc.assignments.entry(d.words[0].to_owned()).or_default();
                for label in &d.words[1..] {
                    if entry.iter().any(|l| l == label) {
                        return Err(d.err(format!("`{label}` assigned twice to `{}`", d.words[0])));
                    }
                    entry.push((*label).to_owned());
                }
            }
            "cost" => desc.costs.apply(&d)?,
            other => return Err(d.err(format!("unknown directive `{other}`"))),
        }
    }

    for (line, reg) in pending_clears {
        if desc.register(&reg).is_none() {
            return Err(ParseError::new(line, format!("clear register `{reg}` is not exposed")));
        }
    }
    for (line, irq) in pending_irqs {
        if desc.interrupt(&irq).is_none() {
            return Err(ParseError::new(line, format!("device irq `{irq}` is not an exposed interrupt")));
        }
    }
    Ok(desc)
}
