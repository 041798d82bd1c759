//! The three measurement scenarios and their CSV report.

pub mod services;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::access::{AccessMode, Category, StepLedger, TrustMode};
use crate::devices::{spi, spi_effective_rate, Origin, TracePolicy};
use crate::interrupts::{EventKind, Level, Machine, MachineError, ScheduledEvent, TraceEvent};
use crate::platform::{build_access_config, DriverKind, PlatformDescription, Rejection};
use crate::system::{load_service, LoadError};
use crate::wasm::DEFAULT_PAGE_SIZE;

pub use services::BoardLabels;

/// Dividers swept by default: configured rates from half the CPU clock down.
pub const DEFAULT_DIVIDERS: [u32; 11] = [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048];

/// Sensor values written before and after the timer fires.
const SENSOR_BEFORE: u32 = 0x1234;
const SENSOR_AFTER: u32 = 0x5678;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioId {
    GpioRoundtrip,
    IrqLatency,
    SpiRate,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [Self::GpioRoundtrip, Self::IrqLatency, Self::SpiRate];

    pub fn name(self) -> &'static str {
        match self {
            Self::GpioRoundtrip => "gpio-roundtrip",
            Self::IrqLatency => "irq-latency",
            Self::SpiRate => "spi-rate",
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phase {
    pub name: String,
    pub ledger: StepLedger,
}

/// One point of the SPI sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub divider: u32,
    /// Configured bit rate as a fraction of the CPU clock.
    pub configured: f64,
    /// Reached rate over configured rate.
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: ScenarioId,
    pub mode: AccessMode,
    pub trust: TrustMode,
    pub phases: Vec<Phase>,
    pub metrics: Vec<(String, i64)>,
    pub rates: Vec<RatePoint>,
}

impl ScenarioResult {
    pub fn total(&self) -> StepLedger {
        self.phases.iter().fold(StepLedger::new(), |acc, p| acc + p.ledger)
    }

    pub fn phase(&self, name: &str) -> Option<&StepLedger> {
        self.phases.iter().find(|p| p.name == name).map(|p| &p.ledger)
    }

    pub fn metric(&self, name: &str) -> Option<i64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Rejected(Rejection),
    #[error("{0}")]
    Scenario(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Rejected(_) => 2,
            Self::Scenario(_) => 3,
        }
    }
}

impl From<MachineError> for HarnessError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::Load {
                err: LoadError::Rejected(r),
                ..
            } => Self::Rejected(r),
            e => Self::Scenario(e.to_string()),
        }
    }
}

fn fail(msg: impl Into<String>) -> HarnessError {
    HarnessError::Scenario(msg.into())
}

/// Machine with the generated service loaded under `labels.service`.
fn machine_with(
    desc: &PlatformDescription,
    labels: &BoardLabels,
    bytes: &[u8],
    mode: AccessMode,
    trust: TrustMode,
    entry: Option<&str>,
) -> Result<(Machine, usize), HarnessError> {
    let cfg = build_access_config(desc, &desc.assignment_sets()).map_err(|e| fail(e.to_string()))?;
    let loaded = load_service(&labels.service, bytes, mode, trust, desc, &cfg, DEFAULT_PAGE_SIZE).map_err(|err| {
        MachineError::Load {
            service: labels.service.clone(),
            err,
        }
    })?;
    let mut m = Machine::new(desc.clone());
    let idx = m.add_service(loaded, entry.map(str::to_owned))?;
    Ok((m, idx))
}

fn measurement_pin(desc: &PlatformDescription, labels: &BoardLabels) -> Result<(u32, u32), HarnessError> {
    let r = desc
        .register(&labels.meas_register)
        .ok_or_else(|| fail(format!("no register `{}`", labels.meas_register)))?;
    if r.mask == 0 {
        return Err(fail(format!("register `{}` has an empty mask", r.label)));
    }
    Ok((r.phys_addr, r.mask.trailing_zeros()))
}

/// Sets the measurement pin once. Phases: `entry` (invocation entry),
/// `to-event` (first I/O instruction to the pin write on the bus) and
/// `return-path`. Metrics: `roundtrip` (first I/O instruction to the end of
/// the invocation) and `to_event`.
pub fn gpio_roundtrip(
    desc: &PlatformDescription,
    labels: &BoardLabels,
    mode: AccessMode,
    trust: TrustMode,
) -> Result<ScenarioResult, HarnessError> {
    let (addr, pin) = measurement_pin(desc, labels)?;
    let bytes = services::gpio_service(mode, labels, pin);
    let (mut m, idx) = machine_with(desc, labels, &bytes, mode, trust, None)?;
    m.call(idx, "setup".into(), &[])?;

    m.meter.watch(addr);
    let (begin, begin_step) = (m.meter.ledger, m.now());
    m.call(idx, "set".into(), &[])?;
    let (end, end_step) = (m.meter.ledger, m.now());
    let hit = m.meter.probe_hit.ok_or_else(|| fail("the measurement pin was never written"))?;

    // The invocation entry precedes the first I/O instruction.
    let mut start = begin;
    let mut start_step = begin_step;
    if trust == TrustMode::Untrusted {
        let cs = m.costs.context_switch as u64;
        start.charge(Category::ContextSwitch, cs);
        start_step += cs;
    }
    Ok(ScenarioResult {
        scenario: ScenarioId::GpioRoundtrip,
        mode,
        trust,
        phases: vec![
            Phase {
                name: "entry".into(),
                ledger: start - begin,
            },
            Phase {
                name: "to-event".into(),
                ledger: hit.ledger - start,
            },
            Phase {
                name: "return-path".into(),
                ledger: end - hit.ledger,
            },
        ],
        metrics: vec![
            ("roundtrip".into(), (end_step - start_step) as i64),
            ("to_event".into(), (hit.step - start_step) as i64),
        ],
        rates: vec![],
    })
}

/// A timer interrupt delivers a sensor snapshot to a WASM epilogue that
/// raises the measurement pin. Latency is pin step minus raise step minus
/// the `to_event` part of the pin roundtrip.
pub fn irq_latency(
    desc: &PlatformDescription,
    labels: &BoardLabels,
    mode: AccessMode,
    trust: TrustMode,
) -> Result<ScenarioResult, HarnessError> {
    let roundtrip = gpio_roundtrip(desc, labels, mode, trust)?;
    let to_event = roundtrip.metric("to_event").unwrap();

    let (addr, pin) = measurement_pin(desc, labels)?;
    let compare = desc
        .devices
        .iter()
        .find(|d| d.kind == DriverKind::Timer && d.irq() == Some(labels.timer_irq.as_str()))
        .and_then(|d| d.param_u32("compare"))
        .ok_or_else(|| fail(format!("no armed timer raises `{}`", labels.timer_irq)))?;
    let sensor_mask = desc
        .register(&labels.sensor)
        .ok_or_else(|| fail(format!("no register `{}`", labels.sensor)))?
        .mask;

    let bytes = services::irq_service(mode, labels, pin);
    let (mut m, idx) = machine_with(desc, labels, &bytes, mode, trust, Some("main"))?;
    m.schedule([
        ScheduledEvent {
            step: compare as u64 / 2,
            kind: EventKind::SetRegister(labels.sensor.clone(), SENSOR_BEFORE),
        },
        ScheduledEvent {
            step: compare as u64 + 1,
            kind: EventKind::SetRegister(labels.sensor.clone(), SENSOR_AFTER),
        },
    ])?;
    m.meter.watch(addr);
    let begin = m.meter.ledger;
    m.run_until_idle()?;
    let total = m.meter.ledger - begin;

    let raise = m
        .trace()
        .iter()
        .find(|e| e.event == TraceEvent::Raise && e.label.as_deref() == Some(labels.timer_irq.as_str()))
        .map(|e| e.step)
        .ok_or_else(|| fail("the timer never fired"))?;
    let hit = m.meter.probe_hit.ok_or_else(|| fail("the handler never raised the pin"))?;
    if hit.step < raise {
        return Err(fail("the pin was raised before the interrupt"));
    }
    let mem = &m.services[idx].instance.memory;
    let word = |a: u32| u32::from_le_bytes(mem.data_slice(a, 4).unwrap().try_into().unwrap());
    let observed = word(services::OBSERVED_ADDR);
    let runs = word(services::HANDLER_COUNT_ADDR);

    let mut phases = Vec::new();
    let mut levels = StepLedger::new();
    for (name, level) in [
        ("prologue", Level::E1),
        ("system-epilogue", Level::EHalf),
        ("wasm-epilogue", Level::EQuarter),
        ("mainline", Level::E0),
    ] {
        let l = m.level_ledger(level);
        levels += l;
        phases.push(Phase {
            name: name.into(),
            ledger: l,
        });
    }
    // The final conveyor synchronization happens outside any level.
    phases.push(Phase {
        name: "idle-sync".into(),
        ledger: total - levels,
    });

    Ok(ScenarioResult {
        scenario: ScenarioId::IrqLatency,
        mode,
        trust,
        phases,
        metrics: vec![
            ("latency".into(), hit.step as i64 - raise as i64 - to_event),
            ("raise_step".into(), raise as i64),
            ("pin_step".into(), hit.step as i64),
            ("roundtrip_to_event".into(), to_event),
            ("observed".into(), observed as i64),
            ("expected".into(), (SENSOR_BEFORE & sensor_mask) as i64),
            ("handler_runs".into(), runs as i64),
        ],
        rates: vec![],
    })
}

fn divider_phase(divider: u32) -> String {
    format!("div={divider:04}")
}

/// Sends the 1 KiB payload once per divider and reports the reached rate.
pub fn spi_rate(
    desc: &PlatformDescription,
    labels: &BoardLabels,
    mode: AccessMode,
    trust: TrustMode,
    dividers: &[u32],
) -> Result<ScenarioResult, HarnessError> {
    let dev = desc
        .device(&labels.spi)
        .filter(|d| d.kind == DriverKind::Spi)
        .ok_or_else(|| fail(format!("no spi device `{}`", labels.spi)))?;
    let base = dev.base();
    let bytes = services::spi_service(mode, labels);

    let mut phases = Vec::new();
    let mut metrics = Vec::new();
    let mut rates = Vec::new();
    for &divider in dividers {
        if !spi::valid_divider(divider) {
            return Err(fail(format!("invalid divider {divider}")));
        }
        let (mut m, idx) = machine_with(desc, labels, &bytes, mode, trust, None)?;
        m.board.set_policy(TracePolicy {
            reads: false,
            dma_reads: false,
        });
        m.board.bus_write(base + spi::CR, 4, divider, m.now(), Origin::External);
        let begin = m.meter.ledger;
        m.call(idx, "main".into(), &[])?;
        let ledger = m.meter.ledger - begin;

        let cpw = spi::cycles_per_word(divider);
        m.board.settle(m.now() + cpw * 2);
        let ctl = m.board.spi(&labels.spi).expect("mounted from the platform");
        let fraction =
            spi_effective_rate(ctl.wire(), services::SPI_WORDS as usize, cpw).map_err(|e| fail(e.to_string()))?;
        let phase = divider_phase(divider);
        metrics.push((format!("fraction_ppm@{phase}"), (fraction * 1e6).round() as i64));
        phases.push(Phase { name: phase, ledger });
        rates.push(RatePoint {
            divider,
            configured: 1.0 / divider as f64,
            measured: fraction,
        });
    }
    Ok(ScenarioResult {
        scenario: ScenarioId::SpiRate,
        mode,
        trust,
        phases,
        metrics,
        rates,
    })
}

pub fn run_scenario(
    id: ScenarioId,
    desc: &PlatformDescription,
    labels: &BoardLabels,
    mode: AccessMode,
    trust: TrustMode,
    dividers: &[u32],
) -> Result<ScenarioResult, HarnessError> {
    match id {
        ScenarioId::GpioRoundtrip => gpio_roundtrip(desc, labels, mode, trust),
        ScenarioId::IrqLatency => irq_latency(desc, labels, mode, trust),
        ScenarioId::SpiRate => spi_rate(desc, labels, mode, trust, dividers),
    }
}

pub const REPORT_HEADER: &str = "scenario,mode,trust,category,phase,steps";

/// Ledger rows per phase and category plus `metric` rows, sorted by
/// scenario, mode, trust, category and phase.
pub fn report_csv(results: &[ScenarioResult]) -> String {
    let mut rows: Vec<(&str, &str, &str, String, String, i64)> = Vec::new();
    for r in results {
        let key = (r.scenario.name(), r.mode.name(), r.trust.name());
        for p in &r.phases {
            for (c, steps) in p.ledger.iter() {
                rows.push((key.0, key.1, key.2, c.name().to_owned(), p.name.clone(), steps as i64));
            }
        }
        for (name, v) in &r.metrics {
            rows.push((key.0, key.1, key.2, "metric".to_owned(), name.clone(), *v));
        }
    }
    rows.sort();
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (s, m, t, c, p, v) in rows {
        let _ = writeln!(out, "{s},{m},{t},{c},{p},{v}");
    }
    out
}

pub fn report_write(results: &[ScenarioResult], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, report_csv(results))
}

pub const RATE_HEADER: &str = "mode,trust,divider,configured,measured";

/// The SPI sweep as `(divider, configured, measured)` rows.
pub fn rate_csv(results: &[ScenarioResult]) -> String {
    let mut out = String::from(RATE_HEADER);
    out.push('\n');
    for r in results {
        for p in &r.rates {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                r.mode, r.trust, p.divider, p.configured, p.measured
            );
        }
    }
    out
}
