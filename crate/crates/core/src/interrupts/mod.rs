//! Four-level interrupt model: prologues (E1), firmware and system
//! epilogues (E1/2), WASM epilogues (E1/4) and service mainlines (E0).

pub mod machine;
pub mod scenario;

use std::fmt;

use thiserror::Error;

use crate::manifest::CopyDescriptor;

pub use machine::{register_wasm_epilogue, Machine, MachineError};
pub use scenario::{parse_scenario, EventKind, Scenario, ScenarioService, ScheduledEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    E0,
    EQuarter,
    EHalf,
    E1,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::E0, Level::EQuarter, Level::EHalf, Level::E1];

    pub fn name(self) -> &'static str {
        match self {
            Level::E0 => "E0",
            Level::EQuarter => "E1/4",
            Level::EHalf => "E1/2",
            Level::E1 => "E1",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<Level> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A WASM epilogue registration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub service: usize,
    pub label: String,
    pub priority: u8,
    /// Function-table slot named by the service.
    pub slot: u32,
    /// Function index the slot held at registration.
    pub func: u32,
    pub copies: Vec<CopyDescriptor>,
    /// Global registration order; breaks priority ties.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("interrupt not exposed to the service")]
    NotExposed,
    #[error("table slot does not hold a () -> () function")]
    BadHandler,
    #[error("too many copy descriptors")]
    TooManyCopies,
}

#[derive(Debug, Clone, Default)]
pub struct InterruptConfig {
    subs: Vec<Subscription>,
    next_seq: u64,
}

impl InterruptConfig {
    /// Records `sub` (its `seq` is assigned here), replacing any earlier
    /// registration of the same service and label.
    pub fn insert(&mut self, mut sub: Subscription) {
        sub.seq = self.next_seq;
        self.next_seq += 1;
        self.subs.retain(|s| !(s.service == sub.service && s.label == sub.label));
        self.subs.push(sub);
    }

    /// Subscribers of `label` in dispatch order: priority, then registration.
    pub fn subscribers(&self, label: &str) -> Vec<&Subscription> {
        let mut v: Vec<_> = self.subs.iter().filter(|s| s.label == label).collect();
        v.sort_by_key(|s| (s.priority, s.seq));
        v
    }

    pub fn all(&self) -> &[Subscription] {
        &self.subs
    }
}

/// An interrupt between its prologue and its system epilogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingInterrupt {
    pub id: u64,
    pub line: u8,
    pub label: String,
    pub arrival_step: u64,
    /// `(physical address, value)` read by the prologue.
    pub buffered: Vec<(u32, u32)>,
}

impl PendingInterrupt {
    pub fn buffered_value(&self, addr: u32) -> Option<u32> {
        self.buffered.iter().find(|(a, _)| *a == addr).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotItem {
    pub dest: u32,
    pub value: u32,
    pub width: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WasmEpilogueEntry {
    pub pending: u64,
    pub label: String,
    pub service: usize,
    pub func: u32,
    pub priority: u8,
    pub seq: u64,
    pub snapshot: Vec<SnapshotItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    /// An interrupt reached the prologue queue.
    Raise,
    Begin,
    Suspend,
    Resume,
    End,
    Trap,
    /// A system epilogue found no subscribers.
    Drop,
    /// Snapshot values handed to a WASM epilogue.
    Snapshot,
    SetRegister,
}

impl TraceEvent {
    pub fn name(self) -> &'static str {
        match self {
            Self::Raise => "raise",
            Self::Begin => "begin",
            Self::Suspend => "suspend",
            Self::Resume => "resume",
            Self::End => "end",
            Self::Trap => "trap",
            Self::Drop => "drop",
            Self::Snapshot => "snapshot",
            Self::SetRegister => "set-register",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Mainline,
    Prologue,
    Firmware,
    SystemEpilogue,
    WasmEpilogue,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mainline => "mainline",
            Self::Prologue => "prologue",
            Self::Firmware => "firmware",
            Self::SystemEpilogue => "system-epilogue",
            Self::WasmEpilogue => "wasm-epilogue",
        }
    }

    pub fn level(self) -> Level {
        match self {
            Self::Mainline => Level::E0,
            Self::Prologue => Level::E1,
            Self::Firmware | Self::SystemEpilogue => Level::EHalf,
            Self::WasmEpilogue => Level::EQuarter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: u64,
    /// `None` for events outside any control flow (raises, stimuli).
    pub level: Option<Level>,
    pub service: Option<String>,
    pub event: TraceEvent,
    pub flow: Option<u64>,
    pub kind: Option<FlowKind>,
    pub pending: Option<u64>,
    pub label: Option<String>,
    /// Snapshot items for `Snapshot`, the written value for `SetRegister`.
    pub values: Vec<(u32, u32)>,
}

impl TraceEntry {
    pub fn detail(&self) -> String {
        let mut parts = Vec::new();
        if let Some(k) = self.kind {
            parts.push(k.name().to_owned());
        }
        if let Some(f) = self.flow {
            parts.push(format!("flow={f}"));
        }
        if let Some(p) = self.pending {
            parts.push(format!("irq={p}"));
        }
        if let Some(l) = &self.label {
            parts.push(format!("label={l}"));
        }
        for (a, v) in &self.values {
            parts.push(format!("{a:#x}={v:#x}"));
        }
        parts.join(" ")
    }
}

pub const TRACE_HEADER: &str = "step,level,service,event,detail";

/// Renders the trace as CSV with LF line endings.
pub fn trace_csv(entries: &[TraceEntry]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.step,
            e.level.map_or("-", Level::name),
            e.service.as_deref().unwrap_or("-"),
            e.event.name(),
            e.detail()
        ));
    }
    out
}
