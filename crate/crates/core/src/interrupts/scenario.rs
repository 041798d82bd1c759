//! Scenario files.
//!
//! ```text
//! service sensor wasm=sensor.wasm mode=mmio trust=trusted entry=main
//! firmware tim2_irq steps=25
//! at 1200 set-register sensor_data 0x1234
//! at 1500 raise tim2_irq
//! ```

use std::path::PathBuf;

use crate::access::{AccessMode, TrustMode};
use crate::text::{directives, parse_hex, ParseError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioService {
    pub id: String,
    pub wasm: PathBuf,
    pub mode: AccessMode,
    pub trust: TrustMode,
    pub entry: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Raise(String),
    SetRegister(String, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledEvent {
    pub step: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Scenario {
    pub services: Vec<ScenarioService>,
    /// Events in file order; the machine applies them stably by step.
    pub events: Vec<ScheduledEvent>,
    /// Firmware epilogue length per interrupt label.
    pub firmware: Vec<(String, u32)>,
}

pub fn parse_scenario(src: &str) -> Result<Scenario, ParseError> {
    let mut sc = Scenario::default();
    for d in directives(src) {
        let d = d?;
        match d.keyword {
            "service" => {
                let id = d.expect_words(1)?[0];
                d.only_options(&["wasm", "mode", "trust", "entry"])?;
                if sc.services.iter().any(|s| s.id == id) {
                    return Err(d.err(format!("duplicate service `{id}`")));
                }
                sc.services.push(ScenarioService {
                    id: id.to_owned(),
                    wasm: d.required("wasm")?.into(),
                    mode: d.required("mode")?.parse().map_err(|e: String| d.err(e))?,
                    trust: d.required("trust")?.parse().map_err(|e: String| d.err(e))?,
                    entry: d.raw("entry").map(str::to_owned),
                });
            }
            "firmware" => {
                let label = d.expect_words(1)?[0];
                d.only_options(&["steps"])?;
                sc.firmware.push((label.to_owned(), d.num("steps")?));
            }
            "at" => {
                d.only_options(&[])?;
                let step: u64 = d
                    .words
                    .first()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| d.err("`at` needs a step number"))?;
                let kind = match d.words.get(1).copied() {
                    Some("raise") => {
                        let w = d.expect_words(3)?;
                        EventKind::Raise(w[2].to_owned())
                    }
                    Some("set-register") => {
                        let w = d.expect_words(4)?;
                        let v = parse_hex(w[3]).ok_or_else(|| d.err(format!("bad hex value `{}`", w[3])))?;
                        EventKind::SetRegister(w[2].to_owned(), v)
                    }
                    Some(other) => return Err(d.err(format!("unknown event `{other}`"))),
                    None => return Err(d.err("`at` needs an event")),
                };
                sc.events.push(ScheduledEvent { step, kind });
            }
            other => return Err(d.err(format!("unknown directive `{other}`"))),
        }
    }
    Ok(sc)
}
