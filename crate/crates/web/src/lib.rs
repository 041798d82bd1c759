//! Browser bindings for the demo page: the GPIO ordering table, SPI rate
//! curves and an interrupt trace, all on the demo board.

use wasm_bindgen::prelude::*;
use wasmio_core::access::{AccessMode, TrustMode};
use wasmio_core::harness::{gpio_roundtrip, rate_csv, services, spi_rate, BoardLabels, DEFAULT_DIVIDERS};
use wasmio_core::interrupts::{trace_csv, EventKind, Machine, ScheduledEvent};
use wasmio_core::platform::{build_access_config, parse_platform, PlatformDescription};
use wasmio_core::system::load_service;
use wasmio_core::wasm::DEFAULT_PAGE_SIZE;

pub const PLATFORM: &str = include_str!("../../../platforms/demo.platform");

/// The demo board with the context switch cost replaced.
pub fn platform(context_switch: u32) -> Result<PlatformDescription, String> {
    let mut desc = parse_platform(PLATFORM).map_err(|e| e.to_string())?;
    desc.costs.context_switch = context_switch;
    Ok(desc)
}

fn trust(s: &str) -> Result<TrustMode, String> {
    s.parse().map_err(|_| format!("unknown trust mode `{s}`"))
}

/// `mode,trust,roundtrip,to_event` for every mode and trust.
pub fn gpio_table_csv(context_switch: u32) -> Result<String, String> {
    let desc = platform(context_switch)?;
    let labels = BoardLabels::default();
    let mut out = String::from("mode,trust,roundtrip,to_event\n");
    for mode in AccessMode::ALL {
        for t in TrustMode::ALL {
            let r = gpio_roundtrip(&desc, &labels, mode, t).map_err(|e| e.to_string())?;
            let m = |k| r.metric(k).unwrap_or(0);
            out += &format!("{mode},{t},{},{}\n", m("roundtrip"), m("to_event"));
        }
    }
    Ok(out)
}

/// Rate table over the default dividers for every mode.
pub fn spi_curves_csv(trust_mode: &str, context_switch: u32) -> Result<String, String> {
    let desc = platform(context_switch)?;
    let t = trust(trust_mode)?;
    let runs = AccessMode::ALL
        .into_iter()
        .map(|mode| spi_rate(&desc, &BoardLabels::default(), mode, t, &DEFAULT_DIVIDERS).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rate_csv(&runs))
}

/// Runs the timer-interrupt service until idle and returns its trace. The
/// sensor changes value at `sensor_step`; `extra_raise` (if non-zero) raises
/// the timer line a second time at that step.
pub fn irq_trace_csv(mode: &str, trust_mode: &str, sensor_step: u32, extra_raise: u32) -> Result<String, String> {
    let desc = platform(wasmio_core::access::CostModel::default().context_switch)?;
    let mode: AccessMode = mode.parse().map_err(|_| format!("unknown mode `{mode}`"))?;
    let t = trust(trust_mode)?;
    let labels = BoardLabels::default();
    let pin = desc
        .register(&labels.meas_register)
        .map(|r| r.mask.trailing_zeros())
        .ok_or("the demo board has no measurement pin")?;
    let cfg = build_access_config(&desc, &desc.assignment_sets()).map_err(|e| e.to_string())?;
    let bytes = services::irq_service(mode, &labels, pin);
    let loaded = load_service(&labels.service, &bytes, mode, t, &desc, &cfg, DEFAULT_PAGE_SIZE).map_err(|e| e.to_string())?;
    let mut m = Machine::new(desc);
    m.add_service(loaded, Some("main".into())).map_err(|e| e.to_string())?;
    let mut events = vec![
        ScheduledEvent {
            step: 0,
            kind: EventKind::SetRegister(labels.sensor.clone(), 0x1234),
        },
        ScheduledEvent {
            step: sensor_step as u64,
            kind: EventKind::SetRegister(labels.sensor.clone(), 0x5678),
        },
    ];
    if extra_raise > 0 {
        events.push(ScheduledEvent {
            step: extra_raise as u64,
            kind: EventKind::Raise(labels.timer_irq.clone()),
        });
    }
    m.schedule(events).map_err(|e| e.to_string())?;
    m.run_until_idle().map_err(|e| e.to_string())?;
    Ok(trace_csv(m.trace()))
}

#[wasm_bindgen]
pub fn gpio_table(context_switch: u32) -> Result<String, JsError> {
    gpio_table_csv(context_switch).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spi_curves(trust_mode: &str, context_switch: u32) -> Result<String, JsError> {
    spi_curves_csv(trust_mode, context_switch).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn irq_trace(mode: &str, trust_mode: &str, sensor_step: u32, extra_raise: u32) -> Result<String, JsError> {
    irq_trace_csv(mode, trust_mode, sensor_step, extra_raise).map_err(|e| JsError::new(&e))
}
