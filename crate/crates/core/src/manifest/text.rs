//! Service-side manifest dialect:
//!
//! ```text
//! require-register <label> dummy=<hex> width=<1|2|4>
//! require-device <label>
//! subscribe-interrupt <label> priority=<u8> handler=<table slot>
//! copy <interrupt-label> <source-register> dest=<hex> width=<1|2|4>
//! ```

use std::fmt::Write;

use super::*;
use crate::text::{directives, ParseError};

pub fn parse_manifest(src: &str) -> Result<PeripheralRequirements, ParseError> {
    let mut req = PeripheralRequirements::default();
    let mut last_line = 0;
    for d in directives(src) {
        let d = d?;
        last_line = d.line;
        match d.keyword {
            "require-register" => {
                let w = d.expect_words(1)?;
                d.only_options(&["dummy", "width"])?;
                req.registers.push(RegisterRequirement {
                    label: w[0].into(),
                    dummy_addr: d.hex("dummy")?,
                    width: d.width("width")?,
                });
            }
            "require-device" => {
                let w = d.expect_words(1)?;
                d.only_options(&[])?;
                req.devices.push(DeviceRequirement { label: w[0].into() });
            }
            "subscribe-interrupt" => {
                let w = d.expect_words(1)?;
                d.only_options(&["priority", "handler"])?;
                req.interrupts.push(InterruptSubscription {
                    label: w[0].into(),
                    priority: d.num("priority")?,
                    handler: d.num("handler")?,
                    copies: Vec::new(),
                });
            }
            "copy" => {
                let w = d.expect_words(2)?;
                d.only_options(&["dest", "width"])?;
                let copy = CopyDescriptor {
                    source: w[1].into(),
                    dest: d.hex("dest")?,
                    width: d.width("width")?,
                };
                let sub = req
                    .interrupts
                    .iter_mut()
                    .find(|s| s.label == w[0])
                    .ok_or_else(|| d.err(format!("copy for unsubscribed interrupt `{}`", w[0])))?;
                sub.copies.push(copy);
            }
            other => return Err(d.err(format!("unknown directive `{other}`"))),
        }
    }
    req.validate(DEFAULT_MAX_COPIES)
        .map_err(|e| ParseError::new(last_line, e.to_string()))?;
    Ok(req)
}

/// Inverse of [`parse_manifest`] for valid requirements.
pub fn render_manifest(req: &PeripheralRequirements) -> String {
    let mut s = String::new();
    for r in &req.registers {
        let _ = writeln!(
            s,
            "require-register {} dummy={:#010x} width={}",
            r.label, r.dummy_addr, r.width
        );
    }
    for d in &req.devices {
        let _ = writeln!(s, "require-device {}", d.label);
    }
    for i in &req.interrupts {
        let _ = writeln!(
            s,
            "subscribe-interrupt {} priority={} handler={}",
            i.label, i.priority, i.handler
        );
        for c in &i.copies {
            let _ = writeln!(s, "copy {} {} dest={:#x} width={}", i.label, c.source, c.dest, c.width);
        }
    }
    s
}
