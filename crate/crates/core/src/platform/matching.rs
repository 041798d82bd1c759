use std::fmt;

use thiserror::Error;

use super::config::{sort_bindings, Binding, MemoryAccessConfiguration};
use super::{ExposedDevice, ExposedInterrupt, PlatformDescription, ServiceId};
use crate::manifest::PeripheralRequirements;

/// A service whose every dependency resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedService {
    pub service: ServiceId,
    /// Required registers in lookup order; a handle is an index here.
    pub bindings: Vec<Binding>,
    /// Dummy address of each binding, same order.
    pub dummies: Vec<u32>,
    /// Required devices in manifest order; an OSAPI handle is an index here.
    pub devices: Vec<ExposedDevice>,
    pub interrupts: Vec<ExposedInterrupt>,
    pub requirements: PeripheralRequirements,
}

impl ResolvedService {
    /// Linear scan in binding order. Returns the index and the number of
    /// comparisons made (index + 1 on a hit, binding count on a miss).
    pub fn lookup_label(&self, label: &[u8]) -> (Option<usize>, u32) {
        for (i, b) in self.bindings.iter().enumerate() {
            if b.label.as_bytes() == label {
                return (Some(i), i as u32 + 1);
            }
        }
        (None, self.bindings.len() as u32)
    }

    pub fn lookup_dummy(&self, addr: u32) -> (Option<usize>, u32) {
        for (i, d) in self.dummies.iter().enumerate() {
            if *d == addr {
                return (Some(i), i as u32 + 1);
            }
        }
        (None, self.dummies.len() as u32)
    }

    pub fn binding_index(&self, label: &str) -> Option<usize> {
        self.bindings.iter().position(|b| b.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LabelCategory {
    Register,
    Device,
    Interrupt,
}

impl fmt::Display for LabelCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Register => "register",
            Self::Device => "device",
            Self::Interrupt => "interrupt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    NotExposed,
    WidthMismatch { required: u8, exposed: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissingLabel {
    pub label: String,
    pub category: LabelCategory,
    pub reason: RejectReason,
}

impl fmt::Display for MissingLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reason {
            RejectReason::NotExposed => write!(f, "{} {}: not exposed", self.category, self.label),
            RejectReason::WidthMismatch { required, exposed } => write!(
                f,
                "{} {}: width {required} requested, {exposed} exposed",
                self.category, self.label
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("service `{service}` rejected: {} unresolved dependencies", missing.len())]
pub struct Rejection {
    pub service: ServiceId,
    pub missing: Vec<MissingLabel>,
}

impl Rejection {
    pub fn labels(&self) -> Vec<&str> {
        self.missing.iter().map(|m| m.label.as_str()).collect()
    }
}

/// Resolves every dependency of `service` or reports all that failed.
pub fn match_requirements(
    service: &str,
    req: &PeripheralRequirements,
    cfg: &MemoryAccessConfiguration,
    desc: &PlatformDescription,
) -> Result<ResolvedService, Rejection> {
    let empty = Default::default();
    let sc = cfg.service(service).unwrap_or(&empty);
    let mut missing = Vec::new();
    let miss = |label: &str, category, reason| MissingLabel {
        label: label.to_owned(),
        category,
        reason,
    };

    let mut pairs = Vec::new();
    for r in &req.registers {
        match sc.binding(&r.label) {
            Some(b) if b.width == r.width => pairs.push((b.clone(), r.dummy_addr)),
            Some(b) => missing.push(miss(
                &r.label,
                LabelCategory::Register,
                RejectReason::WidthMismatch {
                    required: r.width,
                    exposed: b.width,
                },
            )),
            None => missing.push(miss(&r.label, LabelCategory::Register, RejectReason::NotExposed)),
        }
    }

    let mut devices = Vec::new();
    for d in &req.devices {
        match sc.devices.iter().find(|x| x.label == d.label) {
            Some(dev) => devices.push(dev.clone()),
            None => missing.push(miss(&d.label, LabelCategory::Device, RejectReason::NotExposed)),
        }
    }

    let mut interrupts = Vec::new();
    for i in &req.interrupts {
        match desc.interrupt(&i.label) {
            Some(irq) if sc.interrupts.contains(&i.label) => interrupts.push(irq.clone()),
            _ => missing.push(miss(&i.label, LabelCategory::Interrupt, RejectReason::NotExposed)),
        }
    }

    if !missing.is_empty() {
        return Err(Rejection {
            service: service.to_owned(),
            missing,
        });
    }

    let mut bindings: Vec<Binding> = pairs.iter().map(|(b, _)| b.clone()).collect();
    sort_bindings(&mut bindings);
    let dummies = bindings
        .iter()
        .map(|b| pairs.iter().find(|(p, _)| p.label == b.label).unwrap().1)
        .collect();
    Ok(ResolvedService {
        service: service.to_owned(),
        bindings,
        dummies,
        devices,
        interrupts,
        requirements: req.clone(),
    })
}
