use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{ExposedDevice, PlatformDescription, ServiceId};

pub const DEFAULT_MAX_REGISTERS: usize = 32;

/// A physical register as seen by one service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Binding {
    pub label: String,
    pub phys_addr: u32,
    pub width: u8,
    pub mask: u32,
    pub usage_freq: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ServiceAccessConfig {
    /// Usage frequency descending, ties by label.
    pub registers: Vec<Binding>,
    pub devices: Vec<ExposedDevice>,
    pub interrupts: Vec<String>,
}

impl ServiceAccessConfig {
    pub fn binding(&self, label: &str) -> Option<&Binding> {
        self.registers.iter().find(|b| b.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MemoryAccessConfiguration {
    pub services: BTreeMap<ServiceId, ServiceAccessConfig>,
}

impl MemoryAccessConfiguration {
    pub fn service(&self, id: &str) -> Option<&ServiceAccessConfig> {
        self.services.get(id)
    }

    /// Owner of the register or device with this label, if any.
    pub fn owner(&self, label: &str) -> Option<&str> {
        self.services.iter().find_map(|(id, c)| {
            let owns = c.binding(label).is_some() || c.devices.iter().any(|d| d.label == label);
            owns.then_some(id.as_str())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("service `{service}` is assigned unknown label `{label}`")]
    UnknownLabel { service: ServiceId, label: String },
    #[error("`{label}` is assigned to both `{first}` and `{second}`")]
    DoubleAssignment {
        label: String,
        first: ServiceId,
        second: ServiceId,
    },
    #[error("register `{register}` of `{second}` lies inside device `{device}` of `{first}`")]
    SharedPeripheral {
        register: String,
        device: String,
        first: ServiceId,
        second: ServiceId,
    },
    #[error("service `{service}` has {count} registers, limit is {max}")]
    TooManyRegisters {
        service: ServiceId,
        count: usize,
        max: usize,
    },
}

pub fn build_access_config(
    desc: &PlatformDescription,
    assignments: &BTreeMap<ServiceId, BTreeSet<String>>,
) -> Result<MemoryAccessConfiguration, ConfigError> {
    build_access_config_with(desc, assignments, DEFAULT_MAX_REGISTERS)
}

pub fn build_access_config_with(
    desc: &PlatformDescription,
    assignments: &BTreeMap<ServiceId, BTreeSet<String>>,
    max_registers: usize,
) -> Result<MemoryAccessConfiguration, ConfigError> {
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    let mut cfg = MemoryAccessConfiguration::default();

    for (service, labels) in assignments {
        let mut sc = ServiceAccessConfig::default();
        for label in labels {
            let exclusive = if let Some(r) = desc.register(label) {
                sc.registers.push(Binding {
                    label: r.label.clone(),
                    phys_addr: r.phys_addr,
                    width: r.width,
                    mask: r.mask,
                    usage_freq: r.usage_freq,
                });
                true
            } else if let Some(d) = desc.device(label) {
                sc.devices.push(d.clone());
                true
            } else if desc.interrupt(label).is_some() {
                // Several services may subscribe to one interrupt.
                sc.interrupts.push(label.clone());
                false
            } else {
                return Err(ConfigError::UnknownLabel {
                    service: service.clone(),
                    label: label.clone(),
                });
            };
            if exclusive {
                if let Some(first) = owner.insert(label, service) {
                    return Err(ConfigError::DoubleAssignment {
                        label: label.clone(),
                        first: first.to_owned(),
                        second: service.clone(),
                    });
                }
            }
        }
        if sc.registers.len() > max_registers {
            return Err(ConfigError::TooManyRegisters {
                service: service.clone(),
                count: sc.registers.len(),
                max: max_registers,
            });
        }
        sort_bindings(&mut sc.registers);
        sc.devices.sort_by(|a, b| a.label.cmp(&b.label));
        cfg.services.insert(service.clone(), sc);
    }

    // A register decoded by a device must not be split from its device.
    for (dev_owner, sc) in &cfg.services {
        for dev in &sc.devices {
            let (lo, hi) = dev.range();
            for (reg_owner, other) in &cfg.services {
                if reg_owner == dev_owner {
                    continue;
                }
                if let Some(b) = other
                    .registers
                    .iter()
                    .find(|b| (lo..hi).contains(&(b.phys_addr as u64)))
                {
                    return Err(ConfigError::SharedPeripheral {
                        register: b.label.clone(),
                        device: dev.label.clone(),
                        first: dev_owner.clone(),
                        second: reg_owner.clone(),
                    });
                }
            }
        }
    }
    Ok(cfg)
}

/// Usage frequency descending; equal frequencies by label.
pub(crate) fn sort_bindings(bindings: &mut [Binding]) {
    bindings.sort_by(|a, b| {
        b.usage_freq
            .cmp(&a.usage_freq)
            .then_with(|| a.label.cmp(&b.label))
    });
}
