//! Turning a service binary into a runnable, access-checked instance.

use thiserror::Error;

use crate::access::{imports, AccessMode, ServiceAccess, TrustMode};
use crate::manifest::{extract_requirements, ExtractError, PeripheralRequirements};
use crate::platform::{match_requirements, MemoryAccessConfiguration, PlatformDescription, Rejection};
use crate::wasm::{
    decode_module, instantiate, validate_module, DecodeError, Instr, LinkError, MemoryConfig, ModuleInstance,
    ValidateError, WasmModule,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("validate: {0}")]
    Validate(#[from] ValidateError),
    #[error("requirements: {0}")]
    Manifest(ExtractError),
    #[error(transparent)]
    Rejected(#[from] Rejection),
    #[error("link: {0}")]
    Link(#[from] LinkError),
}

/// A service ready to be handed to the machine.
#[derive(Debug, Clone)]
pub struct LoadedService {
    pub id: String,
    pub instance: ModuleInstance,
    pub access: ServiceAccess,
}

impl LoadedService {
    pub fn requirements(&self) -> &PeripheralRequirements {
        &self.access.resolved.requirements
    }
}

/// Requirements embedded in `module`; a module without the section needs nothing.
pub fn requirements_of(module: &WasmModule) -> Result<PeripheralRequirements, ExtractError> {
    match extract_requirements(module) {
        Err(ExtractError::Missing) => Ok(PeripheralRequirements::default()),
        r => r,
    }
}

/// Rewrites `i32.const <dummy>` to the conveyor slot of that binding.
/// Returns the number of rewritten constants.
pub fn relocate_dummies(module: &mut WasmModule, dummies: &[u32], conveyor_base: u32) -> usize {
    let mut n = 0;
    for f in &mut module.functions {
        for ins in &mut f.body {
            if let Instr::I32Const(c) = ins {
                if let Some(i) = dummies.iter().position(|d| *d == *c as u32) {
                    *c = (conveyor_base + i as u32 * crate::access::SLOT_BYTES) as i32;
                    n += 1;
                }
            }
        }
    }
    n
}

pub fn load_service(
    id: &str,
    bytes: &[u8],
    mode: AccessMode,
    trust: TrustMode,
    desc: &PlatformDescription,
    cfg: &MemoryAccessConfiguration,
    page_size: u32,
) -> Result<LoadedService, LoadError> {
    let mut module = decode_module(bytes)?;
    let req = requirements_of(&module).map_err(LoadError::Manifest)?;
    let resolved = match_requirements(id, &req, cfg, desc)?;

    let data_size = module.memory.map_or(0, |m| m.min) as u64 * page_size as u64;
    let data_size = u32::try_from(data_size).map_err(|_| LinkError::MemoryTooLarge(module.memory.map_or(0, |m| m.min)))?;
    if mode == AccessMode::MmioDma {
        relocate_dummies(&mut module, &resolved.dummies, data_size);
    }
    let conveyor_size = ServiceAccess::conveyor_len(mode, &resolved);
    let valid = validate_module(module)?;
    let instance = instantiate(
        valid,
        &imports::linker(),
        MemoryConfig {
            page_size,
            conveyor_size,
            ..MemoryConfig::default()
        },
    )?;
    Ok(LoadedService {
        id: id.to_owned(),
        access: ServiceAccess::new(resolved, mode, trust, data_size),
        instance,
    })
}
