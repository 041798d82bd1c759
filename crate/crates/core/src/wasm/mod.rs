//! A small interpreter for the 32-bit integer subset of WebAssembly 1.0.

pub mod builder;
pub mod decode;
pub mod encode;
pub mod exec;
pub mod leb;
pub mod memory;
pub mod module;
pub mod validate;

pub use builder::ModuleBuilder;
pub use decode::{custom_sections, decode_module, DecodeError, DecodeErrorKind};
pub use encode::{emit_module, ModuleSpec, SpecError};
pub use exec::{
    instantiate, invoke, AccessKind, Execution, FuncRef, Hook, Host, HostFuncId, HostLinker,
    InvokeError, LinkError, MemAccess, ModuleInstance, NoHost, Status, Trap, TrapKind,
};
pub use memory::{LinearMemory, MemoryConfig, DEFAULT_MAX_CALL_DEPTH, DEFAULT_PAGE_SIZE};
pub use module::*;
pub use validate::{validate_module, ValidModule, ValidateError, ValidateErrorKind};

/// Decodes and validates in one go.
pub fn load(bytes: &[u8]) -> Result<std::sync::Arc<ValidModule>, LoadError> {
    Ok(validate_module(decode_module(bytes)?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
}
