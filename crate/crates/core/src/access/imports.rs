//! Host functions offered to services under the `env` module.

use crate::wasm::{FuncType, HostFuncId, HostLinker};

pub const DEVICE_HANDLE: HostFuncId = HostFuncId(0);
pub const OSAPI_CALL: HostFuncId = HostFuncId(1);
pub const RAPI_HANDLE: HostFuncId = HostFuncId(2);
pub const RAPI_READ: HostFuncId = HostFuncId(3);
pub const RAPI_WRITE: HostFuncId = HostFuncId(4);
pub const IRQ_REGISTER: HostFuncId = HostFuncId(5);

pub const MODULE: &str = "env";

/// `(field, id, params, results)` for every import.
pub const TABLE: [(&str, HostFuncId, u32, u32); 6] = [
    ("wio_device_handle", DEVICE_HANDLE, 2, 1),
    ("wio_osapi_call", OSAPI_CALL, 5, 1),
    ("wio_rapi_handle", RAPI_HANDLE, 2, 1),
    ("wio_rapi_read", RAPI_READ, 1, 1),
    ("wio_rapi_write", RAPI_WRITE, 2, 1),
    ("wio_irq_register", IRQ_REGISTER, 4, 1),
];

pub fn linker() -> HostLinker {
    let mut l = HostLinker::new();
    for (field, id, params, results) in TABLE {
        l.define(MODULE, field, id, FuncType::new(params, results));
    }
    l
}

pub fn field_of(id: HostFuncId) -> Option<&'static str> {
    TABLE.iter().find(|t| t.1 == id).map(|t| t.0)
}
