pub mod access;
pub mod devices;
pub mod harness;
pub mod interrupts;
pub mod manifest;
pub mod platform;
pub mod system;
pub mod text;
pub mod wasm;
