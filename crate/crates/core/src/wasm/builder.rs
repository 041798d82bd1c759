use super::module::*;

/// Incremental construction of a [`WasmModule`].
///
/// Imports must be declared before any function so that returned function
/// indices stay stable.
#[derive(Debug, Clone, Default)]
pub struct ModuleBuilder {
    module: WasmModule,
}

impl ModuleBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of the signature, adding it if not yet present.
    pub fn type_index(&mut self, params: u32, results: u32) -> u32 {
        let ty = FuncType::new(params, results);
        match self.module.types.iter().position(|t| *t == ty) {
            Some(i) => i as u32,
            None => {
                self.module.types.push(ty);
                self.module.types.len() as u32 - 1
            }
        }
    }

    pub fn import(&mut self, module: &str, field: &str, params: u32, results: u32) -> u32 {
        assert!(
            self.module.functions.is_empty(),
            "imports must precede defined functions"
        );
        let type_index = self.type_index(params, results);
        self.module.imports.push(ImportDecl {
            module: module.into(),
            field: field.into(),
            type_index,
        });
        self.module.imports.len() as u32 - 1
    }

    /// Adds a function exported under `name` and returns its index.
    pub fn func(&mut self, name: &str, params: u32, results: u32, locals: u32, body: Vec<Instr>) -> u32 {
        let index = self.internal_func(params, results, locals, body);
        self.export(name, ExportKind::Func, index);
        index
    }

    pub fn internal_func(&mut self, params: u32, results: u32, locals: u32, body: Vec<Instr>) -> u32 {
        let type_index = self.type_index(params, results);
        self.module.functions.push(Function {
            type_index,
            locals,
            body,
        });
        self.module.func_count() - 1
    }

    pub fn export(&mut self, name: &str, kind: ExportKind, index: u32) -> &mut Self {
        self.module
            .exports
            .insert(name.into(), Export { kind, index });
        self
    }

    pub fn memory(&mut self, pages: u32) -> &mut Self {
        self.module.memory = Some(Limits {
            min: pages,
            max: None,
        });
        self
    }

    pub fn table(&mut self, size: u32) -> &mut Self {
        self.module.table = Some(Limits {
            min: size,
            max: None,
        });
        self
    }

    pub fn elements(&mut self, offset: u32, funcs: Vec<u32>) -> &mut Self {
        self.module.elements.push(ElementSegment { offset, funcs });
        self
    }

    pub fn data(&mut self, offset: u32, bytes: Vec<u8>) -> &mut Self {
        self.module.data.push(DataSegment { offset, bytes });
        self
    }

    pub fn global(&mut self, mutable: bool, init: i32) -> u32 {
        self.module.globals.push(Global { mutable, init });
        self.module.globals.len() as u32 - 1
    }

    pub fn custom(&mut self, name: &str, payload: Vec<u8>) -> &mut Self {
        self.module.custom_sections.insert(name.into(), payload);
        self
    }

    pub fn build(&self) -> WasmModule {
        self.module.clone()
    }
}
