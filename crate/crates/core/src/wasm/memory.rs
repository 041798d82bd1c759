/// Default page granularity. WebAssembly proper uses 64 KiB pages; the
/// runtime shrinks them to fit microcontroller RAM.
pub const DEFAULT_PAGE_SIZE: u32 = 4096;
pub const DEFAULT_MAX_CALL_DEPTH: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryConfig {
    pub page_size: u32,
    /// Bytes of conveyor memory appended above the linear memory; 0 without DMA.
    pub conveyor_size: u32,
    pub max_call_depth: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            page_size: DEFAULT_PAGE_SIZE,
            conveyor_size: 0,
            max_call_depth: DEFAULT_MAX_CALL_DEPTH,
        }
    }
}

/// Linear memory followed by the (possibly empty) conveyor region.
///
/// Both live in one allocation so the interpreter performs a single bounds
/// check against the shifted limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearMemory {
    bytes: Vec<u8>,
    page_size: u32,
    size_pages: u32,
    conveyor_size: u32,
}

impl LinearMemory {
    /// Returns `None` when the total size does not fit the 32-bit index space.
    pub fn new(size_pages: u32, page_size: u32, conveyor_size: u32) -> Option<Self> {
        let data = size_pages as u64 * page_size as u64;
        let total = data + conveyor_size as u64;
        if total > u32::MAX as u64 {
            return None;
        }
        Some(Self {
            bytes: vec![0; total as usize],
            page_size,
            size_pages,
            conveyor_size,
        })
    }

    pub fn page_size(&self) -> u32 {
        self.page_size
    }

    pub fn size_pages(&self) -> u32 {
        self.size_pages
    }

    /// Size of the linear memory proper; also the conveyor base index.
    pub fn data_size(&self) -> u32 {
        self.size_pages * self.page_size
    }

    pub fn conveyor_size(&self) -> u32 {
        self.conveyor_size
    }

    /// One past the highest accessible index, conveyor included.
    pub fn limit(&self) -> u64 {
        self.bytes.len() as u64
    }

    #[inline]
    pub fn in_bounds(&self, addr: u32, width: u32) -> bool {
        addr as u64 + width as u64 <= self.bytes.len() as u64
    }

    /// Little-endian read of 1, 2 or 4 bytes.
    #[inline]
    pub fn read(&self, addr: u32, width: u32) -> Option<u32> {
        if !self.in_bounds(addr, width) {
            return None;
        }
        let a = addr as usize;
        Some(match width {
            1 => self.bytes[a] as u32,
            2 => u16::from_le_bytes([self.bytes[a], self.bytes[a + 1]]) as u32,
            _ => u32::from_le_bytes(self.bytes[a..a + 4].try_into().unwrap()),
        })
    }

    #[inline]
    pub fn write(&mut self, addr: u32, width: u32, value: u32) -> bool {
        if !self.in_bounds(addr, width) {
            return false;
        }
        let a = addr as usize;
        match width {
            1 => self.bytes[a] = value as u8,
            2 => self.bytes[a..a + 2].copy_from_slice(&(value as u16).to_le_bytes()),
            _ => self.bytes[a..a + 4].copy_from_slice(&value.to_le_bytes()),
        }
        true
    }

    /// Bytes of the linear memory proper (the conveyor is excluded).
    pub fn data_slice(&self, ptr: u32, len: u32) -> Option<&[u8]> {
        let end = ptr as u64 + len as u64;
        if end > self.data_size() as u64 {
            return None;
        }
        Some(&self.bytes[ptr as usize..end as usize])
    }

    pub fn data_slice_mut(&mut self, ptr: u32, len: u32) -> Option<&mut [u8]> {
        let end = ptr as u64 + len as u64;
        if end > self.data_size() as u64 {
            return None;
        }
        Some(&mut self.bytes[ptr as usize..end as usize])
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}
