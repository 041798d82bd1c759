//! LEB128 helpers shared by the decoder and the emitter.

pub fn write_u32(out: &mut Vec<u8>, mut value: u32) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn write_i32(out: &mut Vec<u8>, mut value: i32) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        let done = (value == 0 && byte & 0x40 == 0) || (value == -1 && byte & 0x40 != 0);
        if done {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LebError {
    Truncated,
    Overlong,
}

/// Reads an unsigned LEB128 value of at most 5 bytes; returns the value and
/// the number of bytes consumed.
pub fn read_u32(bytes: &[u8]) -> Result<(u32, usize), LebError> {
    let mut result: u32 = 0;
    for i in 0..5 {
        let byte = *bytes.get(i).ok_or(LebError::Truncated)?;
        let payload = (byte & 0x7f) as u32;
        if i == 4 && payload > 0x0f {
            return Err(LebError::Overlong);
        }
        result |= payload << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((result, i + 1));
        }
    }
    Err(LebError::Overlong)
}

pub fn read_i32(bytes: &[u8]) -> Result<(i32, usize), LebError> {
    let mut result: i64 = 0;
    for i in 0..5 {
        let byte = *bytes.get(i).ok_or(LebError::Truncated)?;
        result |= ((byte & 0x7f) as i64) << (7 * i);
        if byte & 0x80 == 0 {
            let shift = 7 * (i + 1);
            if shift < 64 && byte & 0x40 != 0 {
                result |= -1i64 << shift;
            }
            if i == 4 {
                // The unused bits of the fifth byte must be a sign extension.
                let high = byte & 0x70;
                let sign = byte & 0x08;
                if (sign == 0 && high != 0) || (sign != 0 && high != 0x70) {
                    return Err(LebError::Overlong);
                }
            }
            return Ok((result as i32, i + 1));
        }
    }
    Err(LebError::Overlong)
}
