//! Byte-oriented range coder over 16-bit frequency tables.
//!
//! The state is a 33-bit `low` (carry in bit 32), a 32-bit `range`, a pending
//! byte `cache` and a count of pending `0xFF` bytes. Starting from
//! `low = 0, range = 0xFFFF_FFFF, cache = 0, pending = 1`, coding a symbol
//! with cumulative start `s` and frequency `f` does
//!
//! ```text
//! r = range >> 16; low += r * s; range = r * f
//! while range < 2^24 { range <<= 8; shift_low() }
//! ```
//!
//! where `shift_low` emits `cache + carry` followed by the pending `0xFF`
//! bytes (each plus carry) once the top byte of `low` can no longer change,
//! then shifts `low` left by 8 bits modulo 2^32. The encoder finishes with
//! five `shift_low` calls, so an empty stream is five bytes and the first
//! byte is always zero.
//!
//! The decoder reads the leading zero byte and four code bytes, and for every
//! symbol computes `v = code / (range >> 16)`. Values of `v` at or above 2^16
//! and a non-zero leading byte are reported as corruption. Running out of
//! input is reported as truncation, and bytes left over after the last symbol
//! are reported as corruption.

use super::{CodingError, PmfChannel, PmfTable, QuantizedCode, PROB_BITS};
use crate::codec::LayerId;

const TOP: u32 = 1 << 24;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder { low: 0, range: u32::MAX, cache: 0, pending: 1, out: Vec::new() }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > 0xFFFF_FFFF {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Codes `symbol` with the channel's frequencies.
    pub fn encode(&mut self, channel: &PmfChannel, symbol: i32) -> Result<(), CodingError> {
        let (start, freq) = channel.interval(symbol).ok_or(CodingError::OutOfSupport { channel: 0, symbol })?;
        let r = self.range >> PROB_BITS;
        self.low += r as u64 * start as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    input: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(input: &'a [u8]) -> Result<Self, CodingError> {
        if input.len() < 5 {
            return Err(CodingError::Truncated);
        }
        if input[0] != 0 {
            return Err(CodingError::Corrupt("leading byte must be zero".into()));
        }
        let code = u32::from_be_bytes([input[1], input[2], input[3], input[4]]);
        Ok(RangeDecoder { input, pos: 5, code, range: u32::MAX })
    }

    pub fn decode(&mut self, channel: &PmfChannel) -> Result<i32, CodingError> {
        let r = self.range >> PROB_BITS;
        let value = self.code / r;
        let (symbol, start, freq) =
            channel.lookup(value).ok_or_else(|| CodingError::Corrupt(format!("code value {value} out of range")))?;
        self.code -= r * start;
        self.range = r * freq;
        while self.range < TOP {
            let byte = *self.input.get(self.pos).ok_or(CodingError::Truncated)?;
            self.pos += 1;
            self.code = (self.code << 8) | byte as u32;
            self.range <<= 8;
        }
        Ok(symbol)
    }

    /// Fails unless every input byte was consumed.
    pub fn finish(self) -> Result<(), CodingError> {
        match self.input.len() - self.pos {
            0 => Ok(()),
            extra => Err(CodingError::Corrupt(format!("{extra} trailing bytes"))),
        }
    }
}

/// Codes one symbol per table channel.
pub fn range_encode(code: &QuantizedCode, table: &PmfTable) -> Result<Vec<u8>, CodingError> {
    if code.symbols.len() != table.len() {
        return Err(CodingError::ChannelCount { symbols: code.symbols.len(), channels: table.len() });
    }
    let mut enc = RangeEncoder::new();
    for (i, (&s, ch)) in code.symbols.iter().zip(table.channels()).enumerate() {
        enc.encode(ch, s).map_err(|_| CodingError::OutOfSupport { channel: i, symbol: s })?;
    }
    Ok(enc.finish())
}

pub fn range_decode(
    bytes: &[u8],
    table: &PmfTable,
    layer: LayerId,
    n_symbols: usize,
) -> Result<QuantizedCode, CodingError> {
    if n_symbols != table.len() {
        return Err(CodingError::ChannelCount { symbols: n_symbols, channels: table.len() });
    }
    let mut dec = RangeDecoder::new(bytes)?;
    let symbols = table.channels().iter().map(|ch| dec.decode(ch)).collect::<Result<Vec<_>, _>>()?;
    dec.finish()?;
    Ok(QuantizedCode { layer, symbols })
}
