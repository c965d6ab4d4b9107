//! Bit-granular access to byte buffers.
//!
//! Fields are big-endian bit strings: bit 0 is the most significant bit of
//! byte 0, so an IPv4 header starting with `0x45` has version `4` at bits
//! `0..4` and header length `5` at bits `4..8`.

use std::fmt;

use thiserror::Error;

/// Largest packet buffer the datapath will hold.
pub const MAX_PACKET_BYTES: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("bit range {offset}+{length} exceeds buffer of {available} bits")]
    OutOfRange {
        offset: usize,
        length: usize,
        available: usize,
    },
    #[error("width {0} exceeds 64 bits")]
    Width(usize),
    #[error("value {value:#x} does not fit in {length} bits")]
    ValueTooWide { value: u64, length: usize },
    #[error("structural edit at bit {offset} length {length} is not byte aligned")]
    Unaligned { offset: usize, length: usize },
    #[error("buffer would grow to {0} bytes")]
    Overflow(usize),
}

fn check_range(buf_bits: usize, offset: usize, length: usize) -> Result<(), BitError> {
    match offset.checked_add(length) {
        Some(end) if end <= buf_bits => Ok(()),
        _ => Err(BitError::OutOfRange {
            offset,
            length,
            available: buf_bits,
        }),
    }
}

pub(crate) fn low_mask(length: usize) -> u64 {
    if length >= 64 {
        u64::MAX
    } else {
        (1u64 << length) - 1
    }
}

/// Reads `length` (at most 64) bits starting at bit `offset`.
pub fn read_bits(buf: &[u8], offset: usize, length: usize) -> Result<u64, BitError> {
    if length > 64 {
        return Err(BitError::Width(length));
    }
    check_range(buf.len() * 8, offset, length)?;
    if length == 0 {
        return Ok(0);
    }
    let first = offset / 8;
    let last = (offset + length - 1) / 8;
    let mut window: u128 = 0;
    for &b in &buf[first..=last] {
        window = (window << 8) | b as u128;
    }
    let span_bits = (last - first + 1) * 8;
    let shift = span_bits - (offset % 8) - length;
    Ok(((window >> shift) as u64) & low_mask(length))
}

/// Writes the low `length` bits of `value` at bit `offset`. Bits outside the
/// addressed range are untouched.
pub fn write_bits(buf: &mut [u8], offset: usize, length: usize, value: u64) -> Result<(), BitError> {
    if length > 64 {
        return Err(BitError::Width(length));
    }
    if value & !low_mask(length) != 0 {
        return Err(BitError::ValueTooWide { value, length });
    }
    check_range(buf.len() * 8, offset, length)?;
    if length == 0 {
        return Ok(());
    }
    let first = offset / 8;
    let last = (offset + length - 1) / 8;
    let mut window: u128 = 0;
    for &b in &buf[first..=last] {
        window = (window << 8) | b as u128;
    }
    let span_bits = (last - first + 1) * 8;
    let shift = span_bits - (offset % 8) - length;
    let mask = (low_mask(length) as u128) << shift;
    window = (window & !mask) | ((value as u128) << shift);
    for (i, b) in buf[first..=last].iter_mut().rev().enumerate() {
        *b = (window >> (i * 8)) as u8;
    }
    Ok(())
}

/// Copies `length` bits of any size between two buffers.
pub fn copy_bits(
    src: &[u8],
    src_offset: usize,
    dst: &mut [u8],
    dst_offset: usize,
    length: usize,
) -> Result<(), BitError> {
    check_range(src.len() * 8, src_offset, length)?;
    check_range(dst.len() * 8, dst_offset, length)?;
    let mut done = 0;
    while done < length {
        let chunk = (length - done).min(64);
        let v = read_bits(src, src_offset + done, chunk)?;
        write_bits(dst, dst_offset + done, chunk, v)?;
        done += chunk;
    }
    Ok(())
}

/// Inserts `length` bits holding `value` at `offset`. Byte granular only.
pub fn insert_bits(buf: &mut Vec<u8>, offset: usize, length: usize, value: u64) -> Result<(), BitError> {
    if !offset.is_multiple_of(8) || !length.is_multiple_of(8) {
        return Err(BitError::Unaligned { offset, length });
    }
    if length > 64 {
        return Err(BitError::Width(length));
    }
    if value & !low_mask(length) != 0 {
        return Err(BitError::ValueTooWide { value, length });
    }
    check_range(buf.len() * 8, offset, 0)?;
    let grown = buf.len() + length / 8;
    if grown > MAX_PACKET_BYTES {
        return Err(BitError::Overflow(grown));
    }
    let at = offset / 8;
    let bytes = value.to_be_bytes();
    let inserted = &bytes[8 - length / 8..];
    buf.splice(at..at, inserted.iter().copied());
    Ok(())
}

/// Removes `length` bits at `offset`. Byte granular only.
pub fn delete_bits(buf: &mut Vec<u8>, offset: usize, length: usize) -> Result<(), BitError> {
    if !offset.is_multiple_of(8) || !length.is_multiple_of(8) {
        return Err(BitError::Unaligned { offset, length });
    }
    check_range(buf.len() * 8, offset, length)?;
    let at = offset / 8;
    buf.drain(at..at + length / 8);
    Ok(())
}

/// A bit string of fixed width, backed by bytes with zeroed padding bits.
///
/// Used for search keys, entry values and masks.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    width: usize,
    bytes: Vec<u8>,
}

impl BitString {
    pub fn zeros(width: usize) -> Self {
        BitString {
            width,
            bytes: vec![0; width.div_ceil(8)],
        }
    }

    pub fn ones(width: usize) -> Self {
        let mut s = Self::zeros(width);
        for b in s.bytes.iter_mut() {
            *b = 0xff;
        }
        s.clear_padding();
        s
    }

    /// Mask whose first `prefix` bits are set.
    pub fn prefix_mask(width: usize, prefix: usize) -> Self {
        let mut s = Self::zeros(width);
        for i in 0..prefix.min(width) {
            s.set_bit(i, true);
        }
        s
    }

    /// Builds from bytes; `bytes` must be exactly `ceil(width/8)` long with
    /// zero padding.
    pub fn from_bytes(width: usize, bytes: Vec<u8>) -> Option<Self> {
        if bytes.len() != width.div_ceil(8) {
            return None;
        }
        let s = BitString { width, bytes };
        let mut canon = s.clone();
        canon.clear_padding();
        (canon == s).then_some(s)
    }

    pub fn from_u64(width: usize, value: u64) -> Self {
        let mut s = Self::zeros(0);
        s.push(value, width);
        s
    }

    fn clear_padding(&mut self) {
        let pad = self.bytes.len() * 8 - self.width;
        if pad > 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << pad;
            }
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bytes[i / 8] & (0x80 >> (i % 8)) != 0
    }

    pub fn set_bit(&mut self, i: usize, on: bool) {
        let m = 0x80 >> (i % 8);
        if on {
            self.bytes[i / 8] |= m;
        } else {
            self.bytes[i / 8] &= !m;
        }
    }

    /// Appends the low `width` bits of `value` (at most 64).
    pub fn push(&mut self, value: u64, width: usize) {
        debug_assert!(width <= 64);
        let start = self.width;
        self.width += width;
        self.bytes.resize(self.width.div_ceil(8), 0);
        write_bits(&mut self.bytes, start, width, value & low_mask(width))
            .expect("push stays in range");
    }

    /// Appends a bit range taken from `src`.
    pub fn push_bits(&mut self, src: &[u8], offset: usize, width: usize) -> Result<(), BitError> {
        check_range(src.len() * 8, offset, width)?;
        let start = self.width;
        self.width += width;
        self.bytes.resize(self.width.div_ceil(8), 0);
        copy_bits(src, offset, &mut self.bytes, start, width)
    }

    pub fn append(&mut self, other: &BitString) {
        self.push_bits(&other.bytes.clone(), 0, other.width)
            .expect("own bytes in range");
    }

    pub fn and(&self, mask: &BitString) -> BitString {
        debug_assert_eq!(self.width, mask.width);
        BitString {
            width: self.width,
            bytes: self.bytes.iter().zip(&mask.bytes).map(|(a, b)| a & b).collect(),
        }
    }

    /// True when every bit set in `self` is also set in `mask`.
    pub fn within(&self, mask: &BitString) -> bool {
        self.bytes.iter().zip(&mask.bytes).all(|(v, m)| v & !m == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Prefix length if this is a contiguous prefix mask.
    pub fn prefix_len(&self) -> Option<usize> {
        let n = self.count_ones();
        (*self == Self::prefix_mask(self.width, n)).then_some(n)
    }

    pub fn is_all_ones(&self) -> bool {
        self.count_ones() == self.width
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}b:0x{}", self.width, self.to_hex())
    }
}
