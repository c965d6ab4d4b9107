//! Address spaces reachable from flow instructions and the buffers behind them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::{self, BitError, MAX_PACKET_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Space {
    Packet,
    Metadata,
    Parameter,
    Pool,
}

impl Space {
    pub const ALL: [Space; 4] = [Space::Packet, Space::Metadata, Space::Parameter, Space::Pool];

    /// Assembly mnemonic.
    pub fn mnemonic(self) -> &'static str {
        match self {
            Space::Packet => "pkt",
            Space::Metadata => "meta",
            Space::Parameter => "param",
            Space::Pool => "pool",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Space> {
        Space::ALL.into_iter().find(|sp| sp.mnemonic() == s)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Space::Packet => 0,
            Space::Metadata => 1,
            Space::Parameter => 2,
            Space::Pool => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Space> {
        Space::ALL.get(c as usize).copied()
    }
}

/// Longest field a single reference may name.
pub const MAX_FIELD_BITS: u16 = 512;

/// A bit-addressed field: `length` bits starting at bit `offset` of `space`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldRef {
    pub space: Space,
    pub offset: u16,
    pub length: u16,
}

impl FieldRef {
    pub const fn new(space: Space, offset: u16, length: u16) -> Self {
        FieldRef {
            space,
            offset,
            length,
        }
    }

    pub const fn pkt(offset: u16, length: u16) -> Self {
        Self::new(Space::Packet, offset, length)
    }

    pub const fn meta(offset: u16, length: u16) -> Self {
        Self::new(Space::Metadata, offset, length)
    }

    pub const fn param(offset: u16, length: u16) -> Self {
        Self::new(Space::Parameter, offset, length)
    }

    pub fn end(&self) -> usize {
        self.offset as usize + self.length as usize
    }

    /// Number of bytes a byte-granular load must cover to reach every bit.
    pub fn byte_span(&self) -> usize {
        let first = self.offset as usize / 8;
        let last = (self.end() - 1) / 8;
        last - first + 1
    }

    pub fn overlaps(&self, other: &FieldRef) -> bool {
        self.space == other.space
            && (self.offset as usize) < other.end()
            && (other.offset as usize) < self.end()
    }
}

impl fmt::Display for FieldRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}:{}]", self.space.mnemonic(), self.offset, self.length)
    }
}

/// Declared sizes, in bytes, used for static validation and allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceSizes {
    pub packet: usize,
    pub metadata: usize,
    pub parameter: usize,
    pub pool: usize,
}

impl Default for SpaceSizes {
    fn default() -> Self {
        SpaceSizes {
            packet: MAX_PACKET_BYTES,
            metadata: 128,
            parameter: 32,
            pool: 64 * 1024,
        }
    }
}

impl SpaceSizes {
    pub fn bytes(&self, space: Space) -> usize {
        match space {
            Space::Packet => self.packet,
            Space::Metadata => self.metadata,
            Space::Parameter => self.parameter,
            Space::Pool => self.pool,
        }
    }
}

/// Metadata bit set by SEARCH_TABLE: 1 after a hit, 0 after a miss.
pub const META_HIT_FLAG: FieldRef = FieldRef::meta(0, 1);
/// The ingress port is stamped here when a packet is admitted.
pub const META_INGRESS_PORT: FieldRef = FieldRef::meta(64, 32);
/// Smallest metadata buffer that can hold the reserved fields.
pub const MIN_METADATA_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketBuf {
    pub bytes: Vec<u8>,
    pub ingress_port: u32,
}

impl PacketBuf {
    pub fn new(ingress_port: u32, bytes: Vec<u8>) -> Self {
        PacketBuf {
            bytes,
            ingress_port,
        }
    }
}

/// Per-packet scratch metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataBuf {
    pub bytes: Vec<u8>,
}

impl MetadataBuf {
    /// Zeroed metadata with the ingress port stamped in.
    pub fn admit(size: usize, ingress_port: u32) -> Self {
        let mut bytes = vec![0; size.max(MIN_METADATA_BYTES)];
        let port = META_INGRESS_PORT;
        bits::write_bits(&mut bytes, port.offset as usize, port.length as usize, ingress_port as u64)
            .expect("metadata holds reserved fields");
        MetadataBuf { bytes }
    }

    pub fn hit_flag(&self) -> bool {
        self.bytes[0] & 0x80 != 0
    }

    pub fn set_hit_flag(&mut self, hit: bool) {
        if hit {
            self.bytes[0] |= 0x80;
        } else {
            self.bytes[0] &= 0x7f;
        }
    }
}

/// The flow metadata pool: global memory that persists across packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowMetadataPool {
    bytes: Vec<u8>,
}

impl FlowMetadataPool {
    pub fn new(size: usize) -> Self {
        FlowMetadataPool {
            bytes: vec![0; size],
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn read(&self, offset: usize, length: usize) -> Result<u64, BitError> {
        bits::read_bits(&self.bytes, offset, length)
    }

    pub fn write(&mut self, offset: usize, length: usize, value: u64) -> Result<(), BitError> {
        bits::write_bits(&mut self.bytes, offset, length, value)
    }

    /// Adds `delta` modulo 2^length.
    pub fn increment(&mut self, offset: usize, length: usize, delta: u64) -> Result<(), BitError> {
        let v = self.read(offset, length)?;
        self.write(offset, length, v.wrapping_add(delta) & bits::low_mask(length))
    }

    /// Copy of a byte window, for statistics snapshots.
    pub fn window(&self, offset: usize, len: usize) -> Vec<u8> {
        let start = offset.min(self.bytes.len());
        let end = offset.saturating_add(len).min(self.bytes.len());
        self.bytes[start..end].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn admission_zeroes_and_stamps_port() {
        let m = MetadataBuf::admit(128, 7);
        assert_eq!(m.bytes.len(), 128);
        assert_eq!(&m.bytes[8..12], &[0, 0, 0, 7]);
        assert!(m.bytes.iter().enumerate().all(|(i, b)| (8..12).contains(&i) || *b == 0));
        assert!(!m.hit_flag());
    }

    #[test]
    fn pool_increment_wraps() {
        let mut p = FlowMetadataPool::new(16);
        p.write(0, 8, 0xff).unwrap();
        p.increment(0, 8, 2).unwrap();
        assert_eq!(p.read(0, 8), Ok(1));
        assert!(p.increment(120, 16, 1).is_err());
    }

    #[test]
    fn byte_span() {
        assert_eq!(FieldRef::pkt(0, 8).byte_span(), 1);
        assert_eq!(FieldRef::pkt(4, 8).byte_span(), 2);
        assert_eq!(FieldRef::pkt(4, 64).byte_span(), 9);
    }
}
