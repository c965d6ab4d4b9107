//! State shared by both execution engines: tables, the flow metadata pool,
//! installed blocks, and the per-packet frame of packet, metadata and
//! parameter buffers.
//!
//! Table and block mutations issued from the datapath go through the same
//! functions as control-plane mutations, so both engines observe identical
//! effects.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::bits::{self, BitError, BitString};
use crate::checksum;
use crate::isa::{EntryMod, EntryOp, InstructionBlock, Operand, TableMod};
use crate::perf::CostReport;
use crate::space::{FieldRef, FlowMetadataPool, MetadataBuf, PacketBuf, Space, SpaceSizes};
use crate::table::{EntryKey, FlowEntry, MissPolicy, TableError, TableStore};

/// Reason code attached to packet-ins produced by a table miss.
pub const MISS_REASON: u16 = 0xffff;
pub const DEFAULT_HOP_LIMIT: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Disposition {
    Output(u32),
    Drop,
    PacketIn(u16),
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::Output(p) => write!(f, "out {p}"),
            Disposition::Drop => f.write_str("drop"),
            Disposition::PacketIn(r) => write!(f, "packetin {r}"),
        }
    }
}

/// Why execution stopped early. A faulted packet is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Fault {
    HopLimit,
    OutOfRange(Space),
    PacketOverflow,
    Unaligned,
    UnknownTable(u16),
    UnknownBlock(u32),
    KeyWidth(u16),
    EmptyKey,
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::HopLimit => f.write_str("hop limit exceeded"),
            Fault::OutOfRange(s) => write!(f, "{} access out of range", s.mnemonic()),
            Fault::PacketOverflow => f.write_str("packet would exceed maximum size"),
            Fault::Unaligned => f.write_str("unaligned structural edit"),
            Fault::UnknownTable(t) => write!(f, "unknown table {t}"),
            Fault::UnknownBlock(b) => write!(f, "unknown block {b}"),
            Fault::KeyWidth(t) => write!(f, "key width mismatch on table {t}"),
            Fault::EmptyKey => f.write_str("empty key"),
        }
    }
}

impl Fault {
    fn from_bits(space: Space, e: BitError) -> Fault {
        match e {
            BitError::Overflow(_) => Fault::PacketOverflow,
            BitError::Unaligned { .. } => Fault::Unaligned,
            _ => Fault::OutOfRange(space),
        }
    }
}

/// The outcome of one packet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub disposition: Disposition,
    pub packet: Vec<u8>,
    pub cost: CostReport,
    pub fault: Option<Fault>,
}

/// Per-step record for the trace sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub block_id: u32,
    pub index: usize,
    pub op: String,
    pub cost: CostReport,
}

/// Where control goes after a table lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transfer {
    Block { block_id: u32, params: Vec<u8> },
    Finish(Disposition),
}

/// Buffers visible to one packet's execution.
#[derive(Debug, Clone)]
pub struct Frame {
    pub packet: Vec<u8>,
    pub ingress_port: u32,
    pub meta: MetadataBuf,
    params: Vec<u8>,
    param_size: usize,
}

impl Frame {
    pub fn admit(packet: PacketBuf, sizes: &SpaceSizes) -> Self {
        Frame {
            meta: MetadataBuf::admit(sizes.metadata, packet.ingress_port),
            packet: packet.bytes,
            ingress_port: packet.ingress_port,
            params: vec![0; sizes.parameter],
            param_size: sizes.parameter,
        }
    }

    /// Installs an entry's parameter bytes, zero padded.
    pub fn bind_params(&mut self, params: &[u8]) {
        self.params.clear();
        self.params.extend_from_slice(params);
        self.params.resize(self.param_size.max(params.len()), 0);
    }

    pub fn params(&self) -> &[u8] {
        &self.params
    }

    pub fn buf<'a>(&'a self, pool: &'a FlowMetadataPool, space: Space) -> &'a [u8] {
        match space {
            Space::Packet => &self.packet,
            Space::Metadata => &self.meta.bytes,
            Space::Parameter => &self.params,
            Space::Pool => pool.bytes(),
        }
    }

    pub fn buf_mut<'a>(&'a mut self, pool: &'a mut FlowMetadataPool, space: Space) -> &'a mut [u8] {
        match space {
            Space::Packet => &mut self.packet,
            Space::Metadata => &mut self.meta.bytes,
            Space::Parameter => &mut self.params,
            Space::Pool => pool.bytes_mut(),
        }
    }

    pub fn read(&self, pool: &FlowMetadataPool, f: &FieldRef) -> Result<u64, Fault> {
        bits::read_bits(self.buf(pool, f.space), f.offset as usize, f.length as usize)
            .map_err(|e| Fault::from_bits(f.space, e))
    }

    /// Writes the low `f.length` bits of `value`.
    pub fn write(&mut self, pool: &mut FlowMetadataPool, f: &FieldRef, value: u64) -> Result<(), Fault> {
        let v = value & bits::low_mask(f.length as usize);
        bits::write_bits(self.buf_mut(pool, f.space), f.offset as usize, f.length as usize, v)
            .map_err(|e| Fault::from_bits(f.space, e))
    }

    /// Reads a field of any width as a bit string.
    pub fn read_wide(&self, pool: &FlowMetadataPool, f: &FieldRef) -> Result<BitString, Fault> {
        let mut out = BitString::zeros(0);
        out.push_bits(self.buf(pool, f.space), f.offset as usize, f.length as usize)
            .map_err(|e| Fault::from_bits(f.space, e))?;
        Ok(out)
    }

    pub fn operand(&self, pool: &FlowMetadataPool, op: &Operand) -> Result<u64, Fault> {
        match op {
            Operand::Imm { value, .. } => Ok(*value),
            Operand::Field(f) => self.read(pool, f),
        }
    }

    /// Concatenates operands at their declared widths.
    pub fn concat(&self, pool: &FlowMetadataPool, ops: &[Operand]) -> Result<BitString, Fault> {
        let mut out = BitString::zeros(0);
        for op in ops {
            match op {
                Operand::Imm { value, width } => out.push(*value, *width as usize),
                Operand::Field(f) => out.append(&self.read_wide(pool, f)?),
            }
        }
        Ok(out)
    }

    pub fn insert_packet_bits(&mut self, offset: usize, length: usize, value: u64) -> Result<(), Fault> {
        let v = value & bits::low_mask(length);
        bits::insert_bits(&mut self.packet, offset, length, v).map_err(|e| Fault::from_bits(Space::Packet, e))
    }

    pub fn delete_packet_bits(&mut self, offset: usize, length: usize) -> Result<(), Fault> {
        bits::delete_bits(&mut self.packet, offset, length).map_err(|e| Fault::from_bits(Space::Packet, e))
    }

    /// Internet checksum over `region`, reading `skip` as zero.
    pub fn checksum(&self, pool: &FlowMetadataPool, region: &FieldRef, skip: &FieldRef) -> Result<u16, Fault> {
        let buf = self.buf(pool, region.space);
        let start = region.offset as usize / 8;
        let end = region.end().div_ceil(8);
        if end > buf.len() {
            return Err(Fault::OutOfRange(region.space));
        }
        let mut bytes = buf[start..end].to_vec();
        if skip.overlaps(region) {
            let rel = skip.offset as usize - region.offset as usize;
            bits::write_bits(&mut bytes, rel, skip.length as usize, 0).map_err(|e| Fault::from_bits(region.space, e))?;
        }
        Ok(checksum::internet_checksum(&bytes))
    }

    /// Copies entry parameters into a metadata region, zero filling past
    /// their end.
    pub fn copy_params(&mut self, dst: &FieldRef, params: &[u8]) -> Result<(), Fault> {
        let width = dst.length as usize;
        let mut padded = params.to_vec();
        padded.resize(width.div_ceil(8).max(params.len()), 0);
        let mut region = BitString::zeros(0);
        region.push_bits(&padded, 0, width).map_err(|e| Fault::from_bits(Space::Metadata, e))?;
        bits::copy_bits(region.as_bytes(), 0, &mut self.meta.bytes, dst.offset as usize, width)
            .map_err(|e| Fault::from_bits(Space::Metadata, e))
    }

    /// Records a SEARCH_TABLE outcome: parameters are copied on a hit and
    /// the hit flag is always updated.
    pub fn search_result(&mut self, dst: &FieldRef, hit: Option<&[u8]>) -> Result<(), Fault> {
        if let Some(params) = hit {
            self.copy_params(dst, params)?;
        }
        self.meta.set_hit_flag(hit.is_some());
        Ok(())
    }
}

/// Tables, pool and installed blocks.
#[derive(Debug, Clone)]
pub struct Datapath {
    pub sizes: SpaceSizes,
    pub tables: TableStore,
    pub pool: FlowMetadataPool,
    pub blocks: BTreeMap<u32, InstructionBlock>,
    pub start_block: u32,
    pub hop_limit: u32,
    /// ENTRY_MOD / TABLE_MOD instructions whose mutation was rejected.
    pub rejected_mods: u64,
}

impl Datapath {
    pub fn new(sizes: SpaceSizes) -> Self {
        Datapath {
            sizes,
            tables: TableStore::new(),
            pool: FlowMetadataPool::new(sizes.pool),
            blocks: BTreeMap::new(),
            start_block: 0,
            hop_limit: DEFAULT_HOP_LIMIT,
            rejected_mods: 0,
        }
    }

    /// Looks up `key` and decides where control goes next.
    pub fn lookup_transfer(&mut self, table_id: u16, key: &BitString) -> Result<Transfer, Fault> {
        let table = self.tables.get_mut(table_id).ok_or(Fault::UnknownTable(table_id))?;
        let miss = table.schema().miss;
        let hit = table.lookup(key).map_err(|_| Fault::KeyWidth(table_id))?;
        Ok(match (hit, miss) {
            (Some(e), _) => Transfer::Block {
                block_id: e.block_id,
                params: e.params.clone(),
            },
            (None, MissPolicy::Drop) => Transfer::Finish(Disposition::Drop),
            (None, MissPolicy::PacketIn) => Transfer::Finish(Disposition::PacketIn(MISS_REASON)),
            (None, MissPolicy::GotoBlock(b)) => Transfer::Block {
                block_id: b,
                params: Vec::new(),
            },
        })
    }

    /// Looks up `key`, returning the hit entry's parameters.
    pub fn search(&mut self, table_id: u16, key: &BitString) -> Result<Option<Vec<u8>>, Fault> {
        let table = self.tables.get_mut(table_id).ok_or(Fault::UnknownTable(table_id))?;
        let hit = table.lookup(key).map_err(|_| Fault::KeyWidth(table_id))?;
        Ok(hit.map(|e| e.params.clone()))
    }

    /// Applies an ENTRY_MOD; rejected mutations are counted, not fatal.
    pub fn entry_mod(&mut self, frame: &Frame, m: &EntryMod) -> Result<(), Fault> {
        let value = frame.concat(&self.pool, &m.key)?;
        let params_bits = frame.concat(&self.pool, &m.params)?;
        let params = params_bits.as_bytes().to_vec();
        if self.apply_entry_op(m, value, params).is_err() {
            self.rejected_mods += 1;
        }
        Ok(())
    }

    fn apply_entry_op(&mut self, m: &EntryMod, value: BitString, params: Vec<u8>) -> Result<(), TableError> {
        if value.width() != m.mask.width() {
            return Err(TableError::KeyWidth {
                expected: m.mask.width(),
                got: value.width(),
            });
        }
        let value = value.and(&m.mask);
        let blocks = &self.blocks;
        match m.op {
            EntryOp::Insert => {
                let e = FlowEntry::masked(value, m.mask.clone(), m.priority, m.block_id, params);
                self.tables.insert(m.table_id, e, |b| blocks.contains_key(&b))
            }
            EntryOp::Modify => {
                let key = EntryKey {
                    value,
                    mask: m.mask.clone(),
                    priority: m.priority,
                };
                self.tables.modify(m.table_id, &key, m.block_id, params, |b| blocks.contains_key(&b))
            }
            EntryOp::Delete => {
                let key = EntryKey {
                    value,
                    mask: m.mask.clone(),
                    priority: m.priority,
                };
                self.tables.delete(m.table_id, &key).map(|_| ())
            }
        }
    }

    /// Applies a TABLE_MOD; rejected mutations are counted, not fatal.
    pub fn table_mod(&mut self, m: &TableMod) {
        let r = match m {
            TableMod::Create(s) => self.tables.create(s.clone()),
            TableMod::Delete(id) => self.tables.remove(*id).map(|_| ()),
        };
        if r.is_err() {
            self.rejected_mods += 1;
        }
    }
}
