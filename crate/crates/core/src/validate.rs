//! Static checks for blocks and programs.
//!
//! A program that validates cleanly never faults on metadata, parameter or
//! pool accesses, never references an unknown table or block, and always
//! terminates: branches only move forward and every block ends in a
//! terminal instruction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::bits::low_mask;
use crate::isa::{EntryOp, Instruction, InstructionBlock, Operand, Program, TableMod, MAX_BLOCK_LEN};
use crate::space::{FieldRef, Space, SpaceSizes, MAX_FIELD_BITS, META_HIT_FLAG};
use crate::table::{TableError, TableSchema, TableStore, MAX_KEY_BITS, MAX_PARAM_BYTES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagKind {
    EmptyBlock,
    BlockTooLarge(usize),
    MissingTerminal,
    ZeroLength(FieldRef),
    FieldTooLong(FieldRef),
    FieldOutOfRange(FieldRef),
    /// Arithmetic and comparison operands are limited to 64 bits.
    ArithWidth(FieldRef),
    /// Arithmetic operands must fit an 8-byte load window.
    ArithSpan(FieldRef),
    ReadOnlyDestination(FieldRef),
    ReservedBit(FieldRef),
    BadImmediate { value: u64, width: u8 },
    ValueTooWide { value: u64, length: usize },
    Unaligned { offset: u16, length: u16 },
    WrongSpace(FieldRef),
    PoolOutOfRange { offset: u32, length: u16 },
    ChecksumWidth(FieldRef),
    ChecksumRegion(FieldRef),
    ChecksumAlign(FieldRef),
    EmptyKey,
    UnknownTable(u16),
    KeyWidthMismatch { table_id: u16, expected: usize, got: usize },
    TargetOutOfBlock,
    BackwardBranch,
    UnknownBlock(u32),
    ParamsTooLong(usize),
    InvalidSchema(u16),
    TableInUse(u16),
    DuplicateTable(u16),
    DuplicateBlock(u32),
    MissingStart(u32),
    BadEntry { table_id: u16, error: TableError },
}

impl fmt::Display for DiagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DiagKind::EmptyBlock => write!(f, "block has no instructions"),
            DiagKind::BlockTooLarge(n) => write!(f, "block has {n} instructions (max {MAX_BLOCK_LEN})"),
            DiagKind::MissingTerminal => write!(f, "block does not end with goto/out/drop/packetin"),
            DiagKind::ZeroLength(r) => write!(f, "field {r} has zero length"),
            DiagKind::FieldTooLong(r) => write!(f, "field {r} exceeds {MAX_FIELD_BITS} bits"),
            DiagKind::FieldOutOfRange(r) => write!(f, "field {r} lies outside its space"),
            DiagKind::ArithWidth(r) => write!(f, "field {r} is wider than 64 bits"),
            DiagKind::ArithSpan(r) => write!(f, "field {r} spans more than 8 bytes"),
            DiagKind::ReadOnlyDestination(r) => write!(f, "destination {r} is read-only"),
            DiagKind::ReservedBit(r) => write!(f, "destination {r} overlaps the reserved search flag"),
            DiagKind::BadImmediate { value, width } => write!(f, "immediate {value:#x} invalid for width {width}"),
            DiagKind::ValueTooWide { value, length } => write!(f, "value {value:#x} does not fit {length} bits"),
            DiagKind::Unaligned { offset, length } => {
                write!(f, "structural edit at {offset}/{length} must be byte aligned and at most 64 bits")
            }
            DiagKind::WrongSpace(r) => write!(f, "field {r} is in the wrong space"),
            DiagKind::PoolOutOfRange { offset, length } => write!(f, "pool range {offset}/{length} invalid"),
            DiagKind::ChecksumWidth(r) => write!(f, "checksum destination {r} must be 16 bits"),
            DiagKind::ChecksumRegion(r) => write!(f, "checksum region {r} must be byte aligned in the destination's space"),
            DiagKind::ChecksumAlign(r) => write!(f, "checksum destination {r} must sit on a 16-bit word of the region"),
            DiagKind::EmptyKey => write!(f, "search key has no fields"),
            DiagKind::UnknownTable(t) => write!(f, "unknown table {t}"),
            DiagKind::KeyWidthMismatch { table_id, expected, got } => {
                write!(f, "key width {got} does not match table {table_id} width {expected}")
            }
            DiagKind::TargetOutOfBlock => write!(f, "branch target outside block"),
            DiagKind::BackwardBranch => write!(f, "branch target must lie after the branch"),
            DiagKind::UnknownBlock(b) => write!(f, "unknown block {b}"),
            DiagKind::ParamsTooLong(n) => write!(f, "parameters of {n} bits exceed {MAX_PARAM_BYTES} bytes"),
            DiagKind::InvalidSchema(t) => write!(f, "table {t} has an invalid key width"),
            DiagKind::TableInUse(t) => write!(f, "table {t} is deleted while still referenced"),
            DiagKind::DuplicateTable(t) => write!(f, "duplicate table {t}"),
            DiagKind::DuplicateBlock(b) => write!(f, "duplicate block {b}"),
            DiagKind::MissingStart(b) => write!(f, "start block {b} is not defined"),
            DiagKind::BadEntry { table_id, error } => write!(f, "entry for table {table_id}: {error}"),
        }
    }
}

/// One finding, located by block and instruction index where applicable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub block: Option<u32>,
    pub index: Option<usize>,
    /// Position in the program's initial entry list.
    pub entry: Option<usize>,
    pub kind: DiagKind,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.block, self.index) {
            (Some(b), Some(i)) => write!(f, "block {b} instr {i}: {}", self.kind),
            (Some(b), None) => write!(f, "block {b}: {}", self.kind),
            _ if self.entry.is_some() => write!(f, "entry {}: {}", self.entry.unwrap_or_default(), self.kind),
            _ => write!(f, "{}", self.kind),
        }
    }
}

/// What a block is checked against.
#[derive(Debug, Clone, Default)]
pub struct ValidationContext {
    pub sizes: SpaceSizes,
    pub schemas: BTreeMap<u16, TableSchema>,
    /// Blocks that may be named by ENTRY_MOD; `None` skips the check.
    pub blocks: Option<BTreeSet<u32>>,
}

impl ValidationContext {
    pub fn new(sizes: SpaceSizes) -> Self {
        ValidationContext {
            sizes,
            ..Default::default()
        }
    }

    pub fn with_schemas<'a>(mut self, schemas: impl IntoIterator<Item = &'a TableSchema>) -> Self {
        for s in schemas {
            self.schemas.insert(s.table_id, s.clone());
        }
        self
    }
}

struct BlockCheck<'a> {
    ctx: &'a ValidationContext,
    block_id: u32,
    index: usize,
    out: Vec<Diagnostic>,
}

impl BlockCheck<'_> {
    fn emit(&mut self, kind: DiagKind) {
        self.out.push(Diagnostic {
            block: Some(self.block_id),
            index: Some(self.index),
            entry: None,
            kind,
        });
    }

    fn field(&mut self, r: &FieldRef) -> bool {
        if r.length == 0 {
            self.emit(DiagKind::ZeroLength(*r));
            return false;
        }
        if r.length > MAX_FIELD_BITS {
            self.emit(DiagKind::FieldTooLong(*r));
            return false;
        }
        if r.space == Space::Pool {
            self.emit(DiagKind::WrongSpace(*r));
            return false;
        }
        if r.end() > self.ctx.sizes.bytes(r.space) * 8 {
            self.emit(DiagKind::FieldOutOfRange(*r));
            return false;
        }
        true
    }

    fn word_field(&mut self, r: &FieldRef) -> bool {
        if !self.field(r) {
            return false;
        }
        if r.length > 64 {
            self.emit(DiagKind::ArithWidth(*r));
            return false;
        }
        true
    }

    fn arith_field(&mut self, r: &FieldRef) {
        if self.word_field(r) && r.byte_span() > 8 {
            self.emit(DiagKind::ArithSpan(*r));
        }
    }

    fn dest(&mut self, r: &FieldRef) {
        if r.space == Space::Parameter {
            self.emit(DiagKind::ReadOnlyDestination(*r));
        }
        if r.overlaps(&META_HIT_FLAG) {
            self.emit(DiagKind::ReservedBit(*r));
        }
    }

    fn operand(&mut self, op: &Operand, arith: bool) {
        match op {
            Operand::Imm { value, width } => {
                if *width == 0 || *width > 64 || value & !low_mask(*width as usize) != 0 {
                    self.emit(DiagKind::BadImmediate {
                        value: *value,
                        width: *width,
                    });
                }
            }
            Operand::Field(r) if arith => self.arith_field(r),
            Operand::Field(r) => {
                self.word_field(r);
            }
        }
    }

    /// Immediate sources must fit their destination.
    fn fits(&mut self, op: &Operand, length: usize) {
        if let Operand::Imm { value, .. } = op {
            if value & !low_mask(length) != 0 {
                self.emit(DiagKind::ValueTooWide { value: *value, length });
            }
        }
    }

    fn pool(&mut self, offset: u32, length: u16) {
        let end = offset as u64 + length as u64;
        if length == 0 || length > 64 || end > self.ctx.sizes.pool as u64 * 8 {
            self.emit(DiagKind::PoolOutOfRange { offset, length });
        }
    }

    fn key(&mut self, table_id: u16, key: &[FieldRef]) {
        if key.is_empty() {
            self.emit(DiagKind::EmptyKey);
        }
        let mut ok = true;
        for f in key {
            ok &= self.field(f);
        }
        let got: usize = key.iter().map(|f| f.length as usize).sum();
        self.key_width(table_id, got, ok);
    }

    fn key_width(&mut self, table_id: u16, got: usize, check: bool) {
        match self.ctx.schemas.get(&table_id) {
            None => self.emit(DiagKind::UnknownTable(table_id)),
            Some(s) if check && s.key_width as usize != got => self.emit(DiagKind::KeyWidthMismatch {
                table_id,
                expected: s.key_width as usize,
                got,
            }),
            _ => {}
        }
    }

    fn target(&mut self, target: crate::isa::Target, len: usize) {
        match target.resolve(self.index) {
            Some(t) if t >= len => self.emit(DiagKind::TargetOutOfBlock),
            Some(t) if t <= self.index => self.emit(DiagKind::BackwardBranch),
            None => self.emit(DiagKind::TargetOutOfBlock),
            _ => {}
        }
    }

    fn instruction(&mut self, ins: &Instruction, len: usize) {
        match ins {
            Instruction::SetField { dst, src } => {
                self.word_field(dst);
                self.dest(dst);
                self.operand(src, false);
                self.fits(src, dst.length as usize);
            }
            Instruction::AddField { offset, length, src } => {
                if offset % 8 != 0 || length % 8 != 0 || *length == 0 || *length > 64 {
                    self.emit(DiagKind::Unaligned {
                        offset: *offset,
                        length: *length,
                    });
                }
                self.operand(src, false);
                self.fits(src, *length as usize);
            }
            Instruction::DelField { offset, length } => {
                if offset % 8 != 0 || length % 8 != 0 || *length == 0 {
                    self.emit(DiagKind::Unaligned {
                        offset: *offset,
                        length: *length,
                    });
                }
            }
            Instruction::Calc { dst, a, b, .. } => {
                self.arith_field(dst);
                self.dest(dst);
                self.operand(a, true);
                self.operand(b, true);
            }
            Instruction::ReadPool {
                dst,
                pool_offset,
                length,
            } => {
                self.word_field(dst);
                self.dest(dst);
                if dst.space != Space::Metadata {
                    self.emit(DiagKind::WrongSpace(*dst));
                }
                if dst.length != *length {
                    self.emit(DiagKind::WrongSpace(*dst));
                }
                self.pool(*pool_offset, *length);
            }
            Instruction::WritePool {
                pool_offset,
                length,
                src,
            } => {
                self.pool(*pool_offset, *length);
                self.operand(src, false);
                self.fits(src, *length as usize);
            }
            Instruction::IncPool {
                pool_offset,
                length,
                delta,
            } => {
                self.pool(*pool_offset, *length);
                self.operand(delta, false);
            }
            Instruction::Checksum { dst, region } => {
                self.field(dst);
                self.dest(dst);
                if dst.length != 16 {
                    self.emit(DiagKind::ChecksumWidth(*dst));
                }
                if self.field(region) {
                    self.dest(region);
                }
                if region.space != dst.space || region.offset % 8 != 0 || region.length % 8 != 0 {
                    self.emit(DiagKind::ChecksumRegion(*region));
                } else if dst.overlaps(region) {
                    let inside = dst.offset >= region.offset && dst.end() <= region.end();
                    if !inside || (dst.offset - region.offset) % 16 != 0 {
                        self.emit(DiagKind::ChecksumAlign(*dst));
                    }
                }
            }
            Instruction::GotoTable { table_id, key } => self.key(*table_id, key),
            Instruction::SearchTable { table_id, key, dst } => {
                self.key(*table_id, key);
                if self.field(dst) {
                    self.dest(dst);
                }
                if dst.space != Space::Metadata {
                    self.emit(DiagKind::WrongSpace(*dst));
                }
            }
            Instruction::Output { port } => self.operand(port, true),
            Instruction::Drop | Instruction::PacketIn { .. } => {}
            Instruction::Branch { a, b, target, .. } => {
                self.operand(a, true);
                self.operand(b, true);
                self.target(*target, len);
            }
            Instruction::Jump { target } => self.target(*target, len),
            Instruction::EntryMod(m) => {
                let mut ok = true;
                for op in m.key.iter().chain(&m.params) {
                    self.operand(op, false);
                    if let Operand::Field(f) = op {
                        ok &= f.length <= 64;
                    }
                }
                let got: usize = m.key.iter().map(Operand::width).sum();
                self.key_width(m.table_id, got, ok);
                if let Some(s) = self.ctx.schemas.get(&m.table_id) {
                    if m.mask.width() != s.key_width as usize {
                        self.emit(DiagKind::KeyWidthMismatch {
                            table_id: m.table_id,
                            expected: s.key_width as usize,
                            got: m.mask.width(),
                        });
                    }
                }
                let pbits: usize = m.params.iter().map(Operand::width).sum();
                if pbits > MAX_PARAM_BYTES * 8 {
                    self.emit(DiagKind::ParamsTooLong(pbits));
                }
                if m.op != EntryOp::Delete {
                    if let Some(blocks) = &self.ctx.blocks {
                        if !blocks.contains(&m.block_id) {
                            self.emit(DiagKind::UnknownBlock(m.block_id));
                        }
                    }
                }
            }
            Instruction::TableMod(TableMod::Create(s)) => {
                if s.key_width == 0 || s.key_width > MAX_KEY_BITS {
                    self.emit(DiagKind::InvalidSchema(s.table_id));
                }
            }
            Instruction::TableMod(TableMod::Delete(_)) => {}
        }
    }
}

/// Checks one block; an empty result means it satisfies every invariant.
pub fn validate_block(block: &InstructionBlock, ctx: &ValidationContext) -> Vec<Diagnostic> {
    let mut chk = BlockCheck {
        ctx,
        block_id: block.block_id,
        index: 0,
        out: Vec::new(),
    };
    let len = block.instructions.len();
    if len == 0 {
        chk.out.push(Diagnostic {
            block: Some(block.block_id),
            index: None,
            entry: None,
            kind: DiagKind::EmptyBlock,
        });
        return chk.out;
    }
    if len > MAX_BLOCK_LEN {
        chk.out.push(Diagnostic {
            block: Some(block.block_id),
            index: None,
            entry: None,
            kind: DiagKind::BlockTooLarge(len),
        });
    }
    for (i, ins) in block.instructions.iter().enumerate() {
        chk.index = i;
        chk.instruction(ins, len);
    }
    if !block.instructions[len - 1].is_terminal() {
        chk.index = len - 1;
        chk.emit(DiagKind::MissingTerminal);
    }
    chk.out
}

/// Tables that a program's blocks look up or mutate entries in.
fn referenced_tables(program: &Program) -> BTreeSet<u16> {
    let mut used = BTreeSet::new();
    for ins in program.blocks.iter().flat_map(|b| &b.instructions) {
        match ins {
            Instruction::GotoTable { table_id, .. } | Instruction::SearchTable { table_id, .. } => {
                used.insert(*table_id);
            }
            Instruction::EntryMod(m) => {
                used.insert(m.table_id);
            }
            _ => {}
        }
    }
    used
}

/// Checks every block plus the program's cross references.
pub fn validate_program(program: &Program, sizes: &SpaceSizes) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let program_diag = |kind| Diagnostic {
        block: None,
        index: None,
        entry: None,
        kind,
    };

    let mut ctx = ValidationContext::new(*sizes);
    for s in &program.schemas {
        if ctx.schemas.insert(s.table_id, s.clone()).is_some() {
            out.push(program_diag(DiagKind::DuplicateTable(s.table_id)));
        }
        if s.key_width == 0 || s.key_width > MAX_KEY_BITS {
            out.push(program_diag(DiagKind::InvalidSchema(s.table_id)));
        }
    }
    // tables created from the datapath are valid lookup targets
    for ins in program.blocks.iter().flat_map(|b| &b.instructions) {
        if let Instruction::TableMod(TableMod::Create(s)) = ins {
            ctx.schemas.entry(s.table_id).or_insert_with(|| s.clone());
        }
    }

    let mut blocks = BTreeSet::new();
    for b in &program.blocks {
        if !blocks.insert(b.block_id) {
            out.push(program_diag(DiagKind::DuplicateBlock(b.block_id)));
        }
    }
    ctx.blocks = Some(blocks.clone());

    for b in &program.blocks {
        out.extend(validate_block(b, &ctx));
    }

    let used = referenced_tables(program);
    for (bi, ins) in program.blocks.iter().flat_map(|b| b.instructions.iter().enumerate().map(move |(i, x)| ((b.block_id, i), x))) {
        if let Instruction::TableMod(TableMod::Delete(t)) = ins {
            if used.contains(t) {
                out.push(Diagnostic {
                    block: Some(bi.0),
                    index: Some(bi.1),
                    entry: None,
                    kind: DiagKind::TableInUse(*t),
                });
            }
        }
    }

    for s in &program.schemas {
        if let crate::table::MissPolicy::GotoBlock(b) = s.miss {
            if !blocks.contains(&b) {
                out.push(program_diag(DiagKind::UnknownBlock(b)));
            }
        }
    }
    if !blocks.contains(&program.start_block) {
        out.push(program_diag(DiagKind::MissingStart(program.start_block)));
    }

    let mut scratch = TableStore::new();
    for s in &program.schemas {
        let _ = scratch.create(s.clone());
    }
    for (n, (table_id, e)) in program.entries.iter().enumerate() {
        let kind = match scratch.insert(*table_id, e.clone(), |b| blocks.contains(&b)) {
            Ok(()) => continue,
            Err(TableError::UnknownBlock(b)) => DiagKind::UnknownBlock(b),
            Err(TableError::UnknownTable(t)) => DiagKind::UnknownTable(t),
            Err(error) => DiagKind::BadEntry {
                table_id: *table_id,
                error,
            },
        };
        out.push(Diagnostic {
            block: None,
            index: None,
            entry: Some(n),
            kind,
        });
    }
    out
}

/// Bytes a packet must hold for a validated program never to fault on
/// packet bounds: the furthest packet access plus every byte the program
/// could delete.
pub fn packet_window(program: &Program) -> usize {
    let mut furthest = 0usize;
    let mut deleted = 0usize;
    let mut fields: Vec<FieldRef> = Vec::new();
    let mut see = |f: &FieldRef| fields.push(*f);
    for ins in program.blocks.iter().flat_map(|b| &b.instructions) {
        let mut ops: Vec<&Operand> = Vec::new();
        match ins {
            Instruction::SetField { dst, src } => {
                see(dst);
                ops.push(src);
            }
            Instruction::AddField { offset, src, .. } => {
                furthest = furthest.max(*offset as usize / 8);
                ops.push(src);
            }
            Instruction::DelField { offset, length } => {
                furthest = furthest.max((*offset as usize + *length as usize) / 8);
                deleted += *length as usize / 8;
            }
            Instruction::Calc { dst, a, b, .. } => {
                see(dst);
                ops.extend([a, b]);
            }
            Instruction::ReadPool { dst, .. } => see(dst),
            Instruction::WritePool { src, .. } => ops.push(src),
            Instruction::IncPool { delta, .. } => ops.push(delta),
            Instruction::Checksum { dst, region } => {
                see(dst);
                see(region);
            }
            Instruction::GotoTable { key, .. } => key.iter().for_each(&mut see),
            Instruction::SearchTable { key, dst, .. } => {
                key.iter().for_each(&mut see);
                see(dst);
            }
            Instruction::Output { port } => ops.push(port),
            Instruction::Branch { a, b, .. } => ops.extend([a, b]),
            Instruction::EntryMod(m) => ops.extend(m.key.iter().chain(&m.params)),
            Instruction::Drop | Instruction::PacketIn { .. } | Instruction::Jump { .. } | Instruction::TableMod(_) => {}
        }
        for op in ops {
            if let Operand::Field(f) = op {
                see(f);
            }
        }
    }
    for f in fields.iter().filter(|f| f.space == Space::Packet) {
        furthest = furthest.max(f.end().div_ceil(8));
    }
    furthest + deleted
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Cmp, Target};
    use crate::bits::BitString;
    use crate::table::{FlowEntry, MatchType};

    fn ctx() -> ValidationContext {
        ValidationContext::new(SpaceSizes::default())
            .with_schemas(&[TableSchema::new(2, MatchType::Lpm, 48)])
    }

    fn kinds(d: &[Diagnostic]) -> Vec<DiagKind> {
        d.iter().map(|d| d.kind.clone()).collect()
    }

    #[test]
    fn missing_terminal() {
        let b = InstructionBlock::new(
            1,
            vec![Instruction::SetField {
                dst: FieldRef::pkt(0, 8),
                src: Operand::imm(1),
            }],
        );
        assert_eq!(kinds(&validate_block(&b, &ctx())), vec![DiagKind::MissingTerminal]);
    }

    #[test]
    fn key_width_mismatch() {
        let b = InstructionBlock::new(
            1,
            vec![Instruction::GotoTable {
                table_id: 2,
                key: vec![FieldRef::pkt(240, 32)],
            }],
        );
        assert_eq!(
            kinds(&validate_block(&b, &ctx())),
            vec![DiagKind::KeyWidthMismatch {
                table_id: 2,
                expected: 48,
                got: 32
            }]
        );
    }

    #[test]
    fn branch_out_of_block() {
        let br = Instruction::Branch {
            a: Operand::imm(1),
            cmp: Cmp::Eq,
            b: Operand::imm(1),
            target: Target::Rel(10),
        };
        let b = InstructionBlock::new(1, vec![br, Instruction::Drop, Instruction::Drop, Instruction::Drop]);
        assert_eq!(kinds(&validate_block(&b, &ctx())), vec![DiagKind::TargetOutOfBlock]);
    }

    #[test]
    fn backward_branch_rejected() {
        let b = InstructionBlock::new(
            1,
            vec![
                Instruction::Drop,
                Instruction::Jump { target: Target::Abs(0) },
                Instruction::Drop,
            ],
        );
        assert_eq!(kinds(&validate_block(&b, &ctx())), vec![DiagKind::BackwardBranch]);
    }

    #[test]
    fn destination_rules() {
        let b = InstructionBlock::new(
            1,
            vec![
                Instruction::SetField {
                    dst: FieldRef::param(0, 8),
                    src: Operand::imm(1),
                },
                Instruction::SetField {
                    dst: FieldRef::meta(0, 8),
                    src: Operand::imm(1),
                },
                Instruction::SetField {
                    dst: FieldRef::pkt(0, 4),
                    src: Operand::imm(16),
                },
                Instruction::Drop,
            ],
        );
        assert_eq!(
            kinds(&validate_block(&b, &ctx())),
            vec![
                DiagKind::ReadOnlyDestination(FieldRef::param(0, 8)),
                DiagKind::ReservedBit(FieldRef::meta(0, 8)),
                DiagKind::ValueTooWide { value: 16, length: 4 },
            ]
        );
    }

    #[test]
    fn calc_span_limit() {
        let b = InstructionBlock::new(
            1,
            vec![
                Instruction::Calc {
                    op: crate::isa::AluOp::Add,
                    dst: FieldRef::pkt(4, 64),
                    a: Operand::imm(1),
                    b: Operand::imm(1),
                },
                Instruction::Drop,
            ],
        );
        assert_eq!(kinds(&validate_block(&b, &ctx())), vec![DiagKind::ArithSpan(FieldRef::pkt(4, 64))]);
    }

    #[test]
    fn program_references() {
        let p = Program {
            schemas: vec![TableSchema::new(3, MatchType::Exact, 8), TableSchema::new(3, MatchType::Exact, 8)],
            blocks: vec![InstructionBlock::new(1, vec![Instruction::Drop])],
            entries: vec![(3, FlowEntry::exact(BitString::from_u64(8, 1), 7, vec![]))],
            start_block: 1,
        };
        let d = kinds(&validate_program(&p, &SpaceSizes::default()));
        assert!(d.contains(&DiagKind::DuplicateTable(3)));
        assert!(d.contains(&DiagKind::UnknownBlock(7)));
    }

    #[test]
    fn validation_is_pure() {
        let p = Program {
            schemas: vec![],
            blocks: vec![InstructionBlock::new(1, vec![Instruction::Jump { target: Target::Rel(0) }])],
            entries: vec![],
            start_block: 2,
        };
        let a = validate_program(&p, &SpaceSizes::default());
        assert!(!a.is_empty());
        assert_eq!(a, validate_program(&p, &SpaceSizes::default()));
    }

    #[test]
    fn checksum_alignment() {
        let ok = Instruction::Checksum {
            dst: FieldRef::pkt(192, 16),
            region: FieldRef::pkt(112, 160),
        };
        let bad = Instruction::Checksum {
            dst: FieldRef::pkt(200, 16),
            region: FieldRef::pkt(112, 160),
        };
        let b = InstructionBlock::new(1, vec![ok, bad, Instruction::Drop]);
        assert_eq!(kinds(&validate_block(&b, &ctx())), vec![DiagKind::ChecksumAlign(FieldRef::pkt(200, 16))]);
    }
}
