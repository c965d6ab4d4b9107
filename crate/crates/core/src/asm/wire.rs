//! Binary program image.
//!
//! ```text
//! image   := "POFB" version:u16 section*
//! section := type:u8 length:u32 record*
//! record  := tag:u8 length:u32 body
//! ```
//!
//! Integers are big-endian. Section types are SCHEMAS=1, BLOCKS=2,
//! ENTRIES=3, START=4; empty sections are left out and START is always
//! written last. An instruction is itself a record nested inside its block.

use thiserror::Error;

use crate::bits::BitString;
use crate::isa::{
    AluOp, Cmp, EntryMod, EntryOp, Instruction, InstructionBlock, Operand, Program, TableMod, Target,
};
use crate::space::{FieldRef, Space};
use crate::table::{FlowEntry, MatchType, MissPolicy, TableSchema};

pub const MAGIC: &[u8; 4] = b"POFB";
pub const VERSION: u16 = 1;

pub const SEC_SCHEMAS: u8 = 1;
pub const SEC_BLOCKS: u8 = 2;
pub const SEC_ENTRIES: u8 = 3;
pub const SEC_START: u8 = 4;

const TAG_SCHEMA: u8 = 0x01;
const TAG_BLOCK: u8 = 0x02;
const TAG_ENTRY: u8 = 0x03;

const OP_SET: u8 = 0x10;
const OP_ADD: u8 = 0x11;
const OP_DEL: u8 = 0x12;
const OP_CALC: u8 = 0x13;
const OP_POOLRD: u8 = 0x14;
const OP_POOLWR: u8 = 0x15;
const OP_POOLINC: u8 = 0x16;
const OP_CHECKSUM: u8 = 0x17;
const OP_GOTO: u8 = 0x18;
const OP_SEARCH: u8 = 0x19;
const OP_OUTPUT: u8 = 0x1a;
const OP_DROP: u8 = 0x1b;
const OP_PACKETIN: u8 = 0x1c;
const OP_BRANCH: u8 = 0x1d;
const OP_JUMP: u8 = 0x1e;
const OP_ENTRYMOD: u8 = 0x1f;
const OP_TABLE_CREATE: u8 = 0x20;
const OP_TABLE_DELETE: u8 = 0x21;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported image version {0}")]
    Version(u16),
    #[error("truncated {section} at byte {offset}")]
    Truncated { section: &'static str, offset: usize },
    #[error("unknown section type {kind} at byte {offset}")]
    UnknownSection { kind: u8, offset: usize },
    #[error("unknown record tag {tag:#04x} in {section} at byte {offset}")]
    UnknownTlv {
        section: &'static str,
        tag: u8,
        offset: usize,
    },
    #[error("malformed {section} at byte {offset}: {what}")]
    Malformed {
        section: &'static str,
        offset: usize,
        what: &'static str,
    },
}

fn section_name(kind: u8) -> &'static str {
    match kind {
        SEC_SCHEMAS => "schemas",
        SEC_BLOCKS => "blocks",
        SEC_ENTRIES => "entries",
        SEC_START => "start",
        _ => "header",
    }
}

// ---- encoding ----

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn bytes16(&mut self, b: &[u8]) {
        self.u16(b.len() as u16);
        self.0.extend_from_slice(b);
    }
    fn record(&mut self, tag: u8, body: impl FnOnce(&mut Writer)) {
        let mut w = Writer::default();
        body(&mut w);
        self.u8(tag);
        self.u32(w.0.len() as u32);
        self.0.extend_from_slice(&w.0);
    }
    fn field(&mut self, f: &FieldRef) {
        self.u8(f.space.code());
        self.u16(f.offset);
        self.u16(f.length);
    }
    fn operand(&mut self, o: &Operand) {
        match o {
            Operand::Imm { value, width } => {
                self.u8(0);
                self.u8(*width);
                self.u64(*value);
            }
            Operand::Field(f) => {
                self.u8(1);
                self.field(f);
            }
        }
    }
    fn operands(&mut self, ops: &[Operand]) {
        self.u16(ops.len() as u16);
        ops.iter().for_each(|o| self.operand(o));
    }
    fn fields(&mut self, fs: &[FieldRef]) {
        self.u16(fs.len() as u16);
        fs.iter().for_each(|f| self.field(f));
    }
    fn target(&mut self, t: &Target) {
        match t {
            Target::Abs(i) => {
                self.u8(0);
                self.u16(*i);
            }
            Target::Rel(d) => {
                self.u8(1);
                self.u16(*d as u16);
            }
        }
    }
    fn bits(&mut self, b: &BitString) {
        self.u16(b.width() as u16);
        self.0.extend_from_slice(b.as_bytes());
    }
    fn schema(&mut self, s: &TableSchema) {
        self.u16(s.table_id);
        self.u8(match s.match_type {
            MatchType::Exact => 0,
            MatchType::Lpm => 1,
            MatchType::Masked => 2,
        });
        self.u16(s.key_width);
        self.u32(s.max_entries);
        match s.miss {
            MissPolicy::Drop => self.u8(0),
            MissPolicy::PacketIn => self.u8(1),
            MissPolicy::GotoBlock(b) => {
                self.u8(2);
                self.u32(b);
            }
        }
    }
    fn instruction(&mut self, ins: &Instruction) {
        match ins {
            Instruction::SetField { dst, src } => self.record(OP_SET, |w| {
                w.field(dst);
                w.operand(src);
            }),
            Instruction::AddField { offset, length, src } => self.record(OP_ADD, |w| {
                w.u16(*offset);
                w.u16(*length);
                w.operand(src);
            }),
            Instruction::DelField { offset, length } => self.record(OP_DEL, |w| {
                w.u16(*offset);
                w.u16(*length);
            }),
            Instruction::Calc { op, dst, a, b } => self.record(OP_CALC, |w| {
                w.u8(AluOp::ALL.iter().position(|x| x == op).unwrap() as u8);
                w.field(dst);
                w.operand(a);
                w.operand(b);
            }),
            Instruction::ReadPool {
                dst,
                pool_offset,
                length,
            } => self.record(OP_POOLRD, |w| {
                w.field(dst);
                w.u32(*pool_offset);
                w.u16(*length);
            }),
            Instruction::WritePool {
                pool_offset,
                length,
                src,
            } => self.record(OP_POOLWR, |w| {
                w.u32(*pool_offset);
                w.u16(*length);
                w.operand(src);
            }),
            Instruction::IncPool {
                pool_offset,
                length,
                delta,
            } => self.record(OP_POOLINC, |w| {
                w.u32(*pool_offset);
                w.u16(*length);
                w.operand(delta);
            }),
            Instruction::Checksum { dst, region } => self.record(OP_CHECKSUM, |w| {
                w.field(dst);
                w.field(region);
            }),
            Instruction::GotoTable { table_id, key } => self.record(OP_GOTO, |w| {
                w.u16(*table_id);
                w.fields(key);
            }),
            Instruction::SearchTable { table_id, key, dst } => self.record(OP_SEARCH, |w| {
                w.u16(*table_id);
                w.fields(key);
                w.field(dst);
            }),
            Instruction::Output { port } => self.record(OP_OUTPUT, |w| w.operand(port)),
            Instruction::Drop => self.record(OP_DROP, |_| {}),
            Instruction::PacketIn { reason } => self.record(OP_PACKETIN, |w| w.u16(*reason)),
            Instruction::Branch { a, cmp, b, target } => self.record(OP_BRANCH, |w| {
                w.u8(Cmp::ALL.iter().position(|x| x == cmp).unwrap() as u8);
                w.operand(a);
                w.operand(b);
                w.target(target);
            }),
            Instruction::Jump { target } => self.record(OP_JUMP, |w| w.target(target)),
            Instruction::EntryMod(m) => self.record(OP_ENTRYMOD, |w| {
                w.u8(match m.op {
                    EntryOp::Insert => 0,
                    EntryOp::Delete => 1,
                    EntryOp::Modify => 2,
                });
                w.u16(m.table_id);
                w.operands(&m.key);
                w.bits(&m.mask);
                w.u16(m.priority);
                w.u32(m.block_id);
                w.operands(&m.params);
            }),
            Instruction::TableMod(TableMod::Create(s)) => self.record(OP_TABLE_CREATE, |w| w.schema(s)),
            Instruction::TableMod(TableMod::Delete(t)) => self.record(OP_TABLE_DELETE, |w| w.u16(*t)),
        }
    }
}

/// Serializes a program. The output is a pure function of the program.
pub fn encode(p: &Program) -> Vec<u8> {
    let mut out = Writer::default();
    out.0.extend_from_slice(MAGIC);
    out.u16(VERSION);
    if !p.schemas.is_empty() {
        out.record(SEC_SCHEMAS, |w| {
            for s in &p.schemas {
                w.record(TAG_SCHEMA, |w| w.schema(s));
            }
        });
    }
    if !p.blocks.is_empty() {
        out.record(SEC_BLOCKS, |w| {
            for b in &p.blocks {
                w.record(TAG_BLOCK, |w| {
                    w.u32(b.block_id);
                    w.u16(b.instructions.len() as u16);
                    b.instructions.iter().for_each(|i| w.instruction(i));
                });
            }
        });
    }
    if !p.entries.is_empty() {
        out.record(SEC_ENTRIES, |w| {
            for (t, e) in &p.entries {
                w.record(TAG_ENTRY, |w| {
                    w.u16(*t);
                    w.bits(&e.value);
                    w.0.extend_from_slice(e.mask.as_bytes());
                    w.u16(e.priority);
                    w.u32(e.block_id);
                    w.bytes16(&e.params);
                });
            }
        });
    }
    out.record(SEC_START, |w| w.u32(p.start_block));
    out.0
}

// ---- decoding ----

struct Reader<'a> {
    buf: &'a [u8],
    /// Absolute offset of `buf[0]` within the image.
    base: usize,
    pos: usize,
    section: &'static str,
}

type WResult<T> = Result<T, WireError>;

impl<'a> Reader<'a> {
    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn take(&mut self, n: usize) -> WResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated {
                section: self.section,
                offset: self.offset(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> WResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> WResult<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> WResult<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> WResult<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn malformed<T>(&self, what: &'static str) -> WResult<T> {
        Err(WireError::Malformed {
            section: self.section,
            offset: self.offset(),
            what,
        })
    }

    /// Splits off the next `tag length body` record.
    fn record(&mut self) -> WResult<(u8, usize, Reader<'a>)> {
        let at = self.offset();
        let tag = self.u8()?;
        let len = self.u32()? as usize;
        let base = self.offset();
        let body = self.take(len)?;
        Ok((
            tag,
            at,
            Reader {
                buf: body,
                base,
                pos: 0,
                section: self.section,
            },
        ))
    }

    fn finish(&self) -> WResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            self.malformed("trailing bytes in record")
        }
    }

    fn space(&mut self) -> WResult<Space> {
        let c = self.u8()?;
        match Space::from_code(c) {
            Some(s) => Ok(s),
            None => self.malformed("unknown space code"),
        }
    }

    fn field(&mut self) -> WResult<FieldRef> {
        let space = self.space()?;
        Ok(FieldRef::new(space, self.u16()?, self.u16()?))
    }

    fn operand(&mut self) -> WResult<Operand> {
        match self.u8()? {
            0 => {
                let width = self.u8()?;
                Ok(Operand::Imm {
                    width,
                    value: self.u64()?,
                })
            }
            1 => Ok(Operand::Field(self.field()?)),
            _ => self.malformed("unknown operand kind"),
        }
    }

    fn operands(&mut self) -> WResult<Vec<Operand>> {
        let n = self.u16()?;
        (0..n).map(|_| self.operand()).collect()
    }

    fn fields(&mut self) -> WResult<Vec<FieldRef>> {
        let n = self.u16()?;
        (0..n).map(|_| self.field()).collect()
    }

    fn target(&mut self) -> WResult<Target> {
        match self.u8()? {
            0 => Ok(Target::Abs(self.u16()?)),
            1 => Ok(Target::Rel(self.u16()? as i16)),
            _ => self.malformed("unknown branch target kind"),
        }
    }

    fn bits_of(&mut self, width: usize) -> WResult<BitString> {
        let bytes = self.take(width.div_ceil(8))?.to_vec();
        match BitString::from_bytes(width, bytes) {
            Some(b) => Ok(b),
            None => self.malformed("bits set beyond declared width"),
        }
    }

    fn bits(&mut self) -> WResult<BitString> {
        let width = self.u16()? as usize;
        self.bits_of(width)
    }

    fn indexed<T: Copy>(&mut self, all: &[T], what: &'static str) -> WResult<T> {
        let i = self.u8()? as usize;
        match all.get(i) {
            Some(v) => Ok(*v),
            None => self.malformed(what),
        }
    }

    fn schema(&mut self) -> WResult<TableSchema> {
        let table_id = self.u16()?;
        let match_type = self.indexed(
            &[MatchType::Exact, MatchType::Lpm, MatchType::Masked],
            "unknown match type",
        )?;
        let key_width = self.u16()?;
        let max_entries = self.u32()?;
        let miss = match self.u8()? {
            0 => MissPolicy::Drop,
            1 => MissPolicy::PacketIn,
            2 => MissPolicy::GotoBlock(self.u32()?),
            _ => return self.malformed("unknown miss policy"),
        };
        Ok(TableSchema::new(table_id, match_type, key_width)
            .with_max_entries(max_entries)
            .with_miss(miss))
    }

    fn instruction(&mut self) -> WResult<Instruction> {
        let (tag, at, mut r) = self.record()?;
        let ins = match tag {
            OP_SET => Instruction::SetField {
                dst: r.field()?,
                src: r.operand()?,
            },
            OP_ADD => Instruction::AddField {
                offset: r.u16()?,
                length: r.u16()?,
                src: r.operand()?,
            },
            OP_DEL => Instruction::DelField {
                offset: r.u16()?,
                length: r.u16()?,
            },
            OP_CALC => Instruction::Calc {
                op: r.indexed(&AluOp::ALL, "unknown ALU operation")?,
                dst: r.field()?,
                a: r.operand()?,
                b: r.operand()?,
            },
            OP_POOLRD => Instruction::ReadPool {
                dst: r.field()?,
                pool_offset: r.u32()?,
                length: r.u16()?,
            },
            OP_POOLWR => Instruction::WritePool {
                pool_offset: r.u32()?,
                length: r.u16()?,
                src: r.operand()?,
            },
            OP_POOLINC => Instruction::IncPool {
                pool_offset: r.u32()?,
                length: r.u16()?,
                delta: r.operand()?,
            },
            OP_CHECKSUM => Instruction::Checksum {
                dst: r.field()?,
                region: r.field()?,
            },
            OP_GOTO => Instruction::GotoTable {
                table_id: r.u16()?,
                key: r.fields()?,
            },
            OP_SEARCH => Instruction::SearchTable {
                table_id: r.u16()?,
                key: r.fields()?,
                dst: r.field()?,
            },
            OP_OUTPUT => Instruction::Output { port: r.operand()? },
            OP_DROP => Instruction::Drop,
            OP_PACKETIN => Instruction::PacketIn { reason: r.u16()? },
            OP_BRANCH => {
                let cmp = r.indexed(&Cmp::ALL, "unknown comparison")?;
                Instruction::Branch {
                    cmp,
                    a: r.operand()?,
                    b: r.operand()?,
                    target: r.target()?,
                }
            }
            OP_JUMP => Instruction::Jump { target: r.target()? },
            OP_ENTRYMOD => Instruction::EntryMod(EntryMod {
                op: r.indexed(&[EntryOp::Insert, EntryOp::Delete, EntryOp::Modify], "unknown entry operation")?,
                table_id: r.u16()?,
                key: r.operands()?,
                mask: r.bits()?,
                priority: r.u16()?,
                block_id: r.u32()?,
                params: r.operands()?,
            }),
            OP_TABLE_CREATE => Instruction::TableMod(TableMod::Create(r.schema()?)),
            OP_TABLE_DELETE => Instruction::TableMod(TableMod::Delete(r.u16()?)),
            _ => {
                return Err(WireError::UnknownTlv {
                    section: self.section,
                    tag,
                    offset: at,
                })
            }
        };
        r.finish()?;
        Ok(ins)
    }
}

fn expect_tag(r: &Reader, tag: u8, want: u8, at: usize) -> WResult<()> {
    if tag == want {
        Ok(())
    } else {
        Err(WireError::UnknownTlv {
            section: r.section,
            tag,
            offset: at,
        })
    }
}

/// Parses an image produced by [`encode`]. Structure is checked here;
/// semantic validity is left to validation.
pub fn decode(bytes: &[u8]) -> Result<Program, WireError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(WireError::BadMagic);
    }
    let mut top = Reader {
        buf: bytes,
        base: 0,
        pos: 4,
        section: "header",
    };
    let version = top.u16()?;
    if version != VERSION {
        return Err(WireError::Version(version));
    }
    let mut p = Program::default();
    let mut saw_start = false;
    while !top.at_end() {
        let (kind, at, mut sec) = top.record()?;
        sec.section = section_name(kind);
        match kind {
            SEC_SCHEMAS => {
                while !sec.at_end() {
                    let (tag, at, mut r) = sec.record()?;
                    expect_tag(&sec, tag, TAG_SCHEMA, at)?;
                    p.schemas.push(r.schema()?);
                    r.finish()?;
                }
            }
            SEC_BLOCKS => {
                while !sec.at_end() {
                    let (tag, at, mut r) = sec.record()?;
                    expect_tag(&sec, tag, TAG_BLOCK, at)?;
                    let block_id = r.u32()?;
                    let n = r.u16()?;
                    let instrs = (0..n).map(|_| r.instruction()).collect::<WResult<Vec<_>>>()?;
                    r.finish()?;
                    p.blocks.push(InstructionBlock::new(block_id, instrs));
                }
            }
            SEC_ENTRIES => {
                while !sec.at_end() {
                    let (tag, at, mut r) = sec.record()?;
                    expect_tag(&sec, tag, TAG_ENTRY, at)?;
                    let table = r.u16()?;
                    let value = r.bits()?;
                    let mask = r.bits_of(value.width())?;
                    let priority = r.u16()?;
                    let block_id = r.u32()?;
                    let n = r.u16()? as usize;
                    let params = r.take(n)?.to_vec();
                    r.finish()?;
                    p.entries.push((
                        table,
                        FlowEntry {
                            value,
                            mask,
                            priority,
                            block_id,
                            params,
                        },
                    ));
                }
            }
            SEC_START => {
                p.start_block = sec.u32()?;
                sec.finish()?;
                saw_start = true;
            }
            _ => return Err(WireError::UnknownSection { kind, offset: at }),
        }
    }
    if !saw_start {
        return Err(WireError::Truncated {
            section: "start",
            offset: bytes.len(),
        });
    }
    Ok(p)
}
