use thiserror::Error;

use super::{MicroOp, MicroProgram, Reg, ResultField, Src, DEFAULT_REGISTERS};
use crate::bits::low_mask;
use crate::isa::{AluOp, Instruction, InstructionBlock, Operand, Target};
use crate::space::FieldRef;

/// Registers at the top of the file held for table lookups.
pub const RESERVED_REGS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerConfig {
    pub registers: u8,
}

impl Default for LowerConfig {
    fn default() -> Self {
        LowerConfig {
            registers: DEFAULT_REGISTERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LowerError {
    #[error("block {block} instruction {index}: needs {needed} scratch registers, {available} available")]
    RegisterPressure {
        block: u32,
        index: usize,
        needed: usize,
        available: usize,
    },
    #[error("block {block} instruction {index}: {reason}")]
    Unsupported { block: u32, index: usize, reason: String },
}

/// Reserved register roles, counted from the top of the file.
struct Reserved {
    key_len: Reg,
    table: Reg,
    hit: Reg,
    block: Reg,
    plen: Reg,
    pbase: Reg,
}

struct Lowerer {
    block: u32,
    index: usize,
    general: u8,
    next: u8,
    res: Reserved,
    ops: Vec<MicroOp>,
}

impl Lowerer {
    fn alloc(&mut self) -> Result<Reg, LowerError> {
        if self.next >= self.general {
            return Err(LowerError::RegisterPressure {
                block: self.block,
                index: self.index,
                needed: self.next as usize + 1,
                available: self.general as usize,
            });
        }
        self.next += 1;
        Ok(self.next - 1)
    }

    fn unsupported(&self, reason: impl Into<String>) -> LowerError {
        LowerError::Unsupported {
            block: self.block,
            index: self.index,
            reason: reason.into(),
        }
    }

    fn emit(&mut self, op: MicroOp) {
        self.ops.push(op);
    }

    /// Loads a field of at most 64 bits into a fresh register.
    fn load(&mut self, f: &FieldRef) -> Result<Reg, LowerError> {
        let len = f.length as usize;
        if len == 0 || len > 64 {
            return Err(self.unsupported(format!("{f} is not a word-sized field")));
        }
        let r = self.alloc()?;
        let lead = f.offset as usize % 8;
        let byte = f.offset / 8;
        let span = f.byte_span();
        if span <= 8 {
            self.emit(MicroOp::Ld {
                dst: r,
                space: f.space,
                byte,
                width: span as u8,
            });
            let tail = span * 8 - lead - len;
            if lead != 0 || tail != 0 {
                self.emit(MicroOp::ShiftMask {
                    reg: r,
                    shift: tail as u8,
                    mask: low_mask(len),
                });
            }
            return Ok(r);
        }
        // Nine-byte span: combine a word and a trailing byte.
        let lo = self.alloc()?;
        let tail = 72 - lead - len;
        self.emit(MicroOp::Ld {
            dst: r,
            space: f.space,
            byte,
            width: 8,
        });
        self.emit(MicroOp::Ld {
            dst: lo,
            space: f.space,
            byte: byte + 8,
            width: 1,
        });
        self.emit(MicroOp::Alu {
            op: AluOp::Shl,
            dst: r,
            a: r,
            b: Src::Imm(8 - tail as u64),
        });
        if tail != 0 {
            self.emit(MicroOp::Alu {
                op: AluOp::Shr,
                dst: lo,
                a: lo,
                b: Src::Imm(tail as u64),
            });
        }
        self.emit(MicroOp::Alu {
            op: AluOp::Or,
            dst: r,
            a: r,
            b: Src::Reg(lo),
        });
        if len < 64 {
            self.emit(MicroOp::ShiftMask {
                reg: r,
                shift: 0,
                mask: low_mask(len),
            });
        }
        Ok(r)
    }

    fn operand_reg(&mut self, op: &Operand) -> Result<Reg, LowerError> {
        match op {
            Operand::Imm { value, .. } => {
                let r = self.alloc()?;
                self.emit(MicroOp::Mov {
                    dst: r,
                    src: Src::Imm(*value),
                });
                Ok(r)
            }
            Operand::Field(f) => self.load(f),
        }
    }

    fn operand_src(&mut self, op: &Operand) -> Result<Src, LowerError> {
        match op {
            Operand::Imm { value, .. } => Ok(Src::Imm(*value)),
            Operand::Field(f) => Ok(Src::Reg(self.load(f)?)),
        }
    }

    /// Stores the low `f.length` bits of `r` into a field.
    fn store(&mut self, f: &FieldRef, r: Reg) -> Result<(), LowerError> {
        let len = f.length as usize;
        if len == 0 || len > 64 {
            return Err(self.unsupported(format!("{f} is not a word-sized field")));
        }
        let lead = f.offset as usize % 8;
        let byte = f.offset / 8;
        let span = f.byte_span();
        if span <= 8 {
            self.emit(MicroOp::St {
                space: f.space,
                byte,
                width: span as u8,
                src: r,
                shr: 0,
                shl: (span * 8 - lead - len) as u8,
                mask: low_mask(len),
            });
            return Ok(());
        }
        // The trailing byte goes first so a bounds fault leaves memory intact.
        let low_bits = lead + len - 64;
        self.emit(MicroOp::St {
            space: f.space,
            byte: byte + 8,
            width: 1,
            src: r,
            shr: 0,
            shl: (8 - low_bits) as u8,
            mask: low_mask(low_bits),
        });
        self.emit(MicroOp::St {
            space: f.space,
            byte,
            width: 8,
            src: r,
            shr: low_bits as u8,
            shl: 0,
            mask: low_mask(64 - lead),
        });
        Ok(())
    }

    /// The fixed lookup sequence shared by GOTO_TABLE and SEARCH_TABLE, up
    /// to and including reading the result registers.
    ///
    /// Fixed ops (13 in total with the two suffix ops):
    ///  1 KEYCLR    clear the key buffer
    ///  2 MOV       key length register
    ///  3 MOV       table select register
    ///    KEYPUT    one per key field (not counted in the 13)
    ///  4 KEYEND    seal the key
    ///  5 CTXSAVE   park the thread context before the lookup
    ///  6 LOOKUP    issue the lookup (the one thread switch)
    ///  7 CTXREST   resume
    ///  8 RESRD     hit flag
    ///  9 RESRD     next block
    /// 10 RESRD     parameter length
    /// 11 RESRD     parameter base
    /// GOTO_TABLE:   12 PBIND, 13 DISPATCH
    /// SEARCH_TABLE: 12 PCOPY, 13 FLAGST
    fn lookup(&mut self, table_id: u16, key: &[FieldRef]) -> Result<(), LowerError> {
        let width: usize = key.iter().map(|f| f.length as usize).sum();
        let width = u16::try_from(width).map_err(|_| self.unsupported("key too wide"))?;
        let (kl, tid) = (self.res.key_len, self.res.table);
        self.emit(MicroOp::KeyClr { width });
        self.emit(MicroOp::Mov {
            dst: kl,
            src: Src::Imm(width as u64),
        });
        self.emit(MicroOp::Mov {
            dst: tid,
            src: Src::Imm(table_id as u64),
        });
        let mut pos = 0u16;
        for f in key {
            self.emit(MicroOp::KeyPut { pos, src: *f });
            pos += f.length;
        }
        self.emit(MicroOp::KeyEnd { len: kl });
        self.emit(MicroOp::CtxSave);
        self.emit(MicroOp::Lookup { table: tid });
        self.emit(MicroOp::CtxRestore);
        for (dst, field) in [
            (self.res.hit, ResultField::Hit),
            (self.res.block, ResultField::Block),
            (self.res.plen, ResultField::ParamLen),
            (self.res.pbase, ResultField::ParamBase),
        ] {
            self.emit(MicroOp::ResRd { dst, field });
        }
        Ok(())
    }

    fn instruction(&mut self, ins: &Instruction) -> Result<(), LowerError> {
        self.next = 0;
        match ins {
            Instruction::SetField { dst, src } => {
                let r = self.operand_reg(src)?;
                self.store(dst, r)?;
            }
            Instruction::AddField { offset, length, src } => {
                let r = self.operand_reg(src)?;
                self.emit(MicroOp::PktIns {
                    bit: *offset,
                    len: *length,
                    src: r,
                });
            }
            Instruction::DelField { offset, length } => self.emit(MicroOp::PktDel {
                bit: *offset,
                len: *length,
            }),
            Instruction::Calc { op, dst, a, b } => {
                let ra = self.operand_reg(a)?;
                let b = self.operand_src(b)?;
                self.emit(MicroOp::Alu {
                    op: *op,
                    dst: ra,
                    a: ra,
                    b,
                });
                self.store(dst, ra)?;
            }
            Instruction::ReadPool {
                dst,
                pool_offset,
                length,
            } => self.emit(MicroOp::PoolLd {
                pool_bit: *pool_offset,
                len: *length,
                dst: *dst,
            }),
            Instruction::WritePool {
                pool_offset,
                length,
                src,
            } => self.emit(MicroOp::PoolSt {
                pool_bit: *pool_offset,
                len: *length,
                src: *src,
            }),
            Instruction::IncPool {
                pool_offset,
                length,
                delta,
            } => self.emit(MicroOp::PoolInc {
                pool_bit: *pool_offset,
                len: *length,
                delta: *delta,
            }),
            Instruction::Checksum { dst, region } => {
                let r = self.alloc()?;
                self.emit(MicroOp::Cksum {
                    dst: r,
                    region: *region,
                    skip: *dst,
                });
                self.store(dst, r)?;
            }
            Instruction::GotoTable { table_id, key } => {
                self.lookup(*table_id, key)?;
                self.emit(MicroOp::PBind {
                    base: self.res.pbase,
                    len: self.res.plen,
                });
                self.emit(MicroOp::Dispatch {
                    hit: self.res.hit,
                    block: self.res.block,
                });
            }
            Instruction::SearchTable { table_id, key, dst } => {
                self.lookup(*table_id, key)?;
                self.emit(MicroOp::PCopy {
                    dst: *dst,
                    hit: self.res.hit,
                });
                self.emit(MicroOp::FlagSt { hit: self.res.hit });
            }
            Instruction::Output { port } => {
                let r = self.operand_reg(port)?;
                self.emit(MicroOp::Emit { port: r });
            }
            Instruction::Drop => self.emit(MicroOp::DropM),
            Instruction::PacketIn { reason } => self.emit(MicroOp::PktIn { reason: *reason }),
            Instruction::Branch { a, cmp, b, target } => {
                let a = self.operand_src(a)?;
                let b = self.operand_src(b)?;
                self.emit(MicroOp::Br {
                    cmp: *cmp,
                    a,
                    b,
                    target: encode_target(*target, self.index),
                });
            }
            Instruction::Jump { target } => self.emit(MicroOp::Jmp {
                target: encode_target(*target, self.index),
            }),
            Instruction::EntryMod(m) => self.emit(MicroOp::EntryOp(Box::new(m.clone()))),
            Instruction::TableMod(m) => self.emit(MicroOp::TblOp(Box::new(m.clone()))),
        }
        Ok(())
    }
}

/// Branch targets hold an instruction index until every instruction has
/// been lowered; unresolvable targets become `u32::MAX`.
fn encode_target(t: Target, pc: usize) -> u32 {
    t.resolve(pc).and_then(|i| u32::try_from(i).ok()).unwrap_or(u32::MAX)
}

/// Lowers one block. Offsets are resolved, parameter reads stay loads from
/// the parameter space, and every value lives only within the lowering of
/// its own instruction.
pub fn lower_block(block: &InstructionBlock, config: &LowerConfig) -> Result<MicroProgram, LowerError> {
    let registers = config.registers;
    if registers < RESERVED_REGS {
        return Err(LowerError::RegisterPressure {
            block: block.block_id,
            index: 0,
            needed: RESERVED_REGS as usize,
            available: registers as usize,
        });
    }
    let base = registers - RESERVED_REGS;
    let mut l = Lowerer {
        block: block.block_id,
        index: 0,
        general: base,
        next: 0,
        res: Reserved {
            key_len: base,
            table: base + 1,
            hit: base + 2,
            block: base + 3,
            plen: base + 4,
            pbase: base + 5,
        },
        ops: Vec::new(),
    };
    let mut starts = Vec::with_capacity(block.instructions.len() + 1);
    for (i, ins) in block.instructions.iter().enumerate() {
        l.index = i;
        starts.push(l.ops.len() as u32);
        l.instruction(ins)?;
    }
    starts.push(l.ops.len() as u32);
    for op in &mut l.ops {
        if let MicroOp::Br { target, .. } | MicroOp::Jmp { target } = op {
            *target = starts.get(*target as usize).copied().unwrap_or(u32::MAX);
        }
    }
    Ok(MicroProgram {
        block_id: block.block_id,
        ops: l.ops,
        registers,
        instr_starts: starts,
    })
}
