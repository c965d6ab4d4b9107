//! Compiler mode: instruction blocks lowered to register-based micro-ops.
//!
//! Field offsets are resolved to byte addresses at compile time, sub-byte
//! fields become shift-and-mask operations on loaded words, and table keys
//! are assembled by one `KEYPUT` per field with no per-field bookkeeping.

mod cost;
mod exec;
mod lower;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::isa::{AluOp, Cmp, EntryMod, InstructionBlock, Operand, TableMod};
use crate::perf::CostReport;
use crate::space::{FieldRef, Space};

pub use cost::{app_paths, block_paths, static_cost, AppPath, BlockPath, PathEnd, StaticCost};
pub use exec::run_micro;
pub use lower::{lower_block, LowerConfig, LowerError, RESERVED_REGS};

pub type Reg = u8;

pub const DEFAULT_REGISTERS: u8 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Src {
    Reg(Reg),
    Imm(u64),
}

impl fmt::Display for Src {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Src::Reg(r) => write!(f, "r{r}"),
            Src::Imm(v) => write!(f, "#{v:#x}"),
        }
    }
}

/// What a `RESRD` pulls out of the lookup result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ResultField {
    Hit,
    Block,
    ParamLen,
    ParamBase,
}

impl ResultField {
    fn mnemonic(self) -> &'static str {
        match self {
            ResultField::Hit => "hit",
            ResultField::Block => "block",
            ResultField::ParamLen => "plen",
            ResultField::ParamBase => "pbase",
        }
    }
}

/// `RESRD block` yields this when the lookup ends the packet.
pub const NO_BLOCK: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MicroOp {
    /// Big-endian load of `width` bytes (1..=8) into the low bits of `dst`.
    Ld { dst: Reg, space: Space, byte: u16, width: u8 },
    /// Read-modify-write of `width` bytes: the bits under `mask << shl` are
    /// replaced by `((src >> shr) & mask) << shl`.
    St { space: Space, byte: u16, width: u8, src: Reg, shr: u8, shl: u8, mask: u64 },
    Mov { dst: Reg, src: Src },
    Alu { op: AluOp, dst: Reg, a: Reg, b: Src },
    /// `reg = (reg >> shift) & mask`.
    ShiftMask { reg: Reg, shift: u8, mask: u64 },
    KeyClr { width: u16 },
    /// Copies a resolved field into the key buffer at bit `pos`.
    KeyPut { pos: u16, src: FieldRef },
    KeyEnd { len: Reg },
    CtxSave,
    CtxRestore,
    Lookup { table: Reg },
    ResRd { dst: Reg, field: ResultField },
    PBind { base: Reg, len: Reg },
    Dispatch { hit: Reg, block: Reg },
    /// Copies the hit entry's parameters into a metadata region.
    PCopy { dst: FieldRef, hit: Reg },
    FlagSt { hit: Reg },
    PoolLd { pool_bit: u32, len: u16, dst: FieldRef },
    PoolSt { pool_bit: u32, len: u16, src: Operand },
    PoolInc { pool_bit: u32, len: u16, delta: Operand },
    Cksum { dst: Reg, region: FieldRef, skip: FieldRef },
    PktIns { bit: u16, len: u16, src: Reg },
    PktDel { bit: u16, len: u16 },
    Emit { port: Reg },
    DropM,
    PktIn { reason: u16 },
    Br { cmp: Cmp, a: Src, b: Src, target: u32 },
    Jmp { target: u32 },
    EntryOp(Box<EntryMod>),
    TblOp(Box<TableMod>),
}

impl MicroOp {
    /// Thread switches incurred by one execution.
    pub fn hangs(&self) -> u64 {
        match self {
            MicroOp::Lookup { .. }
            | MicroOp::PoolLd { .. }
            | MicroOp::PoolSt { .. }
            | MicroOp::PoolInc { .. }
            | MicroOp::Cksum { .. } => 1,
            MicroOp::EntryOp(_) | MicroOp::TblOp(_) => 2,
            _ => 0,
        }
    }

    pub fn cost(&self) -> CostReport {
        CostReport::new(1, self.hangs())
    }

    /// Control never falls through to the next op.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            MicroOp::Emit { .. } | MicroOp::DropM | MicroOp::PktIn { .. } | MicroOp::Dispatch { .. } | MicroOp::Jmp { .. }
        )
    }

    pub fn mnemonic(&self) -> &'static str {
        match self {
            MicroOp::Ld { .. } => "ld",
            MicroOp::St { .. } => "st",
            MicroOp::Mov { .. } => "mov",
            MicroOp::Alu { op, .. } => op.mnemonic(),
            MicroOp::ShiftMask { .. } => "shmask",
            MicroOp::KeyClr { .. } => "keyclr",
            MicroOp::KeyPut { .. } => "keyput",
            MicroOp::KeyEnd { .. } => "keyend",
            MicroOp::CtxSave => "ctxsave",
            MicroOp::CtxRestore => "ctxrest",
            MicroOp::Lookup { .. } => "lookup",
            MicroOp::ResRd { .. } => "resrd",
            MicroOp::PBind { .. } => "pbind",
            MicroOp::Dispatch { .. } => "dispatch",
            MicroOp::PCopy { .. } => "pcopy",
            MicroOp::FlagSt { .. } => "flagst",
            MicroOp::PoolLd { .. } => "poolld",
            MicroOp::PoolSt { .. } => "poolst",
            MicroOp::PoolInc { .. } => "poolinc",
            MicroOp::Cksum { .. } => "cksum",
            MicroOp::PktIns { .. } => "pktins",
            MicroOp::PktDel { .. } => "pktdel",
            MicroOp::Emit { .. } => "emit",
            MicroOp::DropM => "dropm",
            MicroOp::PktIn { .. } => "pkin",
            MicroOp::Br { .. } => "br",
            MicroOp::Jmp { .. } => "jmp",
            MicroOp::EntryOp(_) => "entryop",
            MicroOp::TblOp(_) => "tblop",
        }
    }
}

impl fmt::Display for MicroOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.mnemonic();
        match self {
            MicroOp::Ld { dst, space, byte, width } => write!(f, "{m:<8} r{dst}, {}+{byte}, {width}", space.mnemonic()),
            MicroOp::St {
                space,
                byte,
                width,
                src,
                shr,
                shl,
                mask,
            } => write!(
                f,
                "{m:<8} {}+{byte}, {width}, r{src} >>{shr} &{mask:#x} <<{shl}",
                space.mnemonic()
            ),
            MicroOp::Mov { dst, src } => write!(f, "{m:<8} r{dst}, {src}"),
            MicroOp::Alu { dst, a, b, .. } => write!(f, "{m:<8} r{dst}, r{a}, {b}"),
            MicroOp::ShiftMask { reg, shift, mask } => write!(f, "{m:<8} r{reg}, {shift}, {mask:#x}"),
            MicroOp::KeyClr { width } => write!(f, "{m:<8} {width}"),
            MicroOp::KeyPut { pos, src } => write!(f, "{m:<8} {pos}, {src}"),
            MicroOp::KeyEnd { len } => write!(f, "{m:<8} r{len}"),
            MicroOp::CtxSave | MicroOp::CtxRestore | MicroOp::DropM => f.write_str(m),
            MicroOp::Lookup { table } => write!(f, "{m:<8} r{table}"),
            MicroOp::ResRd { dst, field } => write!(f, "{m:<8} r{dst}, {}", field.mnemonic()),
            MicroOp::PBind { base, len } => write!(f, "{m:<8} r{base}, r{len}"),
            MicroOp::Dispatch { hit, block } => write!(f, "{m:<8} r{hit}, r{block}"),
            MicroOp::PCopy { dst, hit } => write!(f, "{m:<8} {dst}, r{hit}"),
            MicroOp::FlagSt { hit } => write!(f, "{m:<8} r{hit}"),
            MicroOp::PoolLd { pool_bit, len, dst } => write!(f, "{m:<8} {dst}, pool[{pool_bit}:{len}]"),
            MicroOp::PoolSt { pool_bit, len, src } => write!(f, "{m:<8} pool[{pool_bit}:{len}], {src}"),
            MicroOp::PoolInc { pool_bit, len, delta } => write!(f, "{m:<8} pool[{pool_bit}:{len}], {delta}"),
            MicroOp::Cksum { dst, region, skip } => write!(f, "{m:<8} r{dst}, {region}, skip {skip}"),
            MicroOp::PktIns { bit, len, src } => write!(f, "{m:<8} pkt[{bit}:{len}], r{src}"),
            MicroOp::PktDel { bit, len } => write!(f, "{m:<8} pkt[{bit}:{len}]"),
            MicroOp::Emit { port } => write!(f, "{m:<8} r{port}"),
            MicroOp::PktIn { reason } => write!(f, "{m:<8} {reason}"),
            MicroOp::Br { cmp, a, b, target } => write!(f, "{m:<8} {} {a}, {b}, {target:04}", cmp.mnemonic()),
            MicroOp::Jmp { target } => write!(f, "{m:<8} {target:04}"),
            MicroOp::EntryOp(e) => write!(f, "{m:<8} {} table {} block {}", e.op.mnemonic(), e.table_id, e.block_id),
            MicroOp::TblOp(t) => match t.as_ref() {
                TableMod::Create(s) => write!(f, "{m:<8} create {}", s.table_id),
                TableMod::Delete(id) => write!(f, "{m:<8} delete {id}"),
            },
        }
    }
}

/// The lowered form of one instruction block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MicroProgram {
    pub block_id: u32,
    pub ops: Vec<MicroOp>,
    pub registers: u8,
    /// Index of the first op of each source instruction; one extra entry
    /// holds `ops.len()`.
    pub instr_starts: Vec<u32>,
}

impl MicroProgram {
    /// Source instruction that produced op `i`.
    pub fn instr_of(&self, i: usize) -> usize {
        self.instr_starts.partition_point(|&s| s as usize <= i) - 1
    }

    /// Cost of every op, summed.
    pub fn total_cost(&self) -> CostReport {
        self.ops.iter().fold(CostReport::default(), |acc, op| acc + op.cost())
    }

    /// Costs of the straight-line regions, split after every control
    /// transfer and before every branch target.
    pub fn region_costs(&self) -> Vec<(usize, usize, CostReport)> {
        let mut cuts = vec![false; self.ops.len() + 1];
        for (i, op) in self.ops.iter().enumerate() {
            match op {
                MicroOp::Br { target, .. } | MicroOp::Jmp { target } => {
                    cuts[i + 1] = true;
                    if let Some(c) = cuts.get_mut(*target as usize) {
                        *c = true;
                    }
                }
                op if op.is_terminal() => cuts[i + 1] = true,
                _ => {}
            }
        }
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.ops.len() {
            if cuts[i] || i == self.ops.len() {
                let c = self.ops[start..i].iter().fold(CostReport::default(), |a, op| a + op.cost());
                out.push((start, i, c));
                start = i;
            }
        }
        out
    }

    /// One op per line with its cost, followed by the block total.
    pub fn dump(&self) -> String {
        let mut s = format!("micro block {} registers {}\n", self.block_id, self.registers);
        for (i, op) in self.ops.iter().enumerate() {
            let text = op.to_string();
            s.push_str(&format!("  {i:04}  {text:<44} ; i=1 s={}\n", op.hangs()));
        }
        let t = self.total_cost();
        s.push_str(&format!("  ; ops={} hangs={}\n", t.instructions, t.switches));
        s
    }
}

/// Compiled programs by block ID. Installing under an existing ID replaces
/// the program in a single map update, so the executor sees either the old
/// or the new program, never a mix.
#[derive(Debug, Clone, Default)]
pub struct CompiledStore {
    programs: BTreeMap<u32, Arc<MicroProgram>>,
    pub config: LowerConfig,
}

impl CompiledStore {
    pub fn new(config: LowerConfig) -> Self {
        CompiledStore {
            programs: BTreeMap::new(),
            config,
        }
    }

    pub fn install(&mut self, block: &InstructionBlock) -> Result<Arc<MicroProgram>, LowerError> {
        let p = Arc::new(lower_block(block, &self.config)?);
        self.programs.insert(block.block_id, p.clone());
        Ok(p)
    }

    pub fn remove(&mut self, block_id: u32) -> Option<Arc<MicroProgram>> {
        self.programs.remove(&block_id)
    }

    pub fn get(&self, block_id: u32) -> Option<&Arc<MicroProgram>> {
        self.programs.get(&block_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<MicroProgram>> {
        self.programs.values()
    }

    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    /// Lowers every block of `blocks`, replacing the store's contents.
    pub fn rebuild<'a>(&mut self, blocks: impl IntoIterator<Item = &'a InstructionBlock>) -> Result<(), LowerError> {
        let mut fresh = BTreeMap::new();
        for b in blocks {
            fresh.insert(b.block_id, Arc::new(lower_block(b, &self.config)?));
        }
        self.programs = fresh;
        Ok(())
    }
}

#[cfg(test)]
mod tests;
