//! The generic flow-instruction set, instruction blocks and programs.

use std::fmt;

use crate::bits::{low_mask, BitString};
use crate::space::FieldRef;
use crate::table::{FlowEntry, TableSchema};

/// Blocks hold at most this many instructions.
pub const MAX_BLOCK_LEN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operand {
    /// Immediate of `width` bits (1..=64); `value < 2^width`.
    Imm { value: u64, width: u8 },
    Field(FieldRef),
}

impl Operand {
    pub fn imm(value: u64) -> Self {
        Operand::Imm { value, width: 64 }
    }

    pub fn imm_w(value: u64, width: u8) -> Self {
        debug_assert!(width as usize <= 64 && value & !low_mask(width as usize) == 0);
        Operand::Imm { value, width }
    }

    /// Width in bits.
    pub fn width(&self) -> usize {
        match self {
            Operand::Imm { width, .. } => *width as usize,
            Operand::Field(f) => f.length as usize,
        }
    }
}

impl From<FieldRef> for Operand {
    fn from(f: FieldRef) -> Self {
        Operand::Field(f)
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Imm { value, width: 64 } => write!(f, "imm {value:#x}"),
            Operand::Imm { value, width } => write!(f, "imm {value:#x}:{width}"),
            Operand::Field(r) => r.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
}

impl AluOp {
    pub const ALL: [AluOp; 7] = [AluOp::Add, AluOp::Sub, AluOp::And, AluOp::Or, AluOp::Xor, AluOp::Shl, AluOp::Shr];

    /// 64-bit wrapping semantics; shifts of 64 or more yield zero.
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
            AluOp::Shl => if b >= 64 { 0 } else { a << b },
            AluOp::Shr => if b >= 64 { 0 } else { a >> b },
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Xor => "xor",
            AluOp::Shl => "shl",
            AluOp::Shr => "shr",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.mnemonic() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl Cmp {
    pub const ALL: [Cmp; 6] = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Gt, Cmp::Le, Cmp::Ge];

    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            Cmp::Eq => a == b,
            Cmp::Ne => a != b,
            Cmp::Lt => a < b,
            Cmp::Gt => a > b,
            Cmp::Le => a <= b,
            Cmp::Ge => a >= b,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cmp::Eq => "eq",
            Cmp::Ne => "ne",
            Cmp::Lt => "lt",
            Cmp::Gt => "gt",
            Cmp::Le => "le",
            Cmp::Ge => "ge",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.mnemonic() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Abs(u16),
    Rel(i16),
}

impl Target {
    /// Resolves against the index of the branching instruction.
    pub fn resolve(self, pc: usize) -> Option<usize> {
        match self {
            Target::Abs(i) => Some(i as usize),
            Target::Rel(d) => usize::try_from(pc as i64 + d as i64).ok(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Abs(i) => write!(f, "@{i}"),
            Target::Rel(d) if *d >= 0 => write!(f, "+{d}"),
            Target::Rel(d) => write!(f, "{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntryOp {
    Insert,
    Delete,
    Modify,
}

impl EntryOp {
    pub fn mnemonic(self) -> &'static str {
        match self {
            EntryOp::Insert => "insert",
            EntryOp::Delete => "delete",
            EntryOp::Modify => "modify",
        }
    }
}

/// Flow-entry mutation issued from the datapath.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntryMod {
    pub op: EntryOp,
    pub table_id: u16,
    /// Concatenated to form the entry value.
    pub key: Vec<Operand>,
    pub mask: BitString,
    pub priority: u16,
    pub block_id: u32,
    /// Concatenated (and zero-padded to whole bytes) to form the parameters.
    pub params: Vec<Operand>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TableMod {
    Create(TableSchema),
    Delete(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Instruction {
    SetField { dst: FieldRef, src: Operand },
    /// Inserts `length` bits of packet at bit `offset`, filled from `src`.
    AddField { offset: u16, length: u16, src: Operand },
    DelField { offset: u16, length: u16 },
    Calc { op: AluOp, dst: FieldRef, a: Operand, b: Operand },
    ReadPool { dst: FieldRef, pool_offset: u32, length: u16 },
    WritePool { pool_offset: u32, length: u16, src: Operand },
    IncPool { pool_offset: u32, length: u16, delta: Operand },
    /// Stores the internet checksum of `region` (same space as `dst`, with
    /// `dst` read as zero) into the 16-bit `dst`.
    Checksum { dst: FieldRef, region: FieldRef },
    GotoTable { table_id: u16, key: Vec<FieldRef> },
    SearchTable { table_id: u16, key: Vec<FieldRef>, dst: FieldRef },
    Output { port: Operand },
    Drop,
    PacketIn { reason: u16 },
    Branch { a: Operand, cmp: Cmp, b: Operand, target: Target },
    Jump { target: Target },
    EntryMod(EntryMod),
    TableMod(TableMod),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstrKind {
    SetField,
    AddField,
    DelField,
    Calc,
    ReadPool,
    WritePool,
    IncPool,
    Checksum,
    GotoTable,
    SearchTable,
    Output,
    Drop,
    PacketIn,
    Branch,
    Jump,
    EntryMod,
    TableMod,
}

impl Instruction {
    pub fn kind(&self) -> InstrKind {
        match self {
            Instruction::SetField { .. } => InstrKind::SetField,
            Instruction::AddField { .. } => InstrKind::AddField,
            Instruction::DelField { .. } => InstrKind::DelField,
            Instruction::Calc { .. } => InstrKind::Calc,
            Instruction::ReadPool { .. } => InstrKind::ReadPool,
            Instruction::WritePool { .. } => InstrKind::WritePool,
            Instruction::IncPool { .. } => InstrKind::IncPool,
            Instruction::Checksum { .. } => InstrKind::Checksum,
            Instruction::GotoTable { .. } => InstrKind::GotoTable,
            Instruction::SearchTable { .. } => InstrKind::SearchTable,
            Instruction::Output { .. } => InstrKind::Output,
            Instruction::Drop => InstrKind::Drop,
            Instruction::PacketIn { .. } => InstrKind::PacketIn,
            Instruction::Branch { .. } => InstrKind::Branch,
            Instruction::Jump { .. } => InstrKind::Jump,
            Instruction::EntryMod(_) => InstrKind::EntryMod,
            Instruction::TableMod(_) => InstrKind::TableMod,
        }
    }

    /// Ends the block's execution: control never falls through.
    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            Instruction::GotoTable { .. } | Instruction::Output { .. } | Instruction::Drop | Instruction::PacketIn { .. }
        )
    }
}

impl InstrKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            InstrKind::SetField => "set",
            InstrKind::AddField => "addfield",
            InstrKind::DelField => "delfield",
            InstrKind::Calc => "calc",
            InstrKind::ReadPool => "poolrd",
            InstrKind::WritePool => "poolwr",
            InstrKind::IncPool => "poolinc",
            InstrKind::Checksum => "checksum",
            InstrKind::GotoTable => "goto",
            InstrKind::SearchTable => "search",
            InstrKind::Output => "out",
            InstrKind::Drop => "drop",
            InstrKind::PacketIn => "packetin",
            InstrKind::Branch => "br",
            InstrKind::Jump => "jmp",
            InstrKind::EntryMod => "entrymod",
            InstrKind::TableMod => "tablemod",
        }
    }
}

/// An ID'd instruction sequence shared by every flow entry that names it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InstructionBlock {
    pub block_id: u32,
    pub instructions: Vec<Instruction>,
}

impl InstructionBlock {
    pub fn new(block_id: u32, instructions: Vec<Instruction>) -> Self {
        InstructionBlock {
            block_id,
            instructions,
        }
    }
}

/// The unit of deployment: tables, blocks, initial entries and the block
/// every packet starts in.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub schemas: Vec<TableSchema>,
    pub blocks: Vec<InstructionBlock>,
    pub entries: Vec<(u16, FlowEntry)>,
    pub start_block: u32,
}

impl Program {
    pub fn block(&self, id: u32) -> Option<&InstructionBlock> {
        self.blocks.iter().find(|b| b.block_id == id)
    }

    pub fn schema(&self, id: u16) -> Option<&TableSchema> {
        self.schemas.iter().find(|s| s.table_id == id)
    }
}
