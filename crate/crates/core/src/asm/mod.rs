//! Textual assembly for programs, its disassembler, and the binary image
//! format.
//!
//! ```text
//! table 2 lpm key 48 miss packetin
//! block 1 { goto 2 key(meta[16:16], pkt[240:32]) }
//! block 3 { out param[0:16] }
//! entry 2 value 0x00640a010000 mask 0xffffffff0000 block 3 params 0x0003
//! start 1
//! ```

mod disasm;
mod parse;
pub mod wire;

use std::collections::HashMap;
use std::fmt;

use crate::isa::Program;
use crate::space::SpaceSizes;
use crate::validate::{validate_program, Diagnostic};

pub use disasm::{disassemble, format_instruction, format_schema};
pub use parse::{parse, parse_entry, parse_entry_key};
pub use wire::{decode, encode, WireError};

/// Assembly source and the name used in diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceUnit {
    pub name: String,
    pub text: String,
}

impl SourceUnit {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        SourceUnit {
            name: name.into(),
            text: text.into(),
        }
    }
}

/// 1-based line and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmDiagnostic {
    pub file: String,
    pub pos: Pos,
    pub message: String,
}

impl fmt::Display for AsmDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.pos, self.message)
    }
}

impl std::error::Error for AsmDiagnostic {}

/// Where each program item came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub schemas: Vec<Pos>,
    pub blocks: HashMap<u32, Pos>,
    pub instructions: HashMap<(u32, usize), Pos>,
    pub entries: Vec<Pos>,
    pub start: Option<Pos>,
}

impl SourceMap {
    /// Best source position for a validation finding.
    pub fn locate(&self, d: &Diagnostic) -> Pos {
        let instr = d.block.zip(d.index).and_then(|k| self.instructions.get(&k));
        let block = d.block.and_then(|b| self.blocks.get(&b));
        let entry = d.entry.and_then(|e| self.entries.get(e));
        instr
            .or(block)
            .or(entry)
            .or(self.start.as_ref())
            .copied()
            .unwrap_or(Pos { line: 1, col: 1 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed {
    pub program: Program,
    pub map: SourceMap,
}

/// Parses and validates; every problem comes back with a source position.
pub fn assemble(src: &SourceUnit, sizes: &SpaceSizes) -> Result<Program, Vec<AsmDiagnostic>> {
    let parsed = parse(src).map_err(|d| vec![d])?;
    let diags = validate_program(&parsed.program, sizes);
    if diags.is_empty() {
        return Ok(parsed.program);
    }
    Err(diags
        .iter()
        .map(|d| AsmDiagnostic {
            file: src.name.clone(),
            pos: parsed.map.locate(d),
            message: d.to_string(),
        })
        .collect())
}
