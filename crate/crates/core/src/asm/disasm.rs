use std::fmt::Write;

use crate::isa::{Instruction, Operand, Program, TableMod};
use crate::space::FieldRef;
use crate::table::{FlowEntry, TableSchema, DEFAULT_MAX_ENTRIES};

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// `<id> <match> key <bits> [size n] miss <policy>`, the tail shared by
/// `table` and `tablemod create`.
pub fn format_schema(s: &TableSchema) -> String {
    let mut out = format!("{} {} key {}", s.table_id, s.match_type.mnemonic(), s.key_width);
    if s.max_entries != DEFAULT_MAX_ENTRIES {
        let _ = write!(out, " size {}", s.max_entries);
    }
    let _ = write!(out, " miss {}", s.miss);
    out
}

fn pool(offset: u32, length: u16) -> String {
    format!("pool[{offset}:{length}]")
}

pub fn format_instruction(ins: &Instruction) -> String {
    match ins {
        Instruction::SetField { dst, src } => format!("set {dst} <- {src}"),
        Instruction::AddField { offset, length, src } => {
            format!("addfield {} <- {src}", FieldRef::pkt(*offset, *length))
        }
        Instruction::DelField { offset, length } => format!("delfield {}", FieldRef::pkt(*offset, *length)),
        Instruction::Calc { op, dst, a, b } => format!("calc {} {dst} <- {a}, {b}", op.mnemonic()),
        Instruction::ReadPool {
            dst,
            pool_offset,
            length,
        } => format!("poolrd {dst} <- {}", pool(*pool_offset, *length)),
        Instruction::WritePool {
            pool_offset,
            length,
            src,
        } => format!("poolwr {} <- {src}", pool(*pool_offset, *length)),
        Instruction::IncPool {
            pool_offset,
            length,
            delta,
        } => format!("poolinc {} by {delta}", pool(*pool_offset, *length)),
        Instruction::Checksum { dst, region } => format!("checksum {dst} over {region}"),
        Instruction::GotoTable { table_id, key } => format!("goto {table_id} key({})", join(key)),
        Instruction::SearchTable { table_id, key, dst } => {
            format!("search {table_id} key({}) -> {dst}", join(key))
        }
        Instruction::Output { port } => format!("out {port}"),
        Instruction::Drop => "drop".to_string(),
        Instruction::PacketIn { reason } => format!("packetin {reason}"),
        Instruction::Branch { a, cmp, b, target } => format!("br {} {a}, {b}, {target}", cmp.mnemonic()),
        Instruction::Jump { target } => format!("jmp {target}"),
        Instruction::EntryMod(m) => format!(
            "entrymod {} {} key({}) mask 0x{} prio {} block {} params({})",
            m.op.mnemonic(),
            m.table_id,
            join::<Operand>(&m.key),
            m.mask.to_hex(),
            m.priority,
            m.block_id,
            join::<Operand>(&m.params)
        ),
        Instruction::TableMod(TableMod::Create(s)) => format!("tablemod create {}", format_schema(s)),
        Instruction::TableMod(TableMod::Delete(t)) => format!("tablemod delete {t}"),
    }
}

fn format_entry(table: u16, e: &FlowEntry) -> String {
    let mut out = format!("entry {table} value 0x{}", e.value.to_hex());
    if !e.mask.is_all_ones() {
        let _ = write!(out, " mask 0x{}", e.mask.to_hex());
    }
    if e.priority != 0 {
        let _ = write!(out, " prio {}", e.priority);
    }
    let _ = write!(out, " block {}", e.block_id);
    if !e.params.is_empty() {
        let _ = write!(out, " params 0x{}", hex::encode(&e.params));
    }
    out
}

/// Renders a program as assembly that parses back to the same program.
pub fn disassemble(p: &Program) -> String {
    let mut out = String::new();
    for s in &p.schemas {
        let _ = writeln!(out, "table {}", format_schema(s));
    }
    for b in &p.blocks {
        if !out.is_empty() {
            out.push('\n');
        }
        match b.instructions.as_slice() {
            [one] => {
                let _ = writeln!(out, "block {} {{ {} }}", b.block_id, format_instruction(one));
            }
            many => {
                let _ = writeln!(out, "block {} {{", b.block_id);
                for ins in many {
                    let _ = writeln!(out, "    {}", format_instruction(ins));
                }
                out.push_str("}\n");
            }
        }
    }
    if !p.entries.is_empty() {
        out.push('\n');
    }
    for (t, e) in &p.entries {
        let _ = writeln!(out, "{}", format_entry(*t, e));
    }
    let _ = write!(out, "\nstart {}\n", p.start_block);
    out
}
