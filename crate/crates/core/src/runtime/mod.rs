//! The switch: an installed program, the active engine, egress and
//! packet-in sinks, control-channel mutations and statistics.

mod bench;
mod script;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::datapath::{Datapath, Disposition, TraceRecord, Verdict};
use crate::interp::{InterpCosts, Interpreter};
use crate::isa::{Instruction, InstructionBlock, Program, TableMod};
use crate::micro::{run_micro, CompiledStore, LowerConfig, LowerError};
use crate::perf::CostReport;
use crate::space::{PacketBuf, SpaceSizes};
use crate::table::{EntryKey, FlowEntry, MissPolicy, TableError, TableSchema};
use crate::validate::{validate_block, validate_program, Diagnostic, ValidationContext};

pub use bench::{app_bench, goto_sweep, goto_sweep_program, AppBench, BenchRow};
pub use script::{parse_hex_packet, parse_script, Expect, InjectionRecord, ScriptOutcome, ScriptResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Interp,
    #[default]
    Compile,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Interp, Mode::Compile];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Interp => "interp",
            Mode::Compile => "compile",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "interp" | "interpreter" => Ok(Mode::Interp),
            "compile" | "compiler" => Ok(Mode::Compile),
            _ => Err(RuntimeError::BadMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("no program is loaded")]
    NoProgram,
    #[error("unknown engine mode '{0}' (expected interp or compile)")]
    BadMode(String),
    #[error("program rejected: {}", first(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Lower(#[from] LowerError),
    #[error("block {0} is still referenced")]
    ReferencedBlock(u32),
    #[error("table {0} is still referenced by an installed block")]
    ReferencedTable(u16),
    #[error("unknown block {0}")]
    UnknownBlock(u32),
    #[error("block {0} already exists")]
    DuplicateBlock(u32),
    #[error("line {line}: malformed hex: {reason}")]
    MalformedHex { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Script { line: usize, reason: String },
}

fn first(d: &[Diagnostic]) -> String {
    match d {
        [] => "no diagnostics".to_string(),
        [one] => one.to_string(),
        [one, rest @ ..] => format!("{one} (+{} more)", rest.len()),
    }
}

/// A control-channel mutation, applied between packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    CreateTable(TableSchema),
    DeleteTable(u16),
    InstallBlock(InstructionBlock),
    /// Installs `block` under its new ID, moves every reference to `old`
    /// over, then retires `old`.
    ReplaceBlock { old: u32, block: InstructionBlock },
    DeleteBlock(u32),
    InsertEntry { table_id: u16, entry: FlowEntry },
    ModifyEntry {
        table_id: u16,
        key: EntryKey,
        block_id: u32,
        params: Vec<u8>,
    },
    DeleteEntry { table_id: u16, key: EntryKey },
}

/// A packet that left through a port.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EgressRecord {
    pub port: u32,
    pub bytes: Vec<u8>,
}

/// A packet delivered to the controller, with its reason code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PacketInRecord {
    pub ingress_port: u32,
    pub reason: u16,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ModeStats {
    pub packets: u64,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableStats {
    pub table_id: u16,
    pub match_type: &'static str,
    pub entries: usize,
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub mode: Mode,
    pub interp: ModeStats,
    pub compile: ModeStats,
    pub tables: Vec<TableStats>,
    pub pool_offset: usize,
    /// Hex of the pool window.
    pub pool_window: String,
    pub outputs: u64,
    pub drops: u64,
    pub packet_ins: u64,
    pub faults: u64,
    pub rejected_mods: u64,
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode={}", self.mode)?;
        for (m, s) in [(Mode::Interp, &self.interp), (Mode::Compile, &self.compile)] {
            writeln!(
                f,
                "{m}.packets={} {m}.i={} {m}.s={}",
                s.packets, s.cost.instructions, s.cost.switches
            )?;
        }
        for t in &self.tables {
            writeln!(
                f,
                "table.{id}.type={} table.{id}.entries={} table.{id}.hits={} table.{id}.misses={}",
                t.match_type,
                t.entries,
                t.hits,
                t.misses,
                id = t.table_id
            )?;
        }
        writeln!(
            f,
            "outputs={} drops={} packet_ins={} faults={} rejected_mods={}",
            self.outputs, self.drops, self.packet_ins, self.faults, self.rejected_mods
        )?;
        writeln!(f, "pool[{}..]={}", self.pool_offset, self.pool_window)
    }
}

/// Runtime knobs that are not part of a program.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeConfig {
    pub sizes: SpaceSizes,
    pub lower: LowerConfig,
    pub costs: InterpCosts,
    /// Byte range of the pool shown by `stats`.
    pub pool_window: (usize, usize),
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            sizes: SpaceSizes::default(),
            lower: LowerConfig::default(),
            costs: InterpCosts::default(),
            pool_window: (0, 32),
        }
    }
}

/// The single owner of all mutable switch state.
#[derive(Debug, Clone)]
pub struct SwitchRuntime {
    pub config: RuntimeConfig,
    dp: Datapath,
    compiled: CompiledStore,
    interp: Interpreter,
    mode: Mode,
    loaded: bool,
    pub egress: Vec<EgressRecord>,
    pub packet_in: Vec<PacketInRecord>,
    interp_stats: ModeStats,
    compile_stats: ModeStats,
    drops: u64,
    faults: u64,
    trace_on: bool,
    last_trace: Vec<TraceRecord>,
}

impl Default for SwitchRuntime {
    fn default() -> Self {
        Self::new(RuntimeConfig::default())
    }
}

fn blocks_named(ins: &Instruction) -> Option<u32> {
    match ins {
        Instruction::EntryMod(m) => Some(m.block_id),
        Instruction::TableMod(TableMod::Create(s)) => match s.miss {
            MissPolicy::GotoBlock(b) => Some(b),
            _ => None,
        },
        _ => None,
    }
}

fn tables_named(ins: &Instruction) -> Option<u16> {
    match ins {
        Instruction::GotoTable { table_id, .. } | Instruction::SearchTable { table_id, .. } => Some(*table_id),
        Instruction::EntryMod(m) => Some(m.table_id),
        _ => None,
    }
}

impl SwitchRuntime {
    pub fn new(config: RuntimeConfig) -> Self {
        SwitchRuntime {
            dp: Datapath::new(config.sizes),
            compiled: CompiledStore::new(config.lower),
            interp: Interpreter::new(config.costs),
            config,
            mode: Mode::default(),
            loaded: false,
            egress: Vec::new(),
            packet_in: Vec::new(),
            interp_stats: ModeStats::default(),
            compile_stats: ModeStats::default(),
            drops: 0,
            faults: 0,
            trace_on: false,
            last_trace: Vec::new(),
        }
    }

    /// Validates, compiles and installs `program`, replacing all state
    /// except the engine mode and trace toggle.
    pub fn load(&mut self, program: &Program) -> Result<(), RuntimeError> {
        let diags = validate_program(program, &self.config.sizes);
        if !diags.is_empty() {
            return Err(RuntimeError::Invalid(diags));
        }
        let mut compiled = CompiledStore::new(self.config.lower);
        compiled.rebuild(&program.blocks)?;
        let mut dp = Datapath::new(self.config.sizes);
        for s in &program.schemas {
            dp.tables.create(s.clone())?;
        }
        for b in &program.blocks {
            dp.blocks.insert(b.block_id, b.clone());
        }
        for (t, e) in &program.entries {
            dp.tables.insert(*t, e.clone(), |_| true)?;
        }
        dp.start_block = program.start_block;
        let (mode, trace_on) = (self.mode, self.trace_on);
        *self = SwitchRuntime::new(self.config.clone());
        self.dp = dp;
        self.compiled = compiled;
        self.mode = mode;
        self.trace_on = trace_on;
        self.loaded = true;
        Ok(())
    }

    pub fn is_loaded(&self) -> bool {
        self.loaded
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn set_trace(&mut self, on: bool) {
        self.trace_on = on;
        self.last_trace.clear();
    }

    pub fn trace_enabled(&self) -> bool {
        self.trace_on
    }

    /// Trace of the most recent packet, when tracing is on.
    pub fn last_trace(&self) -> &[TraceRecord] {
        &self.last_trace
    }

    pub fn datapath(&self) -> &Datapath {
        &self.dp
    }

    pub fn compiled(&self) -> &CompiledStore {
        &self.compiled
    }

    pub fn costs(&self) -> &InterpCosts {
        &self.interp.costs
    }

    /// The installed state as a program: current tables, entries, blocks.
    pub fn current_program(&self) -> Program {
        let snap = self.dp.tables.snapshot();
        Program {
            schemas: snap.iter().map(|t| t.schema.clone()).collect(),
            blocks: self.dp.blocks.values().cloned().collect(),
            entries: snap
                .iter()
                .flat_map(|t| t.entries.iter().map(move |e| (t.schema.table_id, e.clone())))
                .collect(),
            start_block: self.dp.start_block,
        }
    }

    fn validation_context(&self, extra_block: Option<u32>) -> ValidationContext {
        let mut ctx = ValidationContext::new(self.config.sizes);
        ctx.schemas = self.dp.tables.iter().map(|t| (t.schema().table_id, t.schema().clone())).collect();
        for ins in self.dp.blocks.values().flat_map(|b| &b.instructions) {
            if let Instruction::TableMod(TableMod::Create(s)) = ins {
                ctx.schemas.entry(s.table_id).or_insert_with(|| s.clone());
            }
        }
        let mut blocks: BTreeSet<u32> = self.dp.blocks.keys().copied().collect();
        blocks.extend(extra_block);
        ctx.blocks = Some(blocks);
        ctx
    }

    fn check_new_block(&self, block: &InstructionBlock) -> Result<(), RuntimeError> {
        if self.dp.blocks.contains_key(&block.block_id) {
            return Err(RuntimeError::DuplicateBlock(block.block_id));
        }
        let diags = validate_block(block, &self.validation_context(Some(block.block_id)));
        if diags.is_empty() {
            Ok(())
        } else {
            Err(RuntimeError::Invalid(diags))
        }
    }

    fn block_referenced(&self, id: u32) -> bool {
        self.dp.start_block == id
            || self.dp.tables.references_block(id)
            || self
                .dp
                .blocks
                .values()
                .filter(|b| b.block_id != id)
                .flat_map(|b| &b.instructions)
                .any(|i| blocks_named(i) == Some(id))
    }

    /// Applies one control mutation. The next packet sees the result.
    pub fn apply_control(&mut self, op: Control) -> Result<(), RuntimeError> {
        if !self.loaded {
            return Err(RuntimeError::NoProgram);
        }
        let installed = |dp: &Datapath| {
            let ids: BTreeSet<u32> = dp.blocks.keys().copied().collect();
            move |b: u32| ids.contains(&b)
        };
        match op {
            Control::CreateTable(s) => {
                if let MissPolicy::GotoBlock(b) = s.miss {
                    if !self.dp.blocks.contains_key(&b) {
                        return Err(RuntimeError::UnknownBlock(b));
                    }
                }
                self.dp.tables.create(s)?
            }
            Control::DeleteTable(id) => {
                if self.dp.blocks.values().flat_map(|b| &b.instructions).any(|i| tables_named(i) == Some(id)) {
                    return Err(RuntimeError::ReferencedTable(id));
                }
                self.dp.tables.remove(id)?;
            }
            Control::InstallBlock(block) => {
                self.check_new_block(&block)?;
                self.compiled.install(&block)?;
                self.dp.blocks.insert(block.block_id, block);
            }
            Control::ReplaceBlock { old, block } => {
                if !self.dp.blocks.contains_key(&old) {
                    return Err(RuntimeError::UnknownBlock(old));
                }
                self.check_new_block(&block)?;
                let new = block.block_id;
                self.compiled.install(&block)?;
                self.dp.blocks.insert(new, block);
                self.dp.tables.repoint_block(old, new);
                if self.dp.start_block == old {
                    self.dp.start_block = new;
                }
                if !self.block_referenced(old) {
                    self.dp.blocks.remove(&old);
                    self.compiled.remove(old);
                }
            }
            Control::DeleteBlock(id) => {
                if !self.dp.blocks.contains_key(&id) {
                    return Err(RuntimeError::UnknownBlock(id));
                }
                if self.block_referenced(id) {
                    return Err(RuntimeError::ReferencedBlock(id));
                }
                self.dp.blocks.remove(&id);
                self.compiled.remove(id);
            }
            Control::InsertEntry { table_id, entry } => {
                let ok = installed(&self.dp);
                self.dp.tables.insert(table_id, entry, ok)?
            }
            Control::ModifyEntry {
                table_id,
                key,
                block_id,
                params,
            } => {
                let ok = installed(&self.dp);
                self.dp.tables.modify(table_id, &key, block_id, params, ok)?
            }
            Control::DeleteEntry { table_id, key } => {
                self.dp.tables.delete(table_id, &key)?;
            }
        }
        Ok(())
    }

    /// Runs one packet through the active engine and delivers the result.
    pub fn inject(&mut self, ingress_port: u32, bytes: Vec<u8>) -> Result<Verdict, RuntimeError> {
        if !self.loaded {
            return Err(RuntimeError::NoProgram);
        }
        let packet = PacketBuf::new(ingress_port, bytes);
        self.last_trace.clear();
        let trace = self.trace_on.then_some(&mut self.last_trace);
        let v = match self.mode {
            Mode::Interp => self.interp.run_packet(&mut self.dp, packet, trace),
            Mode::Compile => run_micro(&self.compiled, &mut self.dp, packet, trace),
        };
        let s = match self.mode {
            Mode::Interp => &mut self.interp_stats,
            Mode::Compile => &mut self.compile_stats,
        };
        s.packets += 1;
        s.cost += v.cost;
        if v.fault.is_some() {
            self.faults += 1;
        }
        match v.disposition {
            Disposition::Output(port) => self.egress.push(EgressRecord {
                port,
                bytes: v.packet.clone(),
            }),
            Disposition::Drop => self.drops += 1,
            Disposition::PacketIn(reason) => self.packet_in.push(PacketInRecord {
                ingress_port,
                reason,
                bytes: v.packet.clone(),
            }),
        }
        Ok(v)
    }

    /// Egress packets grouped by port, in arrival order.
    pub fn ports(&self) -> BTreeMap<u32, Vec<&[u8]>> {
        let mut out: BTreeMap<u32, Vec<&[u8]>> = BTreeMap::new();
        for e in &self.egress {
            out.entry(e.port).or_default().push(&e.bytes);
        }
        out
    }

    pub fn stats(&self) -> Stats {
        let (off, len) = self.config.pool_window;
        Stats {
            mode: self.mode,
            interp: self.interp_stats,
            compile: self.compile_stats,
            tables: self
                .dp
                .tables
                .iter()
                .map(|t| TableStats {
                    table_id: t.schema().table_id,
                    match_type: t.schema().match_type.mnemonic(),
                    entries: t.len(),
                    hits: t.counters.hits,
                    misses: t.counters.misses,
                })
                .collect(),
            pool_offset: off,
            pool_window: hex::encode(self.dp.pool.window(off, len)),
            outputs: self.egress.len() as u64,
            drops: self.drops,
            packet_ins: self.packet_in.len() as u64,
            faults: self.faults,
            rejected_mods: self.dp.rejected_mods,
        }
    }
}

#[cfg(test)]
mod tests;
