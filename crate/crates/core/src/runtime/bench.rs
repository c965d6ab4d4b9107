//! Cost reports projected through the chip model.

use std::fmt;

use serde::Serialize;

use super::{Mode, RuntimeConfig, SwitchRuntime};
use crate::isa::{Instruction, InstructionBlock, Program};
use crate::micro::{app_paths, AppPath};
use crate::perf::{ChipModel, CostReport};
use crate::space::FieldRef;
use crate::table::{MatchType, TableSchema};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: Mode,
    pub case: String,
    pub instructions: u64,
    pub switches: u64,
    /// Projected throughput, millions of packets per second.
    pub mpps: f64,
    /// Projected latency, `i + p·s` cycles.
    pub latency_cycles: f64,
}

impl BenchRow {
    pub fn new(mode: Mode, case: impl Into<String>, cost: CostReport, chip: &ChipModel) -> Self {
        BenchRow {
            mode,
            case: case.into(),
            instructions: cost.instructions,
            switches: cost.switches,
            mpps: chip.throughput(cost).map_or(0.0, |r| r / 1e6),
            latency_cycles: chip.latency_cycles(cost),
        }
    }

    pub fn cost(&self) -> CostReport {
        CostReport::new(self.instructions, self.switches)
    }

    pub const CSV_HEADER: &'static str = "mode,case,i,s,mpps,latency_cycles";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.3},{:.1}",
            self.mode, self.case, self.instructions, self.switches, self.mpps, self.latency_cycles
        )
    }
}

impl fmt::Display for BenchRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mode={} case={} i={} s={} mpps={:.3} latency_cycles={:.1}",
            self.mode, self.case, self.instructions, self.switches, self.mpps, self.latency_cycles
        )
    }
}

/// One GOTO_TABLE with `n` one-byte key fields into an empty table that
/// drops on miss.
pub fn goto_sweep_program(n: usize) -> Program {
    Program {
        schemas: vec![TableSchema::new(1, MatchType::Exact, 8 * n as u16)],
        blocks: vec![InstructionBlock::new(
            0,
            vec![Instruction::GotoTable {
                table_id: 1,
                key: (0..n).map(|i| FieldRef::pkt(8 * i as u16, 8)).collect(),
            }],
        )],
        entries: Vec::new(),
        start_block: 0,
    }
}

/// Injects one packet through the single-GOTO program for each `n` in both
/// engines and reports the measured cost.
pub fn goto_sweep(ns: impl IntoIterator<Item = usize>, config: &RuntimeConfig, chip: &ChipModel) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for n in ns {
        let mut rt = SwitchRuntime::new(config.clone());
        rt.load(&goto_sweep_program(n)).expect("sweep program is valid");
        for mode in Mode::ALL {
            rt.set_mode(mode);
            let v = rt.inject(0, vec![0; n]).expect("program is loaded");
            rows.push(BenchRow::new(mode, format!("goto-n{n}"), v.cost, chip));
        }
    }
    rows
}

/// Worst-case path costs of an installed application in both engines.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppBench {
    pub rows: Vec<BenchRow>,
    pub paths: usize,
    /// Compiled over interpreted instruction count on the worst paths.
    pub instruction_ratio: f64,
    /// Compiled over interpreted projected throughput.
    pub throughput_ratio: f64,
}

fn worst(paths: &[AppPath], cost: impl Fn(&AppPath) -> CostReport) -> CostReport {
    paths
        .iter()
        .map(cost)
        .max_by_key(|c| (c.instructions, c.switches))
        .unwrap_or_default()
}

/// Enumerates every packet path of the runtime's current program and
/// reports the worst one per engine.
pub fn app_bench(rt: &SwitchRuntime, case: &str, chip: &ChipModel) -> AppBench {
    let program = rt.current_program();
    let paths = app_paths(&program, rt.compiled(), rt.costs());
    let interp = worst(&paths, |p| p.interp);
    let compiled = worst(&paths, |p| p.compiled);
    let rows = vec![
        BenchRow::new(Mode::Interp, case, interp, chip),
        BenchRow::new(Mode::Compile, case, compiled, chip),
    ];
    let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    AppBench {
        instruction_ratio: ratio(compiled.instructions as f64, interp.instructions as f64),
        throughput_ratio: ratio(rows[1].mpps, rows[0].mpps),
        paths: paths.len(),
        rows,
    }
}
