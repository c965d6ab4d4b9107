use std::collections::BTreeSet;

use super::{CompiledStore, MicroOp, MicroProgram};
use crate::interp::InterpCosts;
use crate::isa::{Instruction, Program};
use crate::perf::CostReport;
use crate::table::MissPolicy;

/// Enumeration stops after this many paths; the worst case is still exact.
pub const MAX_PATHS: usize = 1 << 16;

/// How a path through one micro-program ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathEnd {
    Emit,
    Drop,
    PacketIn(u16),
    /// Table dispatch issued by the GOTO_TABLE at this instruction index.
    Dispatch(usize),
    /// Control leaves the program without a terminal op.
    FallOff,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPath {
    pub cost: CostReport,
    /// Source instructions executed, in order.
    pub instrs: Vec<usize>,
    pub end: PathEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticCost {
    pub paths: Vec<CostReport>,
    pub worst: CostReport,
    /// Set when enumeration hit `MAX_PATHS`.
    pub truncated: bool,
}

fn rank(c: CostReport) -> (u64, u64) {
    (c.instructions, c.switches)
}

fn successors(p: &MicroProgram, i: usize) -> Vec<usize> {
    match &p.ops[i] {
        MicroOp::Br { target, .. } => vec![*target as usize, i + 1],
        MicroOp::Jmp { target } => vec![*target as usize],
        op if op.is_terminal() => vec![],
        _ => vec![i + 1],
    }
}

fn end_of(p: &MicroProgram, i: usize) -> PathEnd {
    match p.ops.get(i) {
        Some(MicroOp::Emit { .. }) => PathEnd::Emit,
        Some(MicroOp::DropM) => PathEnd::Drop,
        Some(MicroOp::PktIn { reason }) => PathEnd::PacketIn(*reason),
        Some(MicroOp::Dispatch { .. }) => PathEnd::Dispatch(p.instr_of(i)),
        _ => PathEnd::FallOff,
    }
}

/// Every path from op 0 to a terminal, up to `MAX_PATHS`.
pub fn block_paths(p: &MicroProgram) -> (Vec<BlockPath>, bool) {
    let mut out = Vec::new();
    let mut truncated = false;
    // (op index, cost so far, instrs so far)
    let mut stack = vec![(0usize, CostReport::default(), Vec::<usize>::new())];
    while let Some((mut i, mut cost, mut instrs)) = stack.pop() {
        loop {
            if i >= p.ops.len() {
                out.push(BlockPath {
                    cost,
                    instrs,
                    end: PathEnd::FallOff,
                });
                break;
            }
            cost += p.ops[i].cost();
            let ins = p.instr_of(i);
            if instrs.last() != Some(&ins) {
                instrs.push(ins);
            }
            let next = successors(p, i);
            // Only forward transfers are followed.
            let next: Vec<usize> = next.into_iter().filter(|&n| n > i).collect();
            match next.as_slice() {
                [] => {
                    out.push(BlockPath {
                        cost,
                        instrs,
                        end: end_of(p, i),
                    });
                    break;
                }
                [n] => i = *n,
                [first, rest @ ..] => {
                    for &n in rest {
                        stack.push((n, cost, instrs.clone()));
                    }
                    i = *first;
                }
            }
        }
        if out.len() >= MAX_PATHS {
            truncated = !stack.is_empty();
            break;
        }
    }
    (out, truncated)
}

/// Per-path tallies and the worst case over all paths.
pub fn static_cost(p: &MicroProgram) -> StaticCost {
    let (paths, truncated) = block_paths(p);
    // Longest path over the forward-only control graph, computed backwards.
    let n = p.ops.len();
    let mut best = vec![CostReport::default(); n + 1];
    for i in (0..n).rev() {
        let tail = successors(p, i)
            .into_iter()
            .filter(|&s| s > i)
            .map(|s| best[s.min(n)])
            .max_by_key(|c| rank(*c))
            .unwrap_or_default();
        best[i] = p.ops[i].cost() + tail;
    }
    StaticCost {
        paths: paths.iter().map(|b| b.cost).collect(),
        worst: best.first().copied().unwrap_or_default(),
        truncated,
    }
}

/// One end-to-end path through a program: the blocks visited, and the cost
/// of that same path in both engines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppPath {
    pub blocks: Vec<u32>,
    pub compiled: CostReport,
    pub interp: CostReport,
    pub end: PathEnd,
}

/// Enumerates packet paths through a program given its initial table
/// contents. A table dispatch continues into every block an entry (or the
/// miss policy) names, plus a terminal miss when the policy ends the packet.
/// Blocks already on the path are not re-entered.
pub fn app_paths(program: &Program, store: &CompiledStore, costs: &InterpCosts) -> Vec<AppPath> {
    let mut out = Vec::new();
    let mut chain = Vec::new();
    walk(
        program,
        store,
        costs,
        program.start_block,
        &mut chain,
        CostReport::default(),
        CostReport::default(),
        &mut out,
    );
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    program: &Program,
    store: &CompiledStore,
    costs: &InterpCosts,
    block: u32,
    chain: &mut Vec<u32>,
    compiled: CostReport,
    interp: CostReport,
    out: &mut Vec<AppPath>,
) {
    let (Some(prog), Some(src)) = (store.get(block), program.block(block)) else {
        return;
    };
    chain.push(block);
    for path in block_paths(prog).0 {
        if out.len() >= MAX_PATHS {
            break;
        }
        let c = compiled + path.cost;
        let i = path
            .instrs
            .iter()
            .fold(interp, |acc, &k| acc + costs.cost(&src.instructions[k]));
        let PathEnd::Dispatch(k) = path.end else {
            out.push(AppPath {
                blocks: chain.clone(),
                compiled: c,
                interp: i,
                end: path.end,
            });
            continue;
        };
        let Instruction::GotoTable { table_id, .. } = &src.instructions[k] else {
            continue;
        };
        let mut next: BTreeSet<u32> = program
            .entries
            .iter()
            .filter(|(t, _)| t == table_id)
            .map(|(_, e)| e.block_id)
            .collect();
        match program.schema(*table_id).map(|s| s.miss) {
            Some(MissPolicy::GotoBlock(b)) => {
                next.insert(b);
            }
            _ => out.push(AppPath {
                blocks: chain.clone(),
                compiled: c,
                interp: i,
                end: path.end,
            }),
        }
        for b in next {
            if !chain.contains(&b) {
                walk(program, store, costs, b, chain, c, i, out);
            }
        }
    }
    chain.pop();
}
