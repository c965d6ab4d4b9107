//! Interpreter mode: executes generic flow instructions directly, locating
//! every field by offset and length at run time and building table keys
//! one field at a time.

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::datapath::{Datapath, Disposition, Fault, Frame, TraceRecord, Transfer, Verdict};
use crate::isa::{InstrKind, Instruction};
use crate::perf::CostReport;
use crate::space::{FieldRef, FlowMetadataPool, PacketBuf};

/// Per-kind interpreter cost calibration.
///
/// Table instructions cost `table_base + n·table_per_field` for an `n`-field
/// key; checksum costs `checksum_base + checksum_per_word·⌈bytes/2⌉`
/// instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterpCosts {
    pub table_base: CostReport,
    pub table_per_field: CostReport,
    pub set_field: CostReport,
    pub calc: CostReport,
    pub structural: CostReport,
    pub pool: CostReport,
    pub checksum_base: CostReport,
    pub checksum_per_word: u64,
    pub branch: CostReport,
    pub terminal: CostReport,
    pub datapath_mod: CostReport,
}

impl Default for InterpCosts {
    fn default() -> Self {
        InterpCosts {
            table_base: CostReport::new(37, 7),
            table_per_field: CostReport::new(33, 3),
            set_field: CostReport::new(18, 0),
            calc: CostReport::new(14, 0),
            structural: CostReport::new(24, 0),
            pool: CostReport::new(16, 1),
            checksum_base: CostReport::new(22, 1),
            checksum_per_word: 2,
            branch: CostReport::new(6, 0),
            terminal: CostReport::new(9, 1),
            datapath_mod: CostReport::new(40, 2),
        }
    }
}

impl InterpCosts {
    /// Cost charged on dispatch, before any per-field key work.
    fn dispatch(&self, ins: &Instruction) -> CostReport {
        match ins.kind() {
            InstrKind::GotoTable | InstrKind::SearchTable => self.table_base,
            InstrKind::SetField => self.set_field,
            InstrKind::Calc => self.calc,
            InstrKind::AddField | InstrKind::DelField => self.structural,
            InstrKind::ReadPool | InstrKind::WritePool | InstrKind::IncPool => self.pool,
            InstrKind::Checksum => {
                let Instruction::Checksum { region, .. } = ins else { unreachable!() };
                let words = (region.length as u64).div_ceil(8).div_ceil(2);
                self.checksum_base + CostReport::new(self.checksum_per_word * words, 0)
            }
            InstrKind::Branch | InstrKind::Jump => self.branch,
            InstrKind::Output | InstrKind::Drop | InstrKind::PacketIn => self.terminal,
            InstrKind::EntryMod | InstrKind::TableMod => self.datapath_mod,
        }
    }

    /// Full cost of one execution of `ins`.
    pub fn cost(&self, ins: &Instruction) -> CostReport {
        let n = match ins {
            Instruction::GotoTable { key, .. } | Instruction::SearchTable { key, .. } => key.len() as u64,
            _ => 0,
        };
        let per = self.table_per_field;
        self.dispatch(ins) + CostReport::new(per.instructions * n, per.switches * n)
    }
}

/// `interp_cost` under the default calibration.
pub fn interp_cost(ins: &Instruction) -> CostReport {
    InterpCosts::default().cost(ins)
}

/// Concatenates key fields in order, charging the per-field cost for each.
pub fn build_key(
    fields: &[FieldRef],
    frame: &Frame,
    pool: &FlowMetadataPool,
    costs: &InterpCosts,
    acc: &mut CostReport,
) -> Result<BitString, Fault> {
    if fields.is_empty() {
        return Err(Fault::EmptyKey);
    }
    let mut key = BitString::zeros(0);
    for f in fields {
        *acc += costs.table_per_field;
        key.append(&frame.read_wide(pool, f)?);
    }
    Ok(key)
}

/// Mutable state of one packet's interpretation.
#[derive(Debug, Clone)]
pub struct ExecState {
    pub frame: Frame,
    pub block_id: u32,
    pub pc: usize,
    pub hops: u32,
    pub cost: CostReport,
}

enum Step {
    Next(usize),
    Enter(u32),
    Done(Disposition),
}

#[derive(Debug, Clone, Default)]
pub struct Interpreter {
    pub costs: InterpCosts,
}

impl Interpreter {
    pub fn new(costs: InterpCosts) -> Self {
        Interpreter { costs }
    }

    fn step(&self, dp: &mut Datapath, st: &mut ExecState, ins: &Instruction) -> Result<Step, Fault> {
        st.cost += self.costs.dispatch(ins);
        let next = Step::Next(st.pc + 1);
        let f = &mut st.frame;
        match ins {
            Instruction::SetField { dst, src } => {
                let v = f.operand(&dp.pool, src)?;
                f.write(&mut dp.pool, dst, v)?;
            }
            Instruction::AddField { offset, length, src } => {
                let v = f.operand(&dp.pool, src)?;
                f.insert_packet_bits(*offset as usize, *length as usize, v)?;
            }
            Instruction::DelField { offset, length } => {
                f.delete_packet_bits(*offset as usize, *length as usize)?;
            }
            Instruction::Calc { op, dst, a, b } => {
                let a = f.operand(&dp.pool, a)?;
                let b = f.operand(&dp.pool, b)?;
                f.write(&mut dp.pool, dst, op.apply(a, b))?;
            }
            Instruction::ReadPool {
                dst,
                pool_offset,
                length,
            } => {
                let v = dp
                    .pool
                    .read(*pool_offset as usize, *length as usize)
                    .map_err(|_| Fault::OutOfRange(crate::space::Space::Pool))?;
                f.write(&mut dp.pool, dst, v)?;
            }
            Instruction::WritePool {
                pool_offset,
                length,
                src,
            } => {
                let v = f.operand(&dp.pool, src)? & crate::bits::low_mask(*length as usize);
                dp.pool
                    .write(*pool_offset as usize, *length as usize, v)
                    .map_err(|_| Fault::OutOfRange(crate::space::Space::Pool))?;
            }
            Instruction::IncPool {
                pool_offset,
                length,
                delta,
            } => {
                let d = f.operand(&dp.pool, delta)?;
                dp.pool
                    .increment(*pool_offset as usize, *length as usize, d)
                    .map_err(|_| Fault::OutOfRange(crate::space::Space::Pool))?;
            }
            Instruction::Checksum { dst, region } => {
                let c = f.checksum(&dp.pool, region, dst)?;
                f.write(&mut dp.pool, dst, c as u64)?;
            }
            Instruction::GotoTable { table_id, key } => {
                let key = build_key(key, f, &dp.pool, &self.costs, &mut st.cost)?;
                return Ok(match dp.lookup_transfer(*table_id, &key)? {
                    Transfer::Block { block_id, params } => {
                        f.bind_params(&params);
                        Step::Enter(block_id)
                    }
                    Transfer::Finish(d) => Step::Done(d),
                });
            }
            Instruction::SearchTable { table_id, key, dst } => {
                let key = build_key(key, f, &dp.pool, &self.costs, &mut st.cost)?;
                let hit = dp.search(*table_id, &key)?;
                f.search_result(dst, hit.as_deref())?;
            }
            Instruction::Output { port } => {
                let p = f.operand(&dp.pool, port)?;
                return Ok(Step::Done(Disposition::Output(p as u32)));
            }
            Instruction::Drop => return Ok(Step::Done(Disposition::Drop)),
            Instruction::PacketIn { reason } => return Ok(Step::Done(Disposition::PacketIn(*reason))),
            Instruction::Branch { a, cmp, b, target } => {
                let a = f.operand(&dp.pool, a)?;
                let b = f.operand(&dp.pool, b)?;
                if cmp.holds(a, b) {
                    return Ok(Step::Next(target.resolve(st.pc).unwrap_or(usize::MAX)));
                }
            }
            Instruction::Jump { target } => return Ok(Step::Next(target.resolve(st.pc).unwrap_or(usize::MAX))),
            Instruction::EntryMod(m) => dp.entry_mod(f, m)?,
            Instruction::TableMod(m) => dp.table_mod(m),
        }
        Ok(next)
    }

    fn run(&self, dp: &mut Datapath, st: &mut ExecState, mut trace: Option<&mut Vec<TraceRecord>>) -> Result<Disposition, Fault> {
        loop {
            let block = dp.blocks.get(&st.block_id).ok_or(Fault::UnknownBlock(st.block_id))?.clone();
            let outcome = loop {
                let ins = block.instructions.get(st.pc).ok_or(Fault::UnknownBlock(st.block_id))?;
                let before = st.cost;
                let r = self.step(dp, st, ins);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(TraceRecord {
                        block_id: st.block_id,
                        index: st.pc,
                        op: ins.kind().mnemonic().to_string(),
                        cost: CostReport::new(
                            st.cost.instructions - before.instructions,
                            st.cost.switches - before.switches,
                        ),
                    });
                }
                match r? {
                    Step::Next(pc) => st.pc = pc,
                    other => break other,
                }
            };
            match outcome {
                Step::Enter(b) => {
                    st.hops += 1;
                    if st.hops > dp.hop_limit {
                        return Err(Fault::HopLimit);
                    }
                    st.block_id = b;
                    st.pc = 0;
                }
                Step::Done(d) => return Ok(d),
                Step::Next(_) => unreachable!(),
            }
        }
    }

    /// Runs one packet from the datapath's start block to a verdict.
    pub fn run_packet(&self, dp: &mut Datapath, packet: PacketBuf, trace: Option<&mut Vec<TraceRecord>>) -> Verdict {
        let mut st = ExecState {
            frame: Frame::admit(packet, &dp.sizes),
            block_id: dp.start_block,
            pc: 0,
            hops: 0,
            cost: CostReport::default(),
        };
        self.run_block(dp, &mut st, trace)
    }

    /// Runs from the state's current block and pc to a verdict.
    pub fn run_block(&self, dp: &mut Datapath, st: &mut ExecState, trace: Option<&mut Vec<TraceRecord>>) -> Verdict {
        let r = self.run(dp, st, trace);
        let (disposition, fault) = match r {
            Ok(d) => (d, None),
            Err(e) => (Disposition::Drop, Some(e)),
        };
        Verdict {
            disposition,
            packet: st.frame.packet.clone(),
            cost: st.cost,
            fault,
        }
    }
}
