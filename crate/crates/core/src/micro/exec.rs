use super::{CompiledStore, MicroOp, ResultField, Src, NO_BLOCK};
use crate::bits::{self, low_mask, BitString};
use crate::datapath::{Datapath, Disposition, Fault, Frame, TraceRecord, Verdict, MISS_REASON};
use crate::perf::CostReport;
use crate::space::{PacketBuf, Space};
use crate::table::MissPolicy;

/// What the last LOOKUP returned.
struct LookupResult {
    hit: Option<(u32, Vec<u8>)>,
    miss: MissPolicy,
}

struct Machine {
    regs: Vec<u64>,
    key: Vec<u8>,
    key_width: usize,
    sealed: Option<BitString>,
    result: Option<LookupResult>,
}

enum Flow {
    Next,
    Goto(usize),
    Enter(u32),
    Done(Disposition),
}

fn shr(v: u64, n: u8) -> u64 {
    v.checked_shr(n as u32).unwrap_or(0)
}

fn mem_fault(space: Space) -> impl Fn(bits::BitError) -> Fault {
    move |e| match e {
        bits::BitError::Overflow(_) => Fault::PacketOverflow,
        bits::BitError::Unaligned { .. } => Fault::Unaligned,
        _ => Fault::OutOfRange(space),
    }
}

impl Machine {
    fn src(&self, s: Src) -> u64 {
        match s {
            Src::Reg(r) => self.regs[r as usize],
            Src::Imm(v) => v,
        }
    }

    fn result(&self) -> &LookupResult {
        self.result.as_ref().expect("result read after a lookup")
    }

    fn exec(&mut self, op: &MicroOp, dp: &mut Datapath, f: &mut Frame) -> Result<Flow, Fault> {
        match op {
            MicroOp::Ld { dst, space, byte, width } => {
                let buf = f.buf(&dp.pool, *space);
                self.regs[*dst as usize] =
                    bits::read_bits(buf, *byte as usize * 8, *width as usize * 8).map_err(mem_fault(*space))?;
            }
            MicroOp::St {
                space,
                byte,
                width,
                src,
                shr: r,
                shl,
                mask,
            } => {
                let buf = f.buf_mut(&mut dp.pool, *space);
                let (off, len) = (*byte as usize * 8, *width as usize * 8);
                let old = bits::read_bits(buf, off, len).map_err(mem_fault(*space))?;
                let field = mask << shl;
                let new = (old & !field) | ((shr(self.regs[*src as usize], *r) & mask) << shl);
                bits::write_bits(buf, off, len, new & low_mask(len)).map_err(mem_fault(*space))?;
            }
            MicroOp::Mov { dst, src } => self.regs[*dst as usize] = self.src(*src),
            MicroOp::Alu { op, dst, a, b } => {
                self.regs[*dst as usize] = op.apply(self.regs[*a as usize], self.src(*b));
            }
            MicroOp::ShiftMask { reg, shift, mask } => {
                let r = &mut self.regs[*reg as usize];
                *r = shr(*r, *shift) & mask;
            }
            MicroOp::KeyClr { width } => {
                self.key_width = *width as usize;
                self.key.clear();
                self.key.resize(self.key_width.div_ceil(8), 0);
                self.sealed = None;
            }
            MicroOp::KeyPut { pos, src } => {
                let buf = f.buf(&dp.pool, src.space);
                bits::copy_bits(buf, src.offset as usize, &mut self.key, *pos as usize, src.length as usize)
                    .map_err(mem_fault(src.space))?;
            }
            MicroOp::KeyEnd { len } => {
                let width = self.regs[*len as usize] as usize;
                if width == 0 {
                    return Err(Fault::EmptyKey);
                }
                let mut key = BitString::zeros(0);
                key.push_bits(&self.key, 0, width).map_err(mem_fault(Space::Metadata))?;
                self.sealed = Some(key);
            }
            MicroOp::CtxSave | MicroOp::CtxRestore => {}
            MicroOp::Lookup { table } => {
                let id = self.regs[*table as usize] as u16;
                let key = self.sealed.take().ok_or(Fault::EmptyKey)?;
                let t = dp.tables.get_mut(id).ok_or(Fault::UnknownTable(id))?;
                let miss = t.schema().miss;
                let hit = t.lookup(&key).map_err(|_| Fault::KeyWidth(id))?;
                self.result = Some(LookupResult {
                    hit: hit.map(|e| (e.block_id, e.params.clone())),
                    miss,
                });
            }
            MicroOp::ResRd { dst, field } => {
                let r = self.result();
                let v = match field {
                    ResultField::Hit => r.hit.is_some() as u64,
                    ResultField::Block => match (&r.hit, r.miss) {
                        (Some((b, _)), _) => *b as u64,
                        (None, MissPolicy::GotoBlock(b)) => b as u64,
                        (None, _) => NO_BLOCK,
                    },
                    ResultField::ParamLen => r.hit.as_ref().map_or(0, |(_, p)| p.len() as u64),
                    ResultField::ParamBase => 0,
                };
                self.regs[*dst as usize] = v;
            }
            MicroOp::PBind { base, len } => {
                let r = self.result();
                let empty = Vec::new();
                let params = r.hit.as_ref().map_or(&empty, |(_, p)| p);
                let start = (self.regs[*base as usize] as usize).min(params.len());
                let end = (start + self.regs[*len as usize] as usize).min(params.len());
                if r.hit.is_some() || matches!(r.miss, MissPolicy::GotoBlock(_)) {
                    f.bind_params(&params[start..end]);
                }
            }
            MicroOp::Dispatch { block, .. } => {
                let b = self.regs[*block as usize];
                if b != NO_BLOCK {
                    return Ok(Flow::Enter(b as u32));
                }
                return Ok(Flow::Done(match self.result().miss {
                    MissPolicy::PacketIn => Disposition::PacketIn(MISS_REASON),
                    _ => Disposition::Drop,
                }));
            }
            MicroOp::PCopy { dst, hit } => {
                if self.regs[*hit as usize] != 0 {
                    let params = self.result().hit.as_ref().map(|(_, p)| p.clone()).unwrap_or_default();
                    f.copy_params(dst, &params)?;
                }
            }
            MicroOp::FlagSt { hit } => f.meta.set_hit_flag(self.regs[*hit as usize] != 0),
            MicroOp::PoolLd { pool_bit, len, dst } => {
                let v = dp
                    .pool
                    .read(*pool_bit as usize, *len as usize)
                    .map_err(mem_fault(Space::Pool))?;
                f.write(&mut dp.pool, dst, v)?;
            }
            MicroOp::PoolSt { pool_bit, len, src } => {
                let v = f.operand(&dp.pool, src)? & low_mask(*len as usize);
                dp.pool
                    .write(*pool_bit as usize, *len as usize, v)
                    .map_err(mem_fault(Space::Pool))?;
            }
            MicroOp::PoolInc { pool_bit, len, delta } => {
                let d = f.operand(&dp.pool, delta)?;
                dp.pool
                    .increment(*pool_bit as usize, *len as usize, d)
                    .map_err(mem_fault(Space::Pool))?;
            }
            MicroOp::Cksum { dst, region, skip } => {
                self.regs[*dst as usize] = f.checksum(&dp.pool, region, skip)? as u64;
            }
            MicroOp::PktIns { bit, len, src } => {
                f.insert_packet_bits(*bit as usize, *len as usize, self.regs[*src as usize])?;
            }
            MicroOp::PktDel { bit, len } => f.delete_packet_bits(*bit as usize, *len as usize)?,
            MicroOp::Emit { port } => return Ok(Flow::Done(Disposition::Output(self.regs[*port as usize] as u32))),
            MicroOp::DropM => return Ok(Flow::Done(Disposition::Drop)),
            MicroOp::PktIn { reason } => return Ok(Flow::Done(Disposition::PacketIn(*reason))),
            MicroOp::Br { cmp, a, b, target } => {
                if cmp.holds(self.src(*a), self.src(*b)) {
                    return Ok(Flow::Goto(*target as usize));
                }
            }
            MicroOp::Jmp { target } => return Ok(Flow::Goto(*target as usize)),
            MicroOp::EntryOp(m) => dp.entry_mod(f, m)?,
            MicroOp::TblOp(m) => dp.table_mod(m),
        }
        Ok(Flow::Next)
    }
}

fn run(
    store: &CompiledStore,
    dp: &mut Datapath,
    frame: &mut Frame,
    cost: &mut CostReport,
    mut trace: Option<&mut Vec<TraceRecord>>,
) -> Result<Disposition, Fault> {
    let mut block_id = dp.start_block;
    let mut hops = 0u32;
    let mut m = Machine {
        regs: Vec::new(),
        key: Vec::new(),
        key_width: 0,
        sealed: None,
        result: None,
    };
    loop {
        let prog = store.get(block_id).ok_or(Fault::UnknownBlock(block_id))?.clone();
        m.regs.resize(prog.registers as usize, 0);
        let mut pc = 0usize;
        let flow = loop {
            let op = prog.ops.get(pc).ok_or(Fault::UnknownBlock(block_id))?;
            *cost += op.cost();
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRecord {
                    block_id,
                    index: pc,
                    op: op.mnemonic().to_string(),
                    cost: op.cost(),
                });
            }
            match m.exec(op, dp, frame)? {
                Flow::Next => pc += 1,
                Flow::Goto(t) => pc = t,
                other => break other,
            }
        };
        match flow {
            Flow::Enter(b) => {
                hops += 1;
                if hops > dp.hop_limit {
                    return Err(Fault::HopLimit);
                }
                block_id = b;
            }
            Flow::Done(d) => return Ok(d),
            Flow::Next | Flow::Goto(_) => unreachable!(),
        }
    }
}

/// Runs one packet through compiled programs, starting at the datapath's
/// start block.
pub fn run_micro(
    store: &CompiledStore,
    dp: &mut Datapath,
    packet: PacketBuf,
    trace: Option<&mut Vec<TraceRecord>>,
) -> Verdict {
    let mut frame = Frame::admit(packet, &dp.sizes);
    let mut cost = CostReport::default();
    let (disposition, fault) = match run(store, dp, &mut frame, &mut cost, trace) {
        Ok(d) => (d, None),
        Err(e) => (Disposition::Drop, Some(e)),
    };
    Verdict {
        disposition,
        packet: frame.packet,
        cost,
        fault,
    }
}
