//! Seeded generators of valid programs and packets shared by the
//! integration suites.
#![allow(dead_code)]

use pofvm::bits::BitString;
use pofvm::datapath::{Datapath, Verdict};
use pofvm::interp::Interpreter;
use pofvm::isa::{
    AluOp, Cmp, EntryMod, EntryOp, Instruction, InstructionBlock, Operand, Program, TableMod, Target,
};
use pofvm::micro::{run_micro, CompiledStore};
use pofvm::space::{FieldRef, PacketBuf, Space, SpaceSizes};
use pofvm::table::{FlowEntry, MatchType, MissPolicy, TableSchema, TableSnapshot};
use pofvm::validate::{packet_window, validate_block, validate_program, ValidationContext};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type Rng8 = ChaCha8Rng;

/// Packet bytes the generator addresses.
const PKT_BYTES: u16 = 48;
/// Metadata bytes the generator addresses (past the hit flag byte).
const META_BYTES: u16 = 40;
const PARAM_BYTES: u16 = 16;
/// Table created and dropped from the datapath; nothing looks it up.
const SCRATCH_TABLE: u16 = 9;

pub struct Shape {
    pub schemas: Vec<TableSchema>,
    /// Key field lengths per table, in order.
    pub keys: Vec<Vec<u16>>,
    pub blocks: Vec<u32>,
}

fn field_in(rng: &mut Rng8, space: Space, bytes: u16, max_len: u16, arith: bool) -> FieldRef {
    let len = rng.gen_range(1..=max_len);
    loop {
        let lo = if space == Space::Metadata { 8 } else { 0 };
        let off = rng.gen_range(lo..(bytes * 8 - len + 1).max(lo + 1));
        let f = FieldRef::new(space, off, len);
        if !arith || f.byte_span() <= 8 {
            return f;
        }
    }
}

/// A readable field: packet, metadata or parameter.
pub fn read_field(rng: &mut Rng8, max_len: u16, arith: bool) -> FieldRef {
    match rng.gen_range(0..10) {
        0..=5 => field_in(rng, Space::Packet, PKT_BYTES, max_len, arith),
        6..=7 => field_in(rng, Space::Metadata, META_BYTES, max_len, arith),
        _ => field_in(rng, Space::Parameter, PARAM_BYTES, max_len, arith),
    }
}

/// A writable field: packet or metadata, clear of the hit flag.
pub fn write_field(rng: &mut Rng8, max_len: u16, arith: bool) -> FieldRef {
    if rng.gen_bool(0.6) {
        field_in(rng, Space::Packet, PKT_BYTES, max_len, arith)
    } else {
        field_in(rng, Space::Metadata, META_BYTES, max_len, arith)
    }
}

fn imm(rng: &mut Rng8, width: u8) -> Operand {
    let v: u64 = rng.gen();
    let v = if width == 64 { v } else { v & ((1u64 << width) - 1) };
    let v = match rng.gen_range(0..4) {
        0 => v & 0xff,
        1 => 0,
        _ => v,
    };
    Operand::imm_w(v, width)
}

fn operand(rng: &mut Rng8, max_width: u16, arith: bool) -> Operand {
    if rng.gen_bool(0.4) {
        let w = rng.gen_range(1..=max_width.min(64)) as u8;
        imm(rng, w)
    } else {
        read_field(rng, max_width.min(64), arith).into()
    }
}

fn key_fields(rng: &mut Rng8, lens: &[u16]) -> Vec<FieldRef> {
    lens.iter()
        .map(|&l| {
            let (space, bytes, lo) = match rng.gen_range(0..10) {
                0..=5 => (Space::Packet, PKT_BYTES, 0),
                6..=7 => (Space::Metadata, META_BYTES, 8),
                _ => (Space::Parameter, PARAM_BYTES, 0),
            };
            FieldRef::new(space, rng.gen_range(lo..=bytes * 8 - l), l)
        })
        .collect()
}

pub fn random_shape(rng: &mut Rng8) -> Shape {
    let ntables = rng.gen_range(1..=3);
    let nblocks = rng.gen_range(1..=5);
    let blocks: Vec<u32> = (0..nblocks).map(|i| i * 3 + rng.gen_range(0..3)).collect();
    let mut schemas = Vec::new();
    let mut keys = Vec::new();
    for t in 0..ntables {
        let nf = rng.gen_range(1..=3);
        let lens: Vec<u16> = (0..nf).map(|_| *[4u16, 8, 8, 12, 16, 32, 48].choose(rng).unwrap()).collect();
        let width: u16 = lens.iter().sum();
        let mt = *[MatchType::Exact, MatchType::Lpm, MatchType::Masked].choose(rng).unwrap();
        let miss = match rng.gen_range(0..3) {
            0 => MissPolicy::Drop,
            1 => MissPolicy::PacketIn,
            _ => MissPolicy::GotoBlock(*blocks.choose(rng).unwrap()),
        };
        schemas.push(TableSchema::new(t + 1, mt, width).with_miss(miss));
        keys.push(lens);
    }
    Shape { schemas, keys, blocks }
}

fn entry_mod(rng: &mut Rng8, shape: &Shape) -> Instruction {
    let t = rng.gen_range(0..shape.schemas.len());
    let s = &shape.schemas[t];
    let key: Vec<Operand> = shape.keys[t]
        .iter()
        .map(|&l| {
            if rng.gen_bool(0.3) {
                imm(rng, l as u8)
            } else {
                key_fields(rng, &[l])[0].into()
            }
        })
        .collect();
    let width = s.key_width as usize;
    let mask = match s.match_type {
        MatchType::Exact => BitString::ones(width),
        MatchType::Lpm => BitString::prefix_mask(width, rng.gen_range(0..=width)),
        MatchType::Masked => random_bits(rng, width),
    };
    let op = *[EntryOp::Insert, EntryOp::Insert, EntryOp::Modify, EntryOp::Delete].choose(rng).unwrap();
    let params = (0..rng.gen_range(0..3)).map(|_| operand(rng, 16, false)).collect();
    Instruction::EntryMod(EntryMod {
        op,
        table_id: s.table_id,
        key,
        mask,
        priority: if s.match_type == MatchType::Masked { rng.gen_range(0..4) } else { 0 },
        block_id: *shape.blocks.choose(rng).unwrap(),
        params,
    })
}

fn plain_instruction(rng: &mut Rng8, shape: &Shape) -> Instruction {
    match rng.gen_range(0..100) {
        0..=24 => {
            let dst = write_field(rng, 64, false);
            let src = if rng.gen_bool(0.4) {
                imm(rng, dst.length as u8)
            } else {
                read_field(rng, 64, false).into()
            };
            Instruction::SetField { dst, src }
        }
        25..=44 => Instruction::Calc {
            op: *AluOp::ALL.choose(rng).unwrap(),
            dst: write_field(rng, 64, true),
            a: operand(rng, 64, true),
            b: operand(rng, 64, true),
        },
        45..=49 => {
            let len = 8 * rng.gen_range(1..=4);
            Instruction::AddField {
                offset: 8 * rng.gen_range(0..PKT_BYTES / 2),
                length: len,
                src: operand(rng, len, false),
            }
        }
        50..=53 => Instruction::DelField {
            offset: 8 * rng.gen_range(0..PKT_BYTES / 2),
            length: 8 * rng.gen_range(1..=4),
        },
        54..=58 => {
            let dst = field_in(rng, Space::Metadata, META_BYTES, 64, false);
            Instruction::ReadPool {
                dst,
                pool_offset: rng.gen_range(0..512),
                length: dst.length,
            }
        }
        59..=62 => {
            let length = rng.gen_range(1..=64);
            Instruction::WritePool {
                pool_offset: rng.gen_range(0..512),
                length,
                src: if rng.gen_bool(0.5) { imm(rng, length as u8) } else { read_field(rng, 64, false).into() },
            }
        }
        63..=67 => Instruction::IncPool {
            pool_offset: rng.gen_range(0..512),
            length: rng.gen_range(1..=64),
            delta: operand(rng, 64, false),
        },
        68..=72 => {
            let space = if rng.gen_bool(0.7) { Space::Packet } else { Space::Metadata };
            let bytes = if space == Space::Packet { PKT_BYTES } else { META_BYTES };
            let start = rng.gen_range(if space == Space::Metadata { 1 } else { 0 }..bytes - 2);
            let len = rng.gen_range(2..=(bytes - start));
            let region = FieldRef::new(space, start * 8, len * 8);
            let dst = if rng.gen_bool(0.7) {
                let words = len / 2;
                FieldRef::new(space, region.offset + 16 * rng.gen_range(0..words), 16)
            } else {
                field_in(rng, space, bytes, 16, false)
            };
            let dst = FieldRef::new(space, dst.offset.max(8 * (space == Space::Metadata) as u16), 16);
            Instruction::Checksum { dst, region }
        }
        73..=79 => {
            let t = rng.gen_range(0..shape.schemas.len());
            Instruction::SearchTable {
                table_id: shape.schemas[t].table_id,
                key: key_fields(rng, &shape.keys[t]),
                dst: field_in(rng, Space::Metadata, META_BYTES, 128, false),
            }
        }
        80..=84 => entry_mod(rng, shape),
        85..=86 => {
            if rng.gen_bool(0.5) {
                Instruction::TableMod(TableMod::Create(TableSchema::new(SCRATCH_TABLE, MatchType::Exact, 16)))
            } else {
                Instruction::TableMod(TableMod::Delete(SCRATCH_TABLE))
            }
        }
        _ => Instruction::Branch {
            a: operand(rng, 64, true),
            cmp: *Cmp::ALL.choose(rng).unwrap(),
            b: operand(rng, 64, true),
            target: Target::Rel(1),
        },
    }
}

fn terminal(rng: &mut Rng8, shape: &Shape) -> Instruction {
    match rng.gen_range(0..10) {
        0..=4 => {
            let t = rng.gen_range(0..shape.schemas.len());
            Instruction::GotoTable {
                table_id: shape.schemas[t].table_id,
                key: key_fields(rng, &shape.keys[t]),
            }
        }
        5..=7 => Instruction::Output {
            port: operand(rng, 16, true),
        },
        8 => Instruction::Drop,
        _ => Instruction::PacketIn {
            reason: rng.gen_range(0..8),
        },
    }
}

fn context(shape: &Shape) -> ValidationContext {
    let mut ctx = ValidationContext::new(SpaceSizes::default()).with_schemas(&shape.schemas);
    ctx.schemas.insert(SCRATCH_TABLE, TableSchema::new(SCRATCH_TABLE, MatchType::Exact, 16));
    ctx.blocks = Some(shape.blocks.iter().copied().collect());
    ctx
}

/// A valid instruction, retried until it passes validation on its own.
fn valid_instruction(rng: &mut Rng8, shape: &Shape, ctx: &ValidationContext, last: bool) -> Instruction {
    loop {
        let ins = if last { terminal(rng, shape) } else { plain_instruction(rng, shape) };
        let probe = if last { vec![ins.clone()] } else { vec![ins.clone(), Instruction::Drop] };
        if validate_block(&InstructionBlock::new(0, probe), ctx).is_empty() {
            return ins;
        }
    }
}

pub fn random_block(rng: &mut Rng8, shape: &Shape, id: u32, max_len: usize) -> InstructionBlock {
    let ctx = context(shape);
    let n = rng.gen_range(0..=max_len);
    let mut ins: Vec<Instruction> = (0..n).map(|_| valid_instruction(rng, shape, &ctx, false)).collect();
    // extra terminals make branch targets that end the block early
    let ends = rng.gen_range(1..=2);
    for _ in 0..ends {
        ins.push(valid_instruction(rng, shape, &ctx, true));
    }
    let len = ins.len();
    for i in 0..len {
        if let Instruction::Branch { target, .. } = &mut ins[i] {
            let t = rng.gen_range(i + 1..len);
            *target = if rng.gen_bool(0.5) { Target::Abs(t as u16) } else { Target::Rel((t - i) as i16) };
        }
    }
    // a jump now and then
    if len >= 3 && rng.gen_bool(0.2) {
        let i = rng.gen_range(0..len - 2);
        if !ins[i].is_terminal() {
            let t = rng.gen_range(i + 1..len);
            ins[i] = Instruction::Jump {
                target: Target::Abs(t as u16),
            };
        }
    }
    InstructionBlock::new(id, ins)
}

pub fn random_bits(rng: &mut Rng8, width: usize) -> BitString {
    let mut b = BitString::zeros(0);
    let mut left = width;
    while left > 0 {
        let w = left.min(64);
        b.push(rng.gen::<u64>(), w);
        left -= w;
    }
    b
}

fn random_entry(rng: &mut Rng8, s: &TableSchema, blocks: &[u32]) -> FlowEntry {
    let width = s.key_width as usize;
    let value = random_bits(rng, width);
    let params: Vec<u8> = (0..rng.gen_range(0..=PARAM_BYTES as usize)).map(|_| rng.gen()).collect();
    let block = *blocks.choose(rng).unwrap();
    match s.match_type {
        MatchType::Exact => FlowEntry::exact(value, block, params),
        MatchType::Lpm => {
            let len = rng.gen_range(0..=width);
            FlowEntry::prefix(value.and(&BitString::prefix_mask(width, len)), len, block, params)
        }
        MatchType::Masked => {
            let mask = random_bits(rng, width);
            FlowEntry::masked(value.and(&mask), mask, rng.gen_range(0..4), block, params)
        }
    }
}

/// A program that passes `validate_program`.
pub fn random_program(rng: &mut Rng8) -> Program {
    loop {
        let shape = random_shape(rng);
        let blocks: Vec<InstructionBlock> = shape.blocks.iter().map(|&id| random_block(rng, &shape, id, 8)).collect();
        let mut p = Program {
            schemas: shape.schemas.clone(),
            blocks,
            entries: Vec::new(),
            start_block: shape.blocks[0],
        };
        let mut store = pofvm::table::TableStore::new();
        for s in &p.schemas {
            store.create(s.clone()).unwrap();
        }
        for s in &p.schemas {
            for _ in 0..rng.gen_range(0..6) {
                let e = random_entry(rng, s, &shape.blocks);
                if store.insert(s.table_id, e.clone(), |_| true).is_ok() {
                    p.entries.push((s.table_id, e));
                }
            }
        }
        if validate_program(&p, &SpaceSizes::default()).is_empty() {
            return p;
        }
    }
}

/// A packet long enough for the program's accesses, or now and then a
/// shorter one that may fault.
pub fn random_packet(rng: &mut Rng8, program: &Program) -> Vec<u8> {
    let need = packet_window(program).max(PKT_BYTES as usize);
    let len = if rng.gen_bool(0.05) { rng.gen_range(0..need) } else { rng.gen_range(need..need + 16) };
    (0..len).map(|_| rng.gen()).collect()
}

/// Loaded datapath and compiled store for `p`.
pub fn install(p: &Program) -> (Datapath, CompiledStore) {
    let mut dp = Datapath::new(SpaceSizes::default());
    for s in &p.schemas {
        dp.tables.create(s.clone()).unwrap();
    }
    for b in &p.blocks {
        dp.blocks.insert(b.block_id, b.clone());
    }
    for (t, e) in &p.entries {
        dp.tables.insert(*t, e.clone(), |_| true).unwrap();
    }
    dp.start_block = p.start_block;
    let mut store = CompiledStore::default();
    store.rebuild(&p.blocks).unwrap();
    (dp, store)
}

/// Observable state after a run, minus costs.
#[derive(Debug, PartialEq, Eq)]
pub struct Observed {
    pub verdicts: Vec<(pofvm::datapath::Disposition, Vec<u8>, Option<pofvm::datapath::Fault>)>,
    pub pool: Vec<u8>,
    pub tables: Vec<TableSnapshot>,
    pub rejected: u64,
}

/// Runs `packets` in order through one engine from a fresh install.
pub fn observe(p: &Program, packets: &[(u32, Vec<u8>)], compiled: bool) -> (Observed, Vec<Verdict>) {
    let (mut dp, store) = install(p);
    let interp = Interpreter::default();
    let mut raw = Vec::new();
    for (port, bytes) in packets {
        let pkt = PacketBuf::new(*port, bytes.clone());
        let v = if compiled {
            run_micro(&store, &mut dp, pkt, None)
        } else {
            interp.run_packet(&mut dp, pkt, None)
        };
        raw.push(v);
    }
    let obs = Observed {
        verdicts: raw.iter().map(|v| (v.disposition, v.packet.clone(), v.fault)).collect(),
        pool: dp.pool.bytes().to_vec(),
        tables: dp.tables.snapshot(),
        rejected: dp.rejected_mods,
    };
    (obs, raw)
}
