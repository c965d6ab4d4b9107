use super::*;
use crate::datapath::{Datapath, Disposition};
use crate::interp::{interp_cost, Interpreter};
use crate::isa::{Cmp, Instruction, Target};
use crate::space::{PacketBuf, SpaceSizes};
use crate::table::{MatchType, TableSchema};

fn lower(ins: Vec<Instruction>) -> MicroProgram {
    lower_block(&InstructionBlock::new(1, ins), &LowerConfig::default()).unwrap()
}

fn goto(n: usize) -> Instruction {
    Instruction::GotoTable {
        table_id: 2,
        key: (0..n).map(|i| FieldRef::pkt(8 * i as u16, 8)).collect(),
    }
}

fn mnemonics(p: &MicroProgram) -> Vec<&'static str> {
    p.ops.iter().map(|o| o.mnemonic()).collect()
}

#[test]
fn goto_costs_match_table() {
    for (n, want) in [(2, 15), (8, 21)] {
        let p = lower(vec![goto(n)]);
        assert_eq!(p.total_cost(), CostReport::new(want, 1), "n = {n}");
    }
    assert_eq!(static_cost(&lower(vec![goto(3)])).worst, CostReport::new(16, 1));
}

#[test]
fn goto_affine_in_key_fields() {
    for n in 1..=16 {
        let g = lower(vec![goto(n)]).total_cost();
        let s = lower(vec![
            Instruction::SearchTable {
                table_id: 2,
                key: (0..n).map(|i| FieldRef::pkt(8 * i as u16, 8)).collect(),
                dst: FieldRef::meta(8, 8),
            },
            Instruction::Drop,
        ])
        .total_cost();
        assert_eq!(g, CostReport::new(13 + n as u64, 1));
        assert_eq!(s, CostReport::new(13 + n as u64 + 1, 1));
    }
}

#[test]
fn fixed_lookup_sequence_is_frozen() {
    let p = lower(vec![goto(2)]);
    assert_eq!(
        mnemonics(&p),
        [
            "keyclr", "mov", "mov", "keyput", "keyput", "keyend", "ctxsave", "lookup", "ctxrest", "resrd", "resrd",
            "resrd", "resrd", "pbind", "dispatch"
        ]
    );
    let s = lower(vec![
        Instruction::SearchTable {
            table_id: 2,
            key: vec![FieldRef::pkt(0, 8)],
            dst: FieldRef::meta(8, 8),
        },
        Instruction::Drop,
    ]);
    assert_eq!(&mnemonics(&s)[12..], ["pcopy", "flagst", "dropm"]);
}

#[test]
fn set_field_lowering() {
    let p = lower(vec![
        Instruction::SetField {
            dst: FieldRef::pkt(16, 16),
            src: Operand::imm(0x0800),
        },
        Instruction::Drop,
    ]);
    assert_eq!(mnemonics(&p), ["mov", "st", "dropm"]);
    let p = lower(vec![
        Instruction::SetField {
            dst: FieldRef::pkt(0, 4),
            src: FieldRef::pkt(12, 4).into(),
        },
        Instruction::Drop,
    ]);
    assert_eq!(mnemonics(&p), ["ld", "shmask", "st", "dropm"]);
}

#[test]
fn static_cost_examples() {
    let two_sets = lower(vec![
        Instruction::SetField {
            dst: FieldRef::pkt(0, 8),
            src: Operand::imm(1),
        },
        Instruction::SetField {
            dst: FieldRef::pkt(8, 16),
            src: Operand::imm(2),
        },
        Instruction::Drop,
    ]);
    let c = static_cost(&two_sets);
    assert_eq!(c.worst, CostReport::new(5, 0));
    let sets_only = CostReport::new(c.worst.instructions - 1, 0);
    assert_eq!(sets_only, CostReport::new(4, 0));
    assert_eq!(static_cost(&lower(vec![Instruction::Drop])).worst, CostReport::new(1, 0));
}

#[test]
fn branch_paths() {
    let p = lower(vec![
        Instruction::Branch {
            a: FieldRef::pkt(0, 8).into(),
            cmp: Cmp::Eq,
            b: Operand::imm(1),
            target: Target::Rel(3),
        },
        Instruction::SetField {
            dst: FieldRef::pkt(8, 8),
            src: Operand::imm(1),
        },
        Instruction::Output { port: Operand::imm(1) },
        Instruction::Drop,
    ]);
    let c = static_cost(&p);
    let mut paths = c.paths.clone();
    paths.sort_by_key(|c| c.instructions);
    assert_eq!(paths, vec![CostReport::new(3, 0), CostReport::new(6, 0)]);
    assert_eq!(c.worst, CostReport::new(6, 0));
    assert!(!c.truncated);
    let (bp, _) = block_paths(&p);
    let long = bp.iter().find(|b| b.cost.instructions == 6).unwrap();
    assert_eq!(long.instrs, vec![0, 1, 2]);
    assert_eq!(long.end, PathEnd::Emit);
}

#[test]
fn recompilation_is_stable() {
    let block = InstructionBlock::new(
        4,
        vec![
            Instruction::Calc {
                op: AluOp::Sub,
                dst: FieldRef::pkt(64, 8),
                a: FieldRef::pkt(64, 8).into(),
                b: Operand::imm(1),
            },
            goto(3),
        ],
    );
    let a = lower_block(&block, &LowerConfig::default()).unwrap();
    let b = lower_block(&block, &LowerConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.dump(), b.dump());
}

#[test]
fn register_pressure_is_reported() {
    let block = InstructionBlock::new(
        1,
        vec![
            Instruction::Calc {
                op: AluOp::Add,
                dst: FieldRef::pkt(0, 8),
                a: FieldRef::pkt(0, 8).into(),
                b: FieldRef::pkt(8, 8).into(),
            },
            Instruction::Drop,
        ],
    );
    let err = lower_block(&block, &LowerConfig { registers: 9 }).unwrap_err();
    assert!(matches!(err, LowerError::RegisterPressure { needed: 2, available: 1, .. }), "{err}");
    assert!(lower_block(&block, &LowerConfig { registers: 10 }).is_ok());
}

#[test]
fn compiled_never_costs_more_than_interpreted() {
    let f8 = FieldRef::pkt(8, 8);
    let sub = FieldRef::pkt(3, 7);
    let cases = vec![
        Instruction::SetField { dst: f8, src: sub.into() },
        Instruction::SetField {
            dst: FieldRef::pkt(4, 64),
            src: FieldRef::pkt(5, 64).into(),
        },
        Instruction::Calc {
            op: AluOp::Xor,
            dst: sub,
            a: sub.into(),
            b: FieldRef::pkt(17, 9).into(),
        },
        Instruction::AddField {
            offset: 8,
            length: 16,
            src: sub.into(),
        },
        Instruction::DelField { offset: 8, length: 8 },
        Instruction::ReadPool {
            dst: FieldRef::meta(8, 8),
            pool_offset: 0,
            length: 8,
        },
        Instruction::WritePool {
            pool_offset: 0,
            length: 8,
            src: f8.into(),
        },
        Instruction::IncPool {
            pool_offset: 0,
            length: 8,
            delta: Operand::imm(1),
        },
        Instruction::Checksum {
            dst: FieldRef::pkt(80, 16),
            region: FieldRef::pkt(0, 160),
        },
        goto(1),
        goto(8),
        Instruction::Output { port: sub.into() },
        Instruction::Drop,
        Instruction::PacketIn { reason: 1 },
        Instruction::Branch {
            a: sub.into(),
            cmp: Cmp::Lt,
            b: FieldRef::pkt(17, 9).into(),
            target: Target::Rel(1),
        },
        Instruction::Jump { target: Target::Rel(1) },
    ];
    for ins in cases {
        let c = lower(vec![ins.clone()]).total_cost();
        let i = interp_cost(&ins);
        assert!(
            c.instructions <= i.instructions && c.switches <= i.switches,
            "{ins:?}: compiled {c:?} vs interp {i:?}"
        );
        if let Instruction::GotoTable { key, .. } = &ins {
            assert_eq!(c.switches, 1);
            assert_eq!(i.switches, 7 + 3 * key.len() as u64);
        }
    }
}

fn both(ins: Vec<Instruction>, packet: Vec<u8>) -> (crate::datapath::Verdict, crate::datapath::Verdict) {
    let block = InstructionBlock::new(1, ins);
    let mut dp = Datapath::new(SpaceSizes::default());
    dp.tables.create(TableSchema::new(2, MatchType::Exact, 8)).unwrap();
    dp.blocks.insert(1, block.clone());
    dp.start_block = 1;
    let mut dp2 = dp.clone();
    let a = Interpreter::default().run_packet(&mut dp, PacketBuf::new(1, packet.clone()), None);
    let mut store = CompiledStore::default();
    store.install(&block).unwrap();
    let b = run_micro(&store, &mut dp2, PacketBuf::new(1, packet), None);
    (a, b)
}

#[test]
fn nine_byte_fields_agree_with_interpreter() {
    let pkt: Vec<u8> = (0..24).map(|i| (i * 37 + 11) as u8).collect();
    for (src_off, dst_off, len) in [(5u16, 70u16, 64u16), (3, 13, 62), (7, 1, 60), (0, 4, 64)] {
        let (a, b) = both(
            vec![
                Instruction::SetField {
                    dst: FieldRef::pkt(dst_off, len),
                    src: FieldRef::pkt(src_off, len).into(),
                },
                Instruction::Drop,
            ],
            pkt.clone(),
        );
        assert_eq!(a.packet, b.packet, "src {src_off} dst {dst_off} len {len}");
        assert_eq!(a.fault, None);
    }
}

#[test]
fn lone_drop_executes_one_op() {
    let (a, b) = both(vec![Instruction::Drop], vec![1, 2]);
    assert_eq!(b.disposition, Disposition::Drop);
    assert_eq!(b.cost, CostReport::new(1, 0));
    assert_eq!(a.packet, b.packet);
}

#[test]
fn out_of_range_store_leaves_packet_intact() {
    let (a, b) = both(
        vec![
            Instruction::SetField {
                dst: FieldRef::pkt(4, 64),
                src: Operand::imm(u64::MAX),
            },
            Instruction::Drop,
        ],
        vec![0; 8],
    );
    assert!(a.fault.is_some());
    assert_eq!(a.fault, b.fault);
    assert_eq!(a.packet, b.packet);
}

#[test]
fn dump_annotates_costs() {
    let d = lower(vec![goto(1)]).dump();
    assert!(d.contains("lookup"));
    assert!(d.contains("; i=1 s=1"));
    assert!(d.trim_end().ends_with("; ops=14 hangs=1"));
}
