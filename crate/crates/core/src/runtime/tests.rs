use super::*;
use crate::asm::{assemble, SourceUnit};
use crate::checksum::ones_complement_sum;
use crate::isa::{EntryMod, EntryOp, Operand};
use crate::perf::ChipModel;
use crate::space::FieldRef;
use crate::table::MatchType;

const L3: &str = include_str!("../../examples/l3_ipv4.pof");
const GOLDEN: &str = "000000000099000000000088080045000054123440004001000\
00a0001010a010203deadbeef";

fn l3() -> SwitchRuntime {
    let p = assemble(&SourceUnit::new("l3_ipv4.pof", L3), &SpaceSizes::default()).unwrap();
    let mut rt = SwitchRuntime::default();
    rt.load(&p).unwrap();
    rt
}

#[test]
fn l3_forwards_in_both_modes() {
    let pkt = parse_hex_packet(GOLDEN, 1).unwrap();
    let mut verdicts = Vec::new();
    for mode in Mode::ALL {
        let mut rt = l3();
        rt.set_mode(mode);
        let v = rt.inject(1, pkt.clone()).unwrap();
        assert_eq!(v.disposition, Disposition::Output(3), "{mode}");
        assert_eq!(v.fault, None);
        assert_eq!(v.packet[22], 0x3f, "ttl decremented");
        assert_eq!(&v.packet[..6], &[3, 0, 0, 0, 0, 3]);
        assert_eq!(ones_complement_sum(&v.packet[14..34]), 0xffff);
        verdicts.push(v);
    }
    assert_eq!(verdicts[0].packet, verdicts[1].packet);
    assert!(verdicts[0].cost.instructions > verdicts[1].cost.instructions);
}

#[test]
fn l3_miss_paths() {
    let mut rt = l3();
    let mut pkt = parse_hex_packet(GOLDEN, 1).unwrap();
    assert_eq!(rt.inject(9, pkt.clone()).unwrap().disposition, Disposition::Drop);
    pkt[30] = 11;
    assert!(matches!(rt.inject(1, pkt.clone()).unwrap().disposition, Disposition::PacketIn(_)));
    pkt[12] = 0x86;
    assert_eq!(rt.inject(1, pkt).unwrap().disposition, Disposition::PacketIn(1));
    let s = rt.stats();
    assert_eq!((s.tables[0].hits, s.tables[0].misses), (1, 1));
    assert_eq!((s.tables[1].hits, s.tables[1].misses), (0, 1));
    assert_eq!(s.packet_ins, 2);
    assert_eq!(s.compile.packets, 3);
}

#[test]
fn fresh_stats_are_zero() {
    let s = l3().stats();
    assert_eq!(s.interp, ModeStats::default());
    assert_eq!(s.compile, ModeStats::default());
    assert!(s.tables.iter().all(|t| t.hits == 0 && t.misses == 0));
    assert!(s.pool_window.chars().all(|c| c == '0'));
    assert_eq!((s.outputs, s.drops, s.faults), (0, 0, 0));
}

#[test]
fn pool_counter_counts_forwarded_packets() {
    let mut rt = l3();
    let pkt = parse_hex_packet(GOLDEN, 1).unwrap();
    for k in 1..=5u32 {
        rt.set_mode(if k % 2 == 0 { Mode::Interp } else { Mode::Compile });
        rt.inject(1, pkt.clone()).unwrap();
        assert_eq!(&rt.stats().pool_window[..8], format!("{k:08x}"));
    }
}

#[test]
fn scripts_check_expectations() {
    let mut rt = l3();
    let script = format!("# golden\nin 1 {GOLDEN} expect out 3\nin 2 {GOLDEN} expect out 4\nin 9 {GOLDEN} expect out 1\n");
    let r = rt.run_script(&script).unwrap();
    assert_eq!(r.outcomes.len(), 3);
    assert_eq!(r.failures(), 1);
    assert!(r.outcomes[2].to_string().contains("FAIL (expected out 1)"));
    assert!(matches!(
        rt.run_script("in 1 abc"),
        Err(RuntimeError::MalformedHex { line: 1, .. })
    ));
    assert!(matches!(rt.run_script("in 1 zz"), Err(RuntimeError::MalformedHex { .. })));
    assert!(matches!(rt.run_script("out 1 00"), Err(RuntimeError::Script { .. })));
}

#[test]
fn referenced_block_cannot_be_deleted() {
    let mut rt = l3();
    assert_eq!(rt.apply_control(Control::DeleteBlock(2)), Err(RuntimeError::ReferencedBlock(2)));
    assert_eq!(rt.apply_control(Control::DeleteBlock(0)), Err(RuntimeError::ReferencedBlock(0)));
    rt.apply_control(Control::InstallBlock(InstructionBlock::new(7, vec![Instruction::Drop])))
        .unwrap();
    rt.apply_control(Control::DeleteBlock(7)).unwrap();
    assert_eq!(rt.apply_control(Control::DeleteTable(2)), Err(RuntimeError::ReferencedTable(2)));
}

#[test]
fn block_swap_moves_references() {
    let mut rt = l3();
    let new = InstructionBlock::new(20, vec![Instruction::Output { port: Operand::imm(9) }]);
    rt.apply_control(Control::ReplaceBlock { old: 2, block: new }).unwrap();
    assert!(!rt.datapath().blocks.contains_key(&2));
    assert!(rt.compiled().get(2).is_none());
    let pkt = parse_hex_packet(GOLDEN, 1).unwrap();
    for mode in Mode::ALL {
        rt.set_mode(mode);
        assert_eq!(rt.inject(1, pkt.clone()).unwrap().disposition, Disposition::Output(9));
    }
}

#[test]
fn control_entry_is_visible_to_next_packet() {
    let mut rt = l3();
    let mut pkt = parse_hex_packet(GOLDEN, 1).unwrap();
    pkt[30] = 11;
    assert!(matches!(rt.inject(1, pkt.clone()).unwrap().disposition, Disposition::PacketIn(_)));
    let mut value = crate::bits::BitString::from_u64(16, 100);
    value.push(0x0b00_0000, 32);
    let entry = FlowEntry::prefix(value, 24, 2, hex::decode("0005050000000005020000000001").unwrap());
    rt.apply_control(Control::InsertEntry { table_id: 2, entry }).unwrap();
    assert_eq!(rt.inject(1, pkt).unwrap().disposition, Disposition::Output(5));
}

/// Packet 1 installs an exact entry keyed on its first byte; packet 2
/// carrying the same byte then hits it.
fn learning_program() -> Program {
    Program {
        schemas: vec![TableSchema::new(5, MatchType::Masked, 8)],
        blocks: vec![
            InstructionBlock::new(
                0,
                vec![
                    Instruction::SearchTable {
                        table_id: 5,
                        key: vec![FieldRef::pkt(0, 8)],
                        dst: FieldRef::meta(8, 16),
                    },
                    Instruction::Branch {
                        a: FieldRef::meta(0, 1).into(),
                        cmp: crate::isa::Cmp::Eq,
                        b: Operand::imm_w(1, 1),
                        target: crate::isa::Target::Abs(3),
                    },
                    Instruction::EntryMod(EntryMod {
                        op: EntryOp::Insert,
                        table_id: 5,
                        key: vec![FieldRef::pkt(0, 8).into()],
                        mask: crate::bits::BitString::ones(8),
                        priority: 0,
                        block_id: 1,
                        params: vec![Operand::imm_w(7, 16)],
                    }),
                    Instruction::Output { port: FieldRef::meta(8, 16).into() },
                ],
            ),
            InstructionBlock::new(1, vec![Instruction::Drop]),
        ],
        entries: Vec::new(),
        start_block: 0,
    }
}

#[test]
fn datapath_entry_mod_two_packets() {
    for mode in Mode::ALL {
        let mut rt = SwitchRuntime::default();
        rt.load(&learning_program()).unwrap();
        rt.set_mode(mode);
        assert_eq!(rt.inject(0, vec![0x42]).unwrap().disposition, Disposition::Output(0));
        assert_eq!(rt.inject(0, vec![0x42]).unwrap().disposition, Disposition::Output(7));
        let t = &rt.stats().tables[0];
        assert_eq!((t.entries, t.hits, t.misses), (1, 1, 1), "{mode}");
    }
}

#[test]
fn goto_sweep_reproduces_costs() {
    let rows = goto_sweep(1..=8, &RuntimeConfig::default(), &ChipModel::reference());
    for (k, n) in (1..=8u64).enumerate() {
        assert_eq!(rows[2 * k].cost(), CostReport::new(37 + 33 * n, 7 + 3 * n));
        assert_eq!(rows[2 * k + 1].cost(), CostReport::new(13 + n, 1));
    }
    assert_eq!(rows[7].csv().split(',').take(4).collect::<Vec<_>>(), ["compile", "goto-n4", "17", "1"]);
    assert!(rows[6].to_string().starts_with("mode=interp case=goto-n4 i=169 s=19"));
}

#[test]
fn replays_are_deterministic() {
    let script = format!("in 1 {GOLDEN}\nin 2 {GOLDEN}\nin 3 {GOLDEN}\n");
    let run = || {
        let mut rt = l3();
        rt.run_script(&script).unwrap();
        rt.set_mode(Mode::Interp);
        rt.run_script(&script).unwrap();
        (rt.stats(), rt.egress.clone(), app_bench(&rt, "l3", &ChipModel::reference()))
    };
    assert_eq!(run(), run());
}
