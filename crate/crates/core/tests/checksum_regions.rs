//! CHECKSUM leaves every region summing to 0xffff in both engines.

mod common;

use common::{Rng8, SeedableRng};
use pofvm::isa::{Instruction, InstructionBlock, Operand, Program};
use pofvm::runtime::{Mode, RuntimeConfig, SwitchRuntime};
use pofvm::space::FieldRef;
use rand::Rng;

/// Ones' complement sum of big-endian 16-bit words, odd tail padded with zero.
fn fold_sum(data: &[u8]) -> u16 {
    let mut sum: u32 = 0;
    for pair in data.chunks(2) {
        let hi = pair[0] as u32;
        let lo = pair.get(1).copied().unwrap_or(0) as u32;
        sum += (hi << 8) | lo;
        while sum > 0xffff {
            sum = (sum & 0xffff) + (sum >> 16);
        }
    }
    sum as u16
}

fn checksum_program(region: FieldRef, dst: FieldRef) -> Program {
    Program {
        schemas: Vec::new(),
        blocks: vec![InstructionBlock::new(
            0,
            vec![
                Instruction::Checksum { dst, region },
                Instruction::Output { port: Operand::imm(1) },
            ],
        )],
        entries: Vec::new(),
        start_block: 0,
    }
}

fn run(region: FieldRef, dst: FieldRef, packet: &[u8]) -> [Vec<u8>; 2] {
    let mut rt = SwitchRuntime::new(RuntimeConfig::default());
    rt.load(&checksum_program(region, dst)).unwrap();
    Mode::ALL.map(|m| {
        rt.set_mode(m);
        let v = rt.inject(0, packet.to_vec()).unwrap();
        assert!(v.fault.is_none(), "{m}: {:?}", v.fault);
        v.packet
    })
}

#[test]
fn random_regions_sum_to_all_ones() {
    let mut rng = Rng8::seed_from_u64(0xc5);
    for case in 0..1_000 {
        let words = rng.gen_range(1..=31u16);
        let start = rng.gen_range(0..24u16);
        let len = 2 * words + rng.gen_range(0..2);
        let region = FieldRef::pkt(8 * start, 8 * len);
        let dst = FieldRef::pkt(8 * start + 16 * rng.gen_range(0..words), 16);
        let packet: Vec<u8> = (0..(start + len) as usize + rng.gen_range(0..8)).map(|_| rng.gen()).collect();
        for out in run(region, dst, &packet) {
            let body = &out[start as usize..(start + len) as usize];
            assert_eq!(fold_sum(body), 0xffff, "case {case}");
            // only the checksum field changes
            for (i, (a, b)) in packet.iter().zip(&out).enumerate() {
                let in_dst = i * 8 >= dst.offset as usize && i * 8 < dst.end();
                assert!(in_dst || a == b, "case {case}: byte {i} changed");
            }
        }
    }
}

#[test]
fn zero_region_gets_all_ones() {
    let region = FieldRef::pkt(0, 160);
    let dst = FieldRef::pkt(80, 16);
    for out in run(region, dst, &[0; 20]) {
        assert_eq!(&out[10..12], &[0xff, 0xff]);
        assert_eq!(fold_sum(&out), 0xffff);
    }
}
