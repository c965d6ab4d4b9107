//! Interpreter and compiler agree on verdicts, bytes, pool and tables.

mod common;

use common::{observe, random_packet, random_program, Rng8, SeedableRng};
use pofvm::datapath::Disposition;
use rand::Rng;

const PROGRAMS: usize = 2_500;
const PACKETS_PER_PROGRAM: usize = 4;

#[test]
fn engines_agree_on_random_programs() {
    let mut rng = Rng8::seed_from_u64(0x5eed_0001);
    let (mut outputs, mut faults, mut cases) = (0, 0, 0);
    for case in 0..PROGRAMS {
        let p = random_program(&mut rng);
        let packets: Vec<(u32, Vec<u8>)> = (0..PACKETS_PER_PROGRAM)
            .map(|_| (rng.gen_range(0..4), random_packet(&mut rng, &p)))
            .collect();
        let (a, ra) = observe(&p, &packets, false);
        let (b, rb) = observe(&p, &packets, true);
        assert_eq!(a, b, "case {case}\n{}", pofvm::asm::disassemble(&p));
        for (x, y) in ra.iter().zip(&rb) {
            assert!(y.cost.instructions <= x.cost.instructions, "case {case}: compiled cost exceeds interpreted");
        }
        cases += packets.len();
        outputs += ra.iter().filter(|v| matches!(v.disposition, Disposition::Output(_))).count();
        faults += ra.iter().filter(|v| v.fault.is_some()).count();
    }
    assert!(cases >= 10_000);
    // the generator must exercise more than the fault path
    assert!(outputs * 10 > cases, "outputs {outputs} of {cases}");
    assert!(faults * 2 < cases, "faults {faults} of {cases}");
    println!("{cases} cases, {outputs} outputs, {faults} faults");
}
