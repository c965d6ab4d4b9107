//! Acceptance criteria 1-9, one PASS/FAIL line each.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{observe, random_bits, random_packet, random_program, Rng8, SeedableRng};
use pofvm::asm::{assemble, decode, disassemble, encode, SourceUnit};
use pofvm::bits::BitString;
use pofvm::isa::{Instruction, InstructionBlock, Operand, Program};
use pofvm::perf::{fit_chip, ChipModel, CostReport, MeasuredRow, REFERENCE_ROWS};
use pofvm::runtime::{app_bench, goto_sweep, AppBench};
use pofvm::runtime::{Mode, RuntimeConfig, SwitchRuntime};
use pofvm::space::{FieldRef, SpaceSizes};
use pofvm::table::{FlowEntry, MatchType, Table, TableSchema};
use rand::Rng;

/// Published IPv4 forwarding measurements: conventional, interpreter, compiler.
const IPV4_ROWS: [(f64, f64, f64, f64); 3] = [
    (496.0, 94.0, 77.5, 4468.0),
    (1089.0, 146.0, 35.3, 6361.0),
    (550.0, 74.0, 69.8, 4022.0),
];
const CF_TARGET: f64 = 38.42e9;
const CF_TOLERANCE: f64 = 0.005;
const LATENCY_TOLERANCE: f64 = 0.10;
const REDUCTION_RANGE: (f64, f64) = (0.40, 0.55);
const THROUGHPUT_RANGE: (f64, f64) = (1.8, 2.2);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn load_example(name: &str) -> Program {
    let text = std::fs::read_to_string(manifest_path(&format!("examples/{name}"))).unwrap();
    assemble(&SourceUnit::new(name, text), &SpaceSizes::default()).unwrap()
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    if t < limit {
        Ok(())
    } else {
        Err(format!("took {t:?}, limit {limit:?}"))
    }
}

fn goto_costs() -> Outcome {
    let start = Instant::now();
    let rows = goto_sweep(1..=8, &RuntimeConfig::default(), &ChipModel::reference());
    for n in 1..=8u64 {
        let case = format!("goto-n{n}");
        let find = |m: Mode| rows.iter().find(|r| r.mode == m && r.case == case).map(|r| r.cost());
        let want_i = CostReport::new(37 + 33 * n, 7 + 3 * n);
        let want_c = CostReport::new(13 + n, 1);
        if find(Mode::Interp) != Some(want_i) || find(Mode::Compile) != Some(want_c) {
            return Err(format!("n={n}: interp {:?} compile {:?}", find(Mode::Interp), find(Mode::Compile)));
        }
    }
    within_time(start, Duration::from_secs(1))?;
    Ok("n=1..8 exact in both modes".into())
}

fn l3_bench() -> AppBench {
    let mut rt = SwitchRuntime::new(RuntimeConfig::default());
    rt.load(&load_example("l3_ipv4.pof")).unwrap();
    app_bench(&rt, "l3", &ChipModel::reference())
}

fn compiler_reduction() -> Outcome {
    let start = Instant::now();
    let b = l3_bench();
    within_time(start, Duration::from_secs(1))?;
    let r = b.instruction_ratio;
    let msg = format!(
        "compiled/interp worst path {}/{} = {:.1}%, want {:.0}-{:.0}%",
        b.rows[1].instructions,
        b.rows[0].instructions,
        100.0 * r,
        100.0 * REDUCTION_RANGE.0,
        100.0 * REDUCTION_RANGE.1
    );
    if (REDUCTION_RANGE.0..=REDUCTION_RANGE.1).contains(&r) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn throughput_doubling() -> Outcome {
    let b = l3_bench();
    let r = b.throughput_ratio;
    let msg = format!(
        "compile/interp throughput {:.3}/{:.3} Mpps = {r:.2}, want {}-{}",
        b.rows[1].mpps, b.rows[0].mpps, THROUGHPUT_RANGE.0, THROUGHPUT_RANGE.1
    );
    if (THROUGHPUT_RANGE.0..=THROUGHPUT_RANGE.1).contains(&r) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn chip_fit() -> Outcome {
    let rows: Vec<MeasuredRow> = IPV4_ROWS.iter().map(|&(i, s, r, l)| MeasuredRow::new(i, s, r, l)).collect();
    if rows != REFERENCE_ROWS {
        return Err("built-in reference rows differ from the published measurements".into());
    }
    let chip = fit_chip(&rows).map_err(|e| e.to_string())?;
    let mut problems = Vec::new();
    let cf_err = (chip.cf - CF_TARGET).abs() / CF_TARGET;
    if cf_err > CF_TOLERANCE {
        problems.push(format!("cf {:.4e} off by {:.2}%", chip.cf, 100.0 * cf_err));
    }
    let mut lat = Vec::new();
    for &(i, s, mpps, l) in &IPV4_ROWS {
        let ir = i * mpps * 1e6;
        let e = (ir - CF_TARGET).abs() / CF_TARGET;
        if e > CF_TOLERANCE {
            problems.push(format!("i*R {ir:.4e} for i={i} off by {:.2}%", 100.0 * e));
        }
        let predicted = i + chip.switch_penalty * s;
        let e = (predicted - l).abs() / l;
        lat.push(format!("{:.1}%", 100.0 * e));
        if e > LATENCY_TOLERANCE {
            problems.push(format!("latency {predicted:.0} vs {l} off by {:.1}%", 100.0 * e));
        }
    }
    let msg = format!(
        "cf {:.3} G cycles/s, p {:.2}, latency errors [{}]",
        chip.cf / 1e9,
        chip.switch_penalty,
        lat.join(", ")
    );
    if problems.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {}", problems.join("; ")))
    }
}

fn engine_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng8::seed_from_u64(0xacce_0005);
    let mut cases = 0;
    while cases < 10_000 {
        let p = random_program(&mut rng);
        let packets: Vec<(u32, Vec<u8>)> =
            (0..4).map(|_| (rng.gen_range(0..4), random_packet(&mut rng, &p))).collect();
        let (a, _) = observe(&p, &packets, false);
        let (b, _) = observe(&p, &packets, true);
        if a != b {
            return Err(format!("mismatch at case {cases}\n{}", disassemble(&p)));
        }
        cases += packets.len();
    }
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("{cases} cases identical in {:?}", start.elapsed()))
}

fn covers(e: &FlowEntry, key: &BitString) -> bool {
    (0..key.width()).all(|i| !e.mask.bit(i) || e.value.bit(i) == key.bit(i))
}

fn lookup_oracle() -> Outcome {
    let mut rng = Rng8::seed_from_u64(0xacce_0006);
    let mut queries = 0;
    for (mt, width) in [(MatchType::Lpm, 32usize), (MatchType::Masked, 24)] {
        let mut t = Table::new(TableSchema::new(1, mt, width as u16)).unwrap();
        let mut list: Vec<FlowEntry> = Vec::new();
        for _ in 0..200 {
            let v = random_bits(&mut rng, width);
            let e = if mt == MatchType::Lpm {
                let len = rng.gen_range(0..=width);
                FlowEntry::prefix(v.and(&BitString::prefix_mask(width, len)), len, 1, vec![])
            } else {
                let m = random_bits(&mut rng, width).and(&random_bits(&mut rng, width));
                FlowEntry::masked(v.and(&m), m, rng.gen_range(0..4), 1, vec![])
            };
            if t.insert(e.clone()).is_ok() {
                list.push(e);
            }
        }
        for _ in 0..5_000 {
            let key = if rng.gen_bool(0.7) {
                let mut k = list[rng.gen_range(0..list.len())].value.clone();
                let i = rng.gen_range(0..width);
                if rng.gen_bool(0.5) {
                    k.set_bit(i, !k.bit(i));
                }
                k
            } else {
                random_bits(&mut rng, width)
            };
            let hits = list.iter().enumerate().filter(|(_, e)| covers(e, &key));
            // list order is insertion order
            let want = if mt == MatchType::Lpm {
                hits.max_by_key(|(_, e)| (0..width).filter(|&i| e.mask.bit(i)).count())
            } else {
                hits.max_by(|(ia, a), (ib, b)| a.priority.cmp(&b.priority).then(ib.cmp(ia)))
            }
            .map(|(_, e)| e.clone());
            let got = t.lookup(&key).unwrap().cloned();
            if got != want {
                return Err(format!("{mt:?} key {}: got {got:?}, want {want:?}", key.to_hex()));
            }
            queries += 1;
        }
    }
    Ok(format!("{queries} queries match the scan"))
}

fn fold_sum(data: &[u8]) -> u16 {
    let mut sum: u32 = data
        .chunks(2)
        .map(|c| ((c[0] as u32) << 8) | c.get(1).copied().unwrap_or(0) as u32)
        .sum();
    while sum > 0xffff {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    sum as u16
}

fn checksummed(region: FieldRef, dst: FieldRef, packet: &[u8]) -> Vec<Vec<u8>> {
    let p = Program {
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
    };
    let mut rt = SwitchRuntime::new(RuntimeConfig::default());
    rt.load(&p).unwrap();
    Mode::ALL
        .iter()
        .map(|&m| {
            rt.set_mode(m);
            rt.inject(0, packet.to_vec()).unwrap().packet
        })
        .collect()
}

fn checksum_invariant() -> Outcome {
    let mut rng = Rng8::seed_from_u64(0xacce_0007);
    for case in 0..1_000 {
        let start = rng.gen_range(0..16u16);
        let words = rng.gen_range(1..=31u16);
        let len = 2 * words + rng.gen_range(0..2);
        let region = FieldRef::pkt(8 * start, 8 * len);
        let dst = FieldRef::pkt(8 * start + 16 * rng.gen_range(0..words), 16);
        let packet: Vec<u8> = (0..start + len).map(|_| rng.gen()).collect();
        for out in checksummed(region, dst, &packet) {
            let s = fold_sum(&out[start as usize..]);
            if s != 0xffff {
                return Err(format!("case {case}: region sums to {s:#06x}"));
            }
        }
    }
    for out in checksummed(FieldRef::pkt(0, 160), FieldRef::pkt(80, 16), &[0; 20]) {
        if out[10..12] != [0xff, 0xff] || fold_sum(&out) != 0xffff {
            return Err(format!("zero region gave {}", hex::encode(&out[10..12])));
        }
    }
    Ok("1000 random regions and the zero region sum to 0xffff".into())
}

fn roundtrips() -> Outcome {
    let mut rng = Rng8::seed_from_u64(0xacce_0008);
    for case in 0..1_000 {
        let p = random_program(&mut rng);
        if decode(&encode(&p)).as_ref() != Ok(&p) {
            return Err(format!("case {case}: wire"));
        }
        let text = disassemble(&p);
        if assemble(&SourceUnit::new("rt", text), &SpaceSizes::default()).as_ref() != Ok(&p) {
            return Err(format!("case {case}: text"));
        }
    }
    let p = load_example("l3_ipv4.pof");
    let image = std::fs::read(manifest_path("tests/golden/l3_ipv4.pofb")).map_err(|e| e.to_string())?;
    let listing = std::fs::read_to_string(manifest_path("tests/golden/l3_ipv4.pofa")).map_err(|e| e.to_string())?;
    if encode(&p) != image || decode(&image).as_ref() != Ok(&p) {
        return Err("bundled app image differs from its golden".into());
    }
    if disassemble(&p) != listing || assemble(&SourceUnit::new("golden", listing), &SpaceSizes::default()) != Ok(p) {
        return Err("bundled app listing differs from its golden".into());
    }
    Ok("1000 random programs and the bundled app goldens".into())
}

fn learning_script() -> Outcome {
    let script = std::fs::read_to_string(manifest_path("examples/learn.script")).unwrap();
    let p = load_example("learn.pof");
    for mode in Mode::ALL {
        let mut rt = SwitchRuntime::new(RuntimeConfig::default());
        rt.load(&p).unwrap();
        rt.set_mode(mode);
        let r = rt.run_script(&script).map_err(|e| e.to_string())?;
        if r.outcomes.len() != 2 || r.failures() != 0 {
            let lines: Vec<String> = r.outcomes.iter().map(|o| o.to_string()).collect();
            return Err(format!("{mode}: {}", lines.join("; ")));
        }
    }
    Ok("install then hit in both modes".into())
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 9] = [
        ("goto_table cost exactness", goto_costs),
        ("compiler reduction range", compiler_reduction),
        ("throughput doubling", throughput_doubling),
        ("chip fit consistency", chip_fit),
        ("engine equivalence", engine_equivalence),
        ("lookup oracle", lookup_oracle),
        ("checksum invariant", checksum_invariant),
        ("codec and assembler roundtrips", roundtrips),
        ("active datapath script", learning_script),
    ];
    let mut failed = BTreeSet::new();
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name}: {detail}", n + 1),
            Err(detail) => {
                println!("criterion {}: FAIL {name}: {detail}", n + 1);
                failed.insert(n + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
