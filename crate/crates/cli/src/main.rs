//! `pofctl`: operator front end for the forwarding VM.
//!
//! ```text
//! pofctl load l3_ipv4.pof + mode interp + inject golden.txt + stats
//! pofctl -f session.txt
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use pofvm::asm::{self, SourceUnit};
use pofvm::isa::Program;
use pofvm::perf::{fit_chip, ChipModel, MeasuredRow};
use pofvm::runtime::{app_bench, goto_sweep, BenchRow, Control, SwitchRuntime};

#[derive(Debug, Parser)]
#[command(name = "pofctl", version, about = "Load, drive and measure a protocol-oblivious forwarding switch")]
struct Cli {
    /// Read verbs from a file, one per line ("-" for stdin).
    #[arg(short = 'f', long = "file")]
    file: Option<PathBuf>,
    /// Write egress packets as hex records to DIR/port-<n>.hex and
    /// packet-ins to DIR/packet-in.hex.
    #[arg(long, value_name = "DIR")]
    ports: Option<PathBuf>,
    /// Verbs, separated by "+".
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    verbs: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(no_binary_name = true, disable_help_flag = true)]
struct Line {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchKind {
    GotoSweep,
    App,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Load a program from assembly (.pof) or a binary image (.pofb).
    Load { file: PathBuf },
    /// Select the engine for subsequent packets.
    Mode { mode: String },
    /// Install a flow entry: `<table> value <hex> [mask <hex>] [prio n] block <id> [params <hex>]`.
    AddEntry {
        #[arg(num_args = 1.., allow_hyphen_values = true)]
        words: Vec<String>,
    },
    /// Remove a flow entry: `<table> value <hex> [mask <hex>] [prio n]`.
    DelEntry {
        #[arg(num_args = 1.., allow_hyphen_values = true)]
        words: Vec<String>,
    },
    /// Install the blocks defined in an assembly file.
    AddBlock {
        file: PathBuf,
        /// Swap the new block in for this one and retire it.
        #[arg(long)]
        replace: Option<u32>,
    },
    /// Remove an unreferenced block.
    DelBlock { id: u32 },
    /// Run an injection script ("-" for stdin).
    Inject { script: PathBuf },
    /// Print counters, pool window and per-mode cost.
    Stats {
        #[arg(long)]
        json: bool,
    },
    /// Print projected cost reports.
    Bench {
        kind: BenchKind,
        #[arg(long)]
        csv: bool,
        /// Largest key-field count in the sweep.
        #[arg(long, default_value_t = 8)]
        max_fields: usize,
    },
    /// Print a per-op trace for every injected packet.
    Trace { state: Toggle },
    /// Fit chip constants to measured rows (i,s,mpps,latency_cycles).
    FitChip { csv: PathBuf },
    /// Print the installed program as assembly.
    Show,
    /// Print the lowered micro-program of a block.
    Micro { block: u32 },
    /// Write the installed program (.pofb for binary, otherwise assembly).
    Save { file: PathBuf },
}

struct Session {
    rt: SwitchRuntime,
    failed_expects: usize,
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        return Ok(s);
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn report_asm(diags: Vec<asm::AsmDiagnostic>) -> anyhow::Error {
    let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
    anyhow!("{}", lines.join("\n"))
}

fn load_program(path: &Path, rt: &SwitchRuntime) -> Result<Program> {
    if path.extension().is_some_and(|e| e == "pofb") {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        return asm::decode(&bytes).with_context(|| format!("decoding {}", path.display()));
    }
    let text = read_input(path)?;
    asm::assemble(&SourceUnit::new(path.display().to_string(), text), &rt.config.sizes).map_err(report_asm)
}

fn key_width(rt: &SwitchRuntime) -> impl Fn(u16) -> Option<u16> + '_ {
    |t| rt.datapath().tables.schema(t).map(|s| s.key_width)
}

fn print_rows(rows: &[BenchRow], csv: bool, out: &mut impl Write) -> Result<()> {
    if csv {
        writeln!(out, "{}", BenchRow::CSV_HEADER)?;
        for r in rows {
            writeln!(out, "{}", r.csv())?;
        }
    } else {
        for r in rows {
            writeln!(out, "{r}")?;
        }
    }
    Ok(())
}

fn parse_measured(text: &str) -> Result<Vec<MeasuredRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        match nums {
            Ok(v) if v.len() == 4 => rows.push(MeasuredRow::new(v[0], v[1], v[2], v[3])),
            // a header line
            Err(_) if rows.is_empty() && n == 0 => continue,
            _ => bail!("line {}: expected i,s,mpps,latency_cycles", n + 1),
        }
    }
    Ok(rows)
}

impl Session {
    fn run(&mut self, verb: Verb, out: &mut impl Write) -> Result<()> {
        match verb {
            Verb::Load { file } => {
                let p = load_program(&file, &self.rt)?;
                self.rt.load(&p)?;
                writeln!(
                    out,
                    "loaded {}: {} tables, {} blocks, {} entries",
                    file.display(),
                    p.schemas.len(),
                    p.blocks.len(),
                    p.entries.len()
                )?;
            }
            Verb::Mode { mode } => {
                self.rt.set_mode(mode.parse()?);
                writeln!(out, "mode {}", self.rt.mode())?;
            }
            Verb::AddEntry { words } => {
                let (table_id, entry) = asm::parse_entry(&words.join(" "), key_width(&self.rt))?;
                self.rt.apply_control(Control::InsertEntry { table_id, entry })?;
                writeln!(out, "entry added to table {table_id}")?;
            }
            Verb::DelEntry { words } => {
                let (table_id, key) = asm::parse_entry_key(&words.join(" "), key_width(&self.rt))?;
                self.rt.apply_control(Control::DeleteEntry { table_id, key })?;
                writeln!(out, "entry removed from table {table_id}")?;
            }
            Verb::AddBlock { file, replace } => {
                let text = read_input(&file)?;
                let parsed = asm::parse(&SourceUnit::new(file.display().to_string(), text))?;
                let blocks = parsed.program.blocks;
                if replace.is_some() && blocks.len() != 1 {
                    bail!("--replace needs exactly one block, found {}", blocks.len());
                }
                for block in blocks {
                    let id = block.block_id;
                    match replace {
                        Some(old) => {
                            self.rt.apply_control(Control::ReplaceBlock { old, block })?;
                            writeln!(out, "block {old} replaced by {id}")?;
                        }
                        None => {
                            self.rt.apply_control(Control::InstallBlock(block))?;
                            writeln!(out, "block {id} installed")?;
                        }
                    }
                }
            }
            Verb::DelBlock { id } => {
                self.rt.apply_control(Control::DeleteBlock(id))?;
                writeln!(out, "block {id} removed")?;
            }
            Verb::Inject { script } => {
                let text = read_input(&script)?;
                let result = self.rt.run_script(&text)?;
                for o in &result.outcomes {
                    writeln!(out, "{o}")?;
                }
                if self.rt.trace_enabled() {
                    for t in self.rt.last_trace() {
                        writeln!(
                            out,
                            "  trace block={} index={} op={} i={} s={}",
                            t.block_id, t.index, t.op, t.cost.instructions, t.cost.switches
                        )?;
                    }
                }
                let failed = result.failures();
                self.failed_expects += failed;
                writeln!(out, "injected {} packets, {failed} failed expectations", result.outcomes.len())?;
            }
            Verb::Stats { json } => {
                let s = self.rt.stats();
                if json {
                    writeln!(out, "{}", serde_json::to_string_pretty(&s)?)?;
                } else {
                    write!(out, "{s}")?;
                }
            }
            Verb::Bench { kind, csv, max_fields } => {
                let chip = ChipModel::reference();
                match kind {
                    BenchKind::GotoSweep => {
                        let rows = goto_sweep(1..=max_fields, &self.rt.config, &chip);
                        print_rows(&rows, csv, out)?;
                    }
                    BenchKind::App => {
                        if !self.rt.is_loaded() {
                            bail!("no program is loaded");
                        }
                        let b = app_bench(&self.rt, "app", &chip);
                        print_rows(&b.rows, csv, out)?;
                        if !csv {
                            writeln!(
                                out,
                                "paths={} instruction_ratio={:.4} throughput_ratio={:.4}",
                                b.paths, b.instruction_ratio, b.throughput_ratio
                            )?;
                        }
                    }
                }
            }
            Verb::Trace { state } => {
                self.rt.set_trace(matches!(state, Toggle::On));
                writeln!(out, "trace {}", if self.rt.trace_enabled() { "on" } else { "off" })?;
            }
            Verb::FitChip { csv } => {
                let rows = parse_measured(&read_input(&csv)?)?;
                let chip = fit_chip(&rows)?;
                writeln!(out, "cf={:.6e} p={:.4}", chip.cf, chip.switch_penalty)?;
                for r in &rows {
                    let l = pofvm::perf::latency_cycles(r.instructions, r.switches, chip.switch_penalty);
                    let rate = chip.cf / r.instructions / 1e6;
                    writeln!(
                        out,
                        "i={} s={} mpps={:.3} model_mpps={rate:.3} latency={} model_latency={l:.1} latency_error={:.4}",
                        r.instructions,
                        r.switches,
                        r.mpps,
                        r.latency_cycles,
                        (l - r.latency_cycles).abs() / r.latency_cycles
                    )?;
                }
            }
            Verb::Show => {
                if !self.rt.is_loaded() {
                    bail!("no program is loaded");
                }
                write!(out, "{}", asm::disassemble(&self.rt.current_program()))?;
            }
            Verb::Micro { block } => {
                let p = self.rt.compiled().get(block).ok_or_else(|| anyhow!("no compiled block {block}"))?;
                write!(out, "{}", p.dump())?;
            }
            Verb::Save { file } => {
                let p = self.rt.current_program();
                if file.extension().is_some_and(|e| e == "pofb") {
                    fs::write(&file, asm::encode(&p))?;
                } else {
                    fs::write(&file, asm::disassemble(&p))?;
                }
                writeln!(out, "saved {}", file.display())?;
            }
        }
        Ok(())
    }

    fn write_ports(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (port, packets) in self.rt.ports() {
            let text: String = packets.iter().map(|p| format!("{}\n", hex_string(p))).collect();
            fs::write(dir.join(format!("port-{port}.hex")), text)?;
        }
        if !self.rt.packet_in.is_empty() {
            let text: String = self
                .rt
                .packet_in
                .iter()
                .map(|p| format!("{} {} {}\n", p.ingress_port, p.reason, hex_string(&p.bytes)))
                .collect();
            fs::write(dir.join("packet-in.hex"), text)?;
        }
        Ok(())
    }
}

fn hex_string(b: &[u8]) -> String {
    b.iter().map(|x| format!("{x:02x}")).collect()
}

/// Splits the command line on "+" and reads `-f` input as one verb per line.
fn collect_lines(cli: &Cli) -> Result<Vec<Vec<String>>> {
    let mut lines = Vec::new();
    if let Some(f) = &cli.file {
        for l in read_input(f)?.lines() {
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                lines.push(l.split_whitespace().map(String::from).collect());
            }
        }
    }
    for seg in cli.verbs.split(|w| w == "+") {
        if !seg.is_empty() {
            lines.push(seg.to_vec());
        }
    }
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let lines = match collect_lines(&cli) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if lines.is_empty() {
        eprintln!("error: no verbs given (try `pofctl help`)");
        return ExitCode::from(2);
    }
    let mut session = Session {
        rt: SwitchRuntime::default(),
        failed_expects: 0,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for words in lines {
        let verb = match Line::try_parse_from(&words) {
            Ok(l) => l.verb,
            Err(e) => {
                let _ = e.print();
                return ExitCode::from(2);
            }
        };
        if let Err(e) = session.run(verb, &mut out) {
            eprintln!("error: {}: {e:#}", words.join(" "));
            return ExitCode::from(1);
        }
    }
    if let Some(dir) = &cli.ports {
        if let Err(e) = session.write_ports(dir) {
            eprintln!("error: writing ports: {e:#}");
            return ExitCode::from(1);
        }
    }
    if session.failed_expects > 0 {
        eprintln!("{} expectation(s) failed", session.failed_expects);
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
