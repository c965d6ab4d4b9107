//! Injection scripts: one `in <port> <hex> [expect out <port>|drop|packetin]`
//! record per line, `#` starts a comment line.

use std::fmt;

use super::{RuntimeError, SwitchRuntime};
use crate::bits::MAX_PACKET_BYTES;
use crate::datapath::{Disposition, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Out(u32),
    Drop,
    /// Any packet-in reason.
    PacketIn,
}

impl Expect {
    pub fn matches(self, d: Disposition) -> bool {
        match (self, d) {
            (Expect::Out(p), Disposition::Output(q)) => p == q,
            (Expect::Drop, Disposition::Drop) => true,
            (Expect::PacketIn, Disposition::PacketIn(_)) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Expect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expect::Out(p) => write!(f, "out {p}"),
            Expect::Drop => f.write_str("drop"),
            Expect::PacketIn => f.write_str("packetin"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionRecord {
    /// 1-based script line.
    pub line: usize,
    pub port: u32,
    pub bytes: Vec<u8>,
    pub expect: Option<Expect>,
}

/// Decodes a packet written as hex digits (optional `0x`).
pub fn parse_hex_packet(s: &str, line: usize) -> Result<Vec<u8>, RuntimeError> {
    let digits = s.strip_prefix("0x").unwrap_or(s);
    let bad = |reason: String| RuntimeError::MalformedHex { line, reason };
    if !digits.len().is_multiple_of(2) {
        return Err(bad(format!("odd digit count {}", digits.len())));
    }
    let bytes = hex::decode(digits).map_err(|e| bad(e.to_string()))?;
    if bytes.len() > MAX_PACKET_BYTES {
        return Err(bad(format!("{} bytes exceeds {MAX_PACKET_BYTES}", bytes.len())));
    }
    Ok(bytes)
}

fn parse_line(line: usize, text: &str) -> Result<InjectionRecord, RuntimeError> {
    let err = |reason: &str| RuntimeError::Script {
        line,
        reason: reason.to_string(),
    };
    let words: Vec<&str> = text.split_whitespace().collect();
    let (port, hex, rest) = match words.as_slice() {
        ["in", port, hex, rest @ ..] => (port, hex, rest),
        _ => return Err(err("expected 'in <port> <hex> [expect ...]'")),
    };
    let port = port.parse().map_err(|_| err("bad port number"))?;
    let bytes = parse_hex_packet(hex, line)?;
    let expect = match rest {
        [] => None,
        ["expect", "out", p] => Some(Expect::Out(p.parse().map_err(|_| err("bad expected port"))?)),
        ["expect", "drop"] => Some(Expect::Drop),
        ["expect", "packetin"] => Some(Expect::PacketIn),
        _ => return Err(err("expected 'expect out <port>', 'expect drop' or 'expect packetin'")),
    };
    Ok(InjectionRecord {
        line,
        port,
        bytes,
        expect,
    })
}

pub fn parse_script(text: &str) -> Result<Vec<InjectionRecord>, RuntimeError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| parse_line(i + 1, l.trim()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptOutcome {
    pub line: usize,
    pub port: u32,
    pub verdict: Verdict,
    pub expect: Option<Expect>,
}

impl ScriptOutcome {
    pub fn passed(&self) -> bool {
        self.expect.is_none_or(|e| e.matches(self.verdict.disposition))
    }
}

impl fmt::Display for ScriptOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = &self.verdict;
        write!(
            f,
            "line {}: in {} -> {} i={} s={}",
            self.line, self.port, v.disposition, v.cost.instructions, v.cost.switches
        )?;
        if let Some(fault) = &v.fault {
            write!(f, " fault={fault}")?;
        }
        match self.expect {
            Some(e) if !self.passed() => write!(f, " FAIL (expected {e})"),
            Some(_) => f.write_str(" ok"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScriptResult {
    pub outcomes: Vec<ScriptOutcome>,
}

impl ScriptResult {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.passed()).count()
    }
}

impl SwitchRuntime {
    /// Parses the whole script first, then injects every record in order.
    pub fn run_script(&mut self, text: &str) -> Result<ScriptResult, RuntimeError> {
        let records = parse_script(text)?;
        let mut out = ScriptResult::default();
        for r in records {
            let verdict = self.inject(r.port, r.bytes)?;
            out.outcomes.push(ScriptOutcome {
                line: r.line,
                port: r.port,
                verdict,
                expect: r.expect,
            });
        }
        Ok(out)
    }
}
