//! Chip-level projection of per-packet cost tallies.
//!
//! Throughput follows `R = c·f / i`. Latency is offered in two forms: the
//! time-valued `t / R`, and the cycle-valued `i + p·s` that is calibrated
//! against measured cycle counts. The two are not reconciled; callers pick
//! the one whose units they need.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Micro-instruction and thread-switch tallies for one packet (or a sum of
/// packets).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostReport {
    pub instructions: u64,
    pub switches: u64,
}

impl CostReport {
    pub const fn new(instructions: u64, switches: u64) -> Self {
        CostReport {
            instructions,
            switches,
        }
    }
}

impl Add for CostReport {
    type Output = CostReport;

    fn add(self, rhs: CostReport) -> CostReport {
        CostReport::new(self.instructions + rhs.instructions, self.switches + rhs.switches)
    }
}

impl AddAssign for CostReport {
    fn add_assign(&mut self, rhs: CostReport) {
        *self = *self + rhs;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PerfError {
    #[error("instruction count must be positive")]
    ZeroCost,
    #[error("throughput must be positive")]
    ZeroThroughput,
    #[error("at least two measurement rows are required")]
    TooFewRows,
    #[error("thread-switch counts are all equal; the penalty cannot be fitted")]
    Degenerate,
}

/// Aggregate processing rate and thread-switch penalty of a chip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChipModel {
    /// Cores times core frequency, in cycles per second.
    pub cf: f64,
    /// Cycles lost per thread switch.
    pub switch_penalty: f64,
    /// Hardware threads per core, for the time-valued latency.
    pub threads: f64,
}

impl ChipModel {
    pub fn from_cores(cores: u32, freq_hz: f64, threads: u32, switch_penalty: f64) -> Self {
        ChipModel {
            cf: cores as f64 * freq_hz,
            switch_penalty,
            threads: threads as f64,
        }
    }

    /// Fitted to the published IPv4 forwarding measurements.
    pub fn reference() -> Self {
        fit_chip(&REFERENCE_ROWS).expect("reference rows are well formed")
    }

    pub fn throughput(&self, cost: CostReport) -> Result<f64, PerfError> {
        throughput(cost.instructions as f64, self)
    }

    pub fn latency_cycles(&self, cost: CostReport) -> f64 {
        latency_cycles(cost.instructions as f64, cost.switches as f64, self.switch_penalty)
    }
}

/// One measured configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasuredRow {
    pub instructions: f64,
    pub switches: f64,
    pub mpps: f64,
    pub latency_cycles: f64,
}

impl MeasuredRow {
    pub const fn new(instructions: f64, switches: f64, mpps: f64, latency_cycles: f64) -> Self {
        MeasuredRow {
            instructions,
            switches,
            mpps,
            latency_cycles,
        }
    }
}

/// Basic IPv4 forwarding on the reference NPU: conventional microcode,
/// interpreter mode, compiler mode.
pub const REFERENCE_ROWS: [MeasuredRow; 3] = [
    MeasuredRow::new(496.0, 94.0, 77.5, 4468.0),
    MeasuredRow::new(1089.0, 146.0, 35.3, 6361.0),
    MeasuredRow::new(550.0, 74.0, 69.8, 4022.0),
];

/// Packets per second for `instructions` per packet.
pub fn throughput(instructions: f64, chip: &ChipModel) -> Result<f64, PerfError> {
    if instructions <= 0.0 {
        return Err(PerfError::ZeroCost);
    }
    Ok(chip.cf / instructions)
}

/// Seconds per packet, `t / R`.
pub fn latency_seconds(threads: f64, rate_pps: f64) -> Result<f64, PerfError> {
    if rate_pps <= 0.0 {
        return Err(PerfError::ZeroThroughput);
    }
    Ok(threads / rate_pps)
}

/// Cycles per packet, `i + p·s`.
pub fn latency_cycles(instructions: f64, switches: f64, penalty: f64) -> f64 {
    instructions + penalty * switches
}

/// Fits `cf` as the mean of `i·R` and `p` as the least-squares slope of
/// `L - i` against `s` (through the origin, as the model has no constant
/// term).
pub fn fit_chip(rows: &[MeasuredRow]) -> Result<ChipModel, PerfError> {
    if rows.len() < 2 {
        return Err(PerfError::TooFewRows);
    }
    if rows.iter().all(|r| r.switches == rows[0].switches) {
        return Err(PerfError::Degenerate);
    }
    let n = rows.len() as f64;
    let cf = rows.iter().map(|r| r.instructions * r.mpps * 1e6).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|r| r.switches * (r.latency_cycles - r.instructions)).sum();
    let sxx: f64 = rows.iter().map(|r| r.switches * r.switches).sum();
    Ok(ChipModel {
        cf,
        switch_penalty: sxy / sxx,
        threads: 1.0,
    })
}
