//! A protocol-oblivious forwarding virtual machine.
//!
//! Packets are bit strings addressed by `{offset, length}`; generic flow
//! instructions grouped into blocks act on them, driven by match-action
//! tables. Two engines execute the same programs: a direct interpreter and a
//! compiler to register-based micro-ops. Both tally micro-instructions and
//! thread switches, which `perf` projects onto chip throughput and latency.

pub mod asm;
pub mod bits;
pub mod checksum;
pub mod datapath;
pub mod interp;
pub mod isa;
pub mod micro;
pub mod perf;
pub mod runtime;
pub mod space;
pub mod table;
pub mod validate;
