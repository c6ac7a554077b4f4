//! Simulation laboratory for page-frame-cache steering, Rowhammer fault
//! templating and persistent-fault key recovery against T-table AES.
//!
//! Every model is deterministic given its seed:
//!
//! - [`aes`]: T-table AES-128 (OpenSSL and Libgcrypt layouts), faults, lookup traces.
//! - [`recovery`]: SEI, last-round PFA and the deep-round attack on round 9.
//! - [`ecc`]: ECC correction-latency oracle, plaintext-byte scan, restart statistics.
//! - [`mem`]: buddy allocator with a per-CPU page frame cache.
//! - [`dram`]: address mapping, row-conflict timing, bin partitioning, hammering.
//! - [`pipeline`]: the chained attack from page pool to recovered key.

pub mod aes;
pub mod dram;
pub mod ecc;
pub mod mem;
pub mod pipeline;
pub mod recovery;
