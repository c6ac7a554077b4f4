//! T-table AES-128 in the OpenSSL and Libgcrypt layouts, with persistent
//! fault injection and per-lookup instrumentation.

mod cipher;
mod fault;
mod key;
mod tables;
mod vectors;

use thiserror::Error;

pub use cipher::{encrypt, encrypt_block, encrypt_with, Access, AccessTrace, TableSource};
pub use fault::{observed_flip, ObservedFlip, PersistentFault, OBSERVED_FLIPS};
pub use key::{expand_key, expand_key128, recover_master_key, RoundKeys};
pub use tables::{gmul, pristine_entry, xtime, TTableSet, TableId, TableStyle, INV_SBOX, LAST_ROUND_MASKS, SBOX};
pub use vectors::{parse_vectors, write_vectors, TestVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AesError {
    #[error("AES-128 key must be 16 bytes, got {0}")]
    KeyLength(usize),
    #[error("fault mask must be nonzero")]
    ZeroMask,
    #[error("table {0} does not exist in this table set")]
    NoSuchTable(TableId),
    #[error("fault {0} is not present in the tables")]
    FaultNotPresent(PersistentFault),
    #[error("test vector line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
