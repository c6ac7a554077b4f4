//! Persistent table faults and the catalogue of flips observed on real DIMMs.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::tables::{pristine_entry, TTableSet, TableId};
use super::AesError;

/// A lasting bit flip in one table word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersistentFault {
    pub table: TableId,
    pub entry: u8,
    pub xor_mask: u32,
}

impl PersistentFault {
    pub fn new(table: TableId, entry: u8, xor_mask: u32) -> Result<Self, AesError> {
        if xor_mask == 0 {
            return Err(AesError::ZeroMask);
        }
        if table.index >= 4 {
            return Err(AesError::NoSuchTable(table));
        }
        Ok(Self { table, entry, xor_mask })
    }

    /// Byte lanes (0 = most significant) touched by the mask.
    pub fn lanes(&self) -> impl Iterator<Item = u8> + '_ {
        (0..4u8).filter(|l| self.xor_mask & (0xff00_0000 >> (8 * l)) != 0)
    }

    /// Whether the last-round lookup of this entry keeps any faulted bit.
    pub fn visible_in_last_round(&self) -> bool {
        self.lanes().any(|l| l == self.table.last_round_row())
    }
}

impl fmt::Display for PersistentFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]^{:08x}", self.table, self.entry, self.xor_mask)
    }
}

impl TTableSet {
    /// Returns a copy with `fault` applied; exactly one word changes.
    pub fn inject_fault(&self, fault: &PersistentFault) -> Result<TTableSet, AesError> {
        let mut out = self.clone();
        let t = out.table_mut(fault.table).ok_or(AesError::NoSuchTable(fault.table))?;
        t[fault.entry as usize] ^= fault.xor_mask;
        Ok(out)
    }

    /// Undoes `fault`. Fails when the entry does not currently hold the
    /// derived value XOR the fault mask.
    pub fn clear_fault(&self, fault: &PersistentFault) -> Result<TTableSet, AesError> {
        let current = self.entry(fault.table, fault.entry).ok_or(AesError::NoSuchTable(fault.table))?;
        if current ^ fault.xor_mask != pristine_entry(fault.table, fault.entry) {
            return Err(AesError::FaultNotPresent(*fault));
        }
        self.inject_fault(fault)
    }
}

/// One row of the observed-flip catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservedFlip {
    pub number: u8,
    /// Hammering time until the flip appeared.
    pub minutes: u32,
    pub table: u8,
    /// Index as printed in the catalogue.
    pub listed_index: u8,
    /// Index whose derived word equals `before`.
    pub entry: u8,
    pub before: u32,
    pub after: u32,
}

impl ObservedFlip {
    pub fn fault(&self) -> PersistentFault {
        PersistentFault { table: TableId::te(self.table), entry: self.entry, xor_mask: self.before ^ self.after }
    }
}

const fn row(
    number: u8,
    minutes: u32,
    table: u8,
    listed_index: u8,
    entry: u8,
    before: u32,
    after: u32,
) -> ObservedFlip {
    ObservedFlip { number, minutes, table, listed_index, entry, before, after }
}

/// Flips induced in OpenSSL's encryption tables on a DDR3 and a DDR4 system.
///
/// Rows 4 and 5 list indices 38 and 87, but the printed words are the
/// derived values at 34 and 89; `entry` holds the index that matches.
pub const OBSERVED_FLIPS: [ObservedFlip; 8] = [
    row(1, 1035, 1, 139, 139, 0x477a_3d3d, 0x47fa_3d3d),
    row(2, 538, 0, 25, 25, 0xb3d4_d467, 0xa3d4_d467),
    row(3, 224, 1, 254, 254, 0xd66d_bbbb, 0xc66d_bbbb),
    row(4, 3623, 1, 38, 34, 0xae3d_9393, 0xae3d_9193),
    row(5, 12, 3, 87, 89, 0xcbcb_468d, 0xcbcb_460d),
    row(6, 105, 3, 148, 148, 0x2222_6644, 0x0222_6644),
    row(7, 256, 1, 88, 88, 0xbed4_6a6a, 0xbed4_2a6a),
    row(8, 67, 1, 193, 193, 0x88f0_7878, 0x88f0_7868),
];

/// Row `number` (1-based) of [`OBSERVED_FLIPS`].
pub fn observed_flip(number: u8) -> Option<&'static ObservedFlip> {
    OBSERVED_FLIPS.iter().find(|r| r.number == number)
}
