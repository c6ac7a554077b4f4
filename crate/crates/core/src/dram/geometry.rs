use serde::{Deserialize, Serialize};

use super::DramError;
use crate::mem::Frame;

pub const PAGE_SIZE: u64 = 4096;

/// Physical address layout: column bits at the bottom, row bits from
/// `row_shift` up, and each bank bit the XOR of a set of address bits.
///
/// Every bank function must contain exactly one "pivot" bit between the
/// column and row fields, all other bits in row positions. That keeps the
/// mapping a bijection and makes it invertible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DramGeometry {
    pub n_banks: u32,
    pub column_bits: u8,
    pub bank_fn: Vec<Vec<u8>>,
    pub row_shift: u8,
    pub row_bits: u8,
}

impl Default for DramGeometry {
    /// 16 banks, 4 KiB rows and 2^14 rows per bank; bank bit `i` is address
    /// bit `12 + i` XOR row bit `i`.
    fn default() -> Self {
        Self {
            n_banks: 16,
            column_bits: 12,
            bank_fn: vec![vec![12, 16], vec![13, 17], vec![14, 18], vec![15, 19]],
            row_shift: 16,
            row_bits: 14,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DramCoord {
    pub bank: u32,
    pub row: u32,
    pub column: u32,
}

impl DramGeometry {
    pub fn validate(&self) -> Result<(), DramError> {
        let bad = |why: &str| Err(DramError::BadGeometry(why.to_string()));
        if self.bank_fn.len() >= 32 || 1u32 << self.bank_fn.len() != self.n_banks {
            return bad("n_banks must equal 2^(number of bank functions)");
        }
        if self.row_shift as u32 + self.row_bits as u32 > 48 || self.row_bits == 0 {
            return bad("row field out of range");
        }
        let pivots: Vec<u8> = self
            .bank_fn
            .iter()
            .filter_map(|set| {
                let mid: Vec<u8> =
                    set.iter().copied().filter(|&b| b >= self.column_bits && b < self.row_shift).collect();
                let rest_ok = set.iter().all(|&b| {
                    (b >= self.column_bits && b < self.row_shift) || (b >= self.row_shift && b < self.row_end())
                });
                (mid.len() == 1 && rest_ok).then(|| mid[0])
            })
            .collect();
        if pivots.len() != self.bank_fn.len() {
            return bad("each bank function needs one pivot bit below the row field, the rest row bits");
        }
        let mut sorted = pivots.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != pivots.len() || sorted.len() != (self.row_shift - self.column_bits) as usize {
            return bad("pivot bits must be distinct and fill the gap between column and row fields");
        }
        Ok(())
    }

    fn row_end(&self) -> u8 {
        self.row_shift + self.row_bits
    }

    pub fn rows_per_bank(&self) -> u32 {
        1 << self.row_bits
    }

    pub fn row_size(&self) -> u64 {
        1 << self.column_bits
    }

    /// Size of the simulated physical address space.
    pub fn capacity(&self) -> u64 {
        1u64 << self.row_end()
    }

    pub fn map_address(&self, addr: u64) -> Result<DramCoord, DramError> {
        if addr >= self.capacity() {
            return Err(DramError::AddressOutOfRange(addr));
        }
        let bank = self
            .bank_fn
            .iter()
            .enumerate()
            .map(|(i, set)| (set.iter().map(|&b| (addr >> b) as u32 & 1).fold(0, |a, x| a ^ x)) << i)
            .sum();
        Ok(DramCoord {
            bank,
            row: (addr >> self.row_shift) as u32 & (self.rows_per_bank() - 1),
            column: addr as u32 & ((1 << self.column_bits) - 1),
        })
    }

    /// Inverse of [`Self::map_address`].
    pub fn compose(&self, c: DramCoord) -> Result<u64, DramError> {
        if c.bank >= self.n_banks || c.row >= self.rows_per_bank() || c.column as u64 >= self.row_size() {
            return Err(DramError::CoordOutOfRange(c));
        }
        let mut addr = ((c.row as u64) << self.row_shift) | c.column as u64;
        for (i, set) in self.bank_fn.iter().enumerate() {
            let pivot = *set.iter().find(|&&b| b < self.row_shift).expect("validated");
            let others = set.iter().filter(|&&b| b != pivot).map(|&b| (addr >> b) & 1).fold(0, |a, x| a ^ x);
            addr |= ((c.bank as u64 >> i) & 1 ^ others) << pivot;
        }
        Ok(addr)
    }

    /// Bank and row of a page, taken from its base address.
    pub fn page_coord(&self, page: Frame) -> Result<DramCoord, DramError> {
        self.map_address(page * PAGE_SIZE)
    }
}
