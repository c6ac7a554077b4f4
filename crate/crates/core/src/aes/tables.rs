//! Lookup tables for T-table AES-128.
//!
//! Words use a big-endian byte convention: byte 0 is the most significant
//! byte, so `Te0[0x00]` prints as `c66363a5` (bytes `2·S, S, S, 3·S`).

use std::fmt;

use serde::{Deserialize, Serialize};

/// The AES S-box.
pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76, 0xca, 0x82, 0xc9,
    0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f,
    0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15, 0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07,
    0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3,
    0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58,
    0xcf, 0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3,
    0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec, 0x5f,
    0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73, 0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88,
    0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac,
    0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a,
    0xae, 0x08, 0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a, 0x70,
    0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1, 0xf8, 0x98, 0x11,
    0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf, 0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42,
    0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// Inverse of [`SBOX`].
pub const INV_SBOX: [u8; 256] = invert(&SBOX);

const fn invert(s: &[u8; 256]) -> [u8; 256] {
    let mut out = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        out[s[i] as usize] = i as u8;
        i += 1;
    }
    out
}

/// Multiplication by `x` in GF(2^8) modulo the AES polynomial.
pub const fn xtime(x: u8) -> u8 {
    (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 }
}

/// General GF(2^8) multiplication.
pub const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    acc
}

/// Byte-lane masks applied to the four last-round lookups of an output word,
/// indexed by the output row.
pub const LAST_ROUND_MASKS: [u32; 4] = [0xff00_0000, 0x00ff_0000, 0x0000_ff00, 0x0000_00ff];

/// How the last round is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableStyle {
    /// One set of four tables serves every round; the last round masks three
    /// of the four bytes of each lookup (OpenSSL layout).
    SharedTables,
    /// Rounds 1..=9 use the main tables, the last round reads a separate set
    /// of primed tables (Libgcrypt layout).
    SeparateLastRound,
}

/// Identifies one of the eight possible tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableId {
    pub index: u8,
    /// `true` for the primed last-round table `Te'index`.
    pub last_round: bool,
}

impl TableId {
    pub const fn te(index: u8) -> Self {
        assert!(index < 4);
        Self { index, last_round: false }
    }

    pub const fn primed(index: u8) -> Self {
        assert!(index < 4);
        Self { index, last_round: true }
    }

    /// Table used at `round` (1..=10) for a state byte in `row`.
    pub const fn for_lookup(style: TableStyle, round: u8, row: u8) -> Self {
        if round < 10 {
            Self::te(row)
        } else {
            let index = (row + 2) % 4;
            match style {
                TableStyle::SharedTables => Self::te(index),
                TableStyle::SeparateLastRound => Self::primed(index),
            }
        }
    }

    /// State row this table serves in the last round.
    pub const fn last_round_row(self) -> u8 {
        (self.index + 2) % 4
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Te{}{}", self.index, if self.last_round { "'" } else { "" })
    }
}

/// Fault-free value of an entry, computed from the S-box.
pub const fn pristine_entry(table: TableId, entry: u8) -> u32 {
    let s = SBOX[entry as usize];
    if table.last_round {
        return u32::from_be_bytes([s, s, s, s]);
    }
    let te0 = u32::from_be_bytes([xtime(s), s, s, xtime(s) ^ s]);
    te0.rotate_right(8 * table.index as u32)
}

/// The four T-tables plus, for [`TableStyle::SeparateLastRound`], the four
/// primed last-round tables.
#[derive(Clone, PartialEq, Eq)]
pub struct TTableSet {
    style: TableStyle,
    te: Box<[[u32; 256]; 4]>,
    last_round: Option<Box<[[u32; 256]; 4]>>,
}

impl fmt::Debug for TTableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TTableSet")
            .field("style", &self.style)
            .field("te0[0]", &format_args!("{:08x}", self.te[0][0]))
            .field("last_round", &self.last_round.is_some())
            .finish()
    }
}

fn build(primed: bool) -> Box<[[u32; 256]; 4]> {
    let mut t = Box::new([[0u32; 256]; 4]);
    for (j, table) in t.iter_mut().enumerate() {
        let id = TableId { index: j as u8, last_round: primed };
        for (x, word) in table.iter_mut().enumerate() {
            *word = pristine_entry(id, x as u8);
        }
    }
    t
}

impl TTableSet {
    /// Fault-free tables for `style`.
    pub fn derive(style: TableStyle) -> Self {
        let last_round = match style {
            TableStyle::SharedTables => None,
            TableStyle::SeparateLastRound => Some(build(true)),
        };
        Self { style, te: build(false), last_round }
    }

    pub fn style(&self) -> TableStyle {
        self.style
    }

    pub fn te(&self, index: usize) -> &[u32; 256] {
        &self.te[index]
    }

    pub fn last_round(&self, index: usize) -> Option<&[u32; 256]> {
        self.last_round.as_ref().map(|t| &t[index])
    }

    pub fn has_table(&self, table: TableId) -> bool {
        table.index < 4 && (!table.last_round || self.last_round.is_some())
    }

    /// Current value of an entry, `None` when the table does not exist in
    /// this style.
    pub fn entry(&self, table: TableId, entry: u8) -> Option<u32> {
        self.table(table).map(|t| t[entry as usize])
    }

    pub(crate) fn table(&self, table: TableId) -> Option<&[u32; 256]> {
        if table.index >= 4 {
            return None;
        }
        if table.last_round {
            self.last_round.as_ref().map(|t| &t[table.index as usize])
        } else {
            Some(&self.te[table.index as usize])
        }
    }

    pub(crate) fn table_mut(&mut self, table: TableId) -> Option<&mut [u32; 256]> {
        if table.index >= 4 {
            return None;
        }
        if table.last_round {
            self.last_round.as_mut().map(|t| &mut t[table.index as usize])
        } else {
            Some(&mut self.te[table.index as usize])
        }
    }

    /// Tables serialised as they sit in memory on a little-endian host:
    /// Te0..Te3 back to back, 1024 bytes each.
    pub fn main_tables_image(&self) -> Vec<u8> {
        self.te.iter().flatten().flat_map(|w| w.to_le_bytes()).collect()
    }

    /// Entries that differ from the derived tables, as `(table, entry, xor)`.
    pub fn diff_from_pristine(&self) -> Vec<(TableId, u8, u32)> {
        let mut out = Vec::new();
        let primed = [false, true];
        for last_round in primed {
            for index in 0..4u8 {
                let id = TableId { index, last_round };
                let Some(t) = self.table(id) else { continue };
                for (x, &w) in t.iter().enumerate() {
                    let diff = w ^ pristine_entry(id, x as u8);
                    if diff != 0 {
                        out.push((id, x as u8, diff));
                    }
                }
            }
        }
        out
    }
}
