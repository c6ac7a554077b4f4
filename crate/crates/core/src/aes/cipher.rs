//! Instrumented T-table encryption.

use serde::{Deserialize, Serialize};

use super::key::RoundKeys;
use super::tables::{TTableSet, TableId, TableStyle, LAST_ROUND_MASKS};

/// One table lookup made during an encryption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Access {
    /// 1..=10
    pub round: u8,
    /// Position (`4·column + row`) of the state byte used as the index.
    pub position: u8,
    pub table: TableId,
    pub index: u8,
}

/// Every lookup of one encryption in architectural order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessTrace {
    pub accesses: Vec<Access>,
}

impl AccessTrace {
    pub fn len(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }

    pub fn round(&self, round: u8) -> impl Iterator<Item = &Access> {
        self.accesses.iter().filter(move |a| a.round == round)
    }

    /// First lookup of `entry` in `table`, if any.
    pub fn first_touch(&self, table: TableId, entry: u8) -> Option<&Access> {
        self.accesses.iter().find(|a| a.table == table && a.index == entry)
    }
}

/// Where an encryption reads its table words from. Implementations may
/// observe or alter each read.
pub trait TableSource {
    fn style(&self) -> TableStyle;
    fn read(&mut self, access: Access) -> u32;
}

struct Plain<'a>(&'a TTableSet);

impl TableSource for Plain<'_> {
    fn style(&self) -> TableStyle {
        self.0.style()
    }

    #[inline]
    fn read(&mut self, a: Access) -> u32 {
        self.0.table(a.table).expect("table missing for style")[a.index as usize]
    }
}

struct Traced<'a> {
    tables: &'a TTableSet,
    trace: AccessTrace,
}

impl TableSource for Traced<'_> {
    fn style(&self) -> TableStyle {
        self.tables.style()
    }

    fn read(&mut self, a: Access) -> u32 {
        self.trace.accesses.push(a);
        self.tables.table(a.table).expect("table missing for style")[a.index as usize]
    }
}

/// Encrypts one block, pulling every table word through `src`.
///
/// Output column `c` of a round combines row `i` of input column `c + i`,
/// looked up in the table for that row; the last round keeps one byte lane
/// of each lookup.
pub fn encrypt_with<S: TableSource + ?Sized>(src: &mut S, pt: &[u8; 16], rk: &RoundKeys) -> [u8; 16] {
    let style = src.style();
    let k0 = rk.round_words(0);
    let mut s = [0u32; 4];
    for c in 0..4 {
        s[c] = u32::from_be_bytes(pt[4 * c..4 * c + 4].try_into().unwrap()) ^ k0[c];
    }
    for round in 1..=10u8 {
        let k = rk.round_words(round as usize);
        let mut t = [0u32; 4];
        for c in 0..4 {
            let mut acc = k[c];
            for row in 0..4 {
                let col = (c + row) % 4;
                let index = (s[col] >> (24 - 8 * row)) as u8;
                let access = Access {
                    round,
                    position: (4 * col + row) as u8,
                    table: TableId::for_lookup(style, round, row as u8),
                    index,
                };
                let mut word = src.read(access);
                if round == 10 {
                    word &= LAST_ROUND_MASKS[row];
                }
                acc ^= word;
            }
            t[c] = acc;
        }
        s = t;
    }
    let mut ct = [0u8; 16];
    for c in 0..4 {
        ct[4 * c..4 * c + 4].copy_from_slice(&s[c].to_be_bytes());
    }
    ct
}

/// Encrypts and records all 160 lookups.
pub fn encrypt(pt: &[u8; 16], rk: &RoundKeys, tables: &TTableSet) -> ([u8; 16], AccessTrace) {
    let mut src = Traced { tables, trace: AccessTrace { accesses: Vec::with_capacity(160) } };
    let ct = encrypt_with(&mut src, pt, rk);
    (ct, src.trace)
}

/// Encrypts without recording a trace.
pub fn encrypt_block(pt: &[u8; 16], rk: &RoundKeys, tables: &TTableSet) -> [u8; 16] {
    encrypt_with(&mut Plain(tables), pt, rk)
}
