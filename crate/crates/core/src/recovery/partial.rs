//! Peeling the last round and the round-9 MixColumns off a ciphertext.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aes::{gmul, INV_SBOX};

/// A guess for the four last-round key bytes that inverse ShiftRows gathers
/// into one state column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChunkGuess {
    /// 0..=3, the column the bytes land in.
    pub diagonal: u8,
    /// Key bytes in row order.
    pub bytes: [u8; 4],
}

impl ChunkGuess {
    pub fn new(diagonal: u8, bytes: [u8; 4]) -> Self {
        assert!(diagonal < 4, "diagonal out of range");
        Self { diagonal, bytes }
    }

    pub fn from_value(diagonal: u8, value: u32) -> Self {
        Self::new(diagonal, value.to_be_bytes())
    }

    /// The correct chunk of a round-10 key.
    pub fn from_round_key(diagonal: u8, k10: &[u8; 16]) -> Self {
        let pos = diagonal_positions(diagonal);
        Self::new(diagonal, pos.map(|p| k10[p]))
    }

    pub fn value(&self) -> u32 {
        u32::from_be_bytes(self.bytes)
    }
}

impl fmt::Display for ChunkGuess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}@{}", self.value(), self.diagonal)
    }
}

/// Ciphertext positions that inverse ShiftRows moves into column `diagonal`,
/// in row order.
pub const fn diagonal_positions(diagonal: u8) -> [usize; 4] {
    let d = diagonal as usize;
    [4 * d, 4 * ((d + 3) % 4) + 1, 4 * ((d + 2) % 4) + 2, 4 * ((d + 1) % 4) + 3]
}

const INV_MIX: [[u8; 4]; 4] = [[14, 11, 13, 9], [9, 14, 11, 13], [13, 9, 14, 11], [11, 13, 9, 14]];

// INV_SUB_MIX[r][x]: InvMixColumns contribution of InvSbox[x] sitting in row r.
const fn inv_sub_mix() -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut r = 0;
    while r < 4 {
        let mut x = 0;
        while x < 256 {
            let v = INV_SBOX[x];
            t[r][x] = u32::from_be_bytes([
                gmul(INV_MIX[0][r], v),
                gmul(INV_MIX[1][r], v),
                gmul(INV_MIX[2][r], v),
                gmul(INV_MIX[3][r], v),
            ]);
            x += 1;
        }
        r += 1;
    }
    t
}

static INV_SUB_MIX: [[u32; 256]; 4] = inv_sub_mix();

/// Undoes key addition, ShiftRows and SubBytes of the last round for one
/// column, then inverse MixColumns of round 9.
///
/// For the right guess the result is the round-9 S-box output column XOR
/// `InvMixColumns(k9 column)`, a constant that leaves SEI unchanged.
#[inline]
pub fn partial_decrypt(ct: &[u8; 16], guess: &ChunkGuess) -> [u8; 4] {
    partial_decrypt_word(ct, &diagonal_positions(guess.diagonal), &guess.bytes).to_be_bytes()
}

#[inline]
pub(crate) fn partial_decrypt_word(ct: &[u8; 16], pos: &[usize; 4], key: &[u8; 4]) -> u32 {
    INV_SUB_MIX[0][(ct[pos[0]] ^ key[0]) as usize]
        ^ INV_SUB_MIX[1][(ct[pos[1]] ^ key[1]) as usize]
        ^ INV_SUB_MIX[2][(ct[pos[2]] ^ key[2]) as usize]
        ^ INV_SUB_MIX[3][(ct[pos[3]] ^ key[3]) as usize]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonals_cover_every_byte_once() {
        let mut seen = [false; 16];
        for d in 0..4 {
            for (row, p) in diagonal_positions(d).into_iter().enumerate() {
                assert_eq!(p % 4, row);
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
        assert_eq!(diagonal_positions(0), [0, 13, 10, 7]);
    }

    #[test]
    fn zero_ciphertext_zero_guess() {
        // InvSbox(0) = 0x52 in every row; InvMixColumns of a constant column
        // multiplies it by 14^11^13^9 = 1.
        let out = partial_decrypt(&[0u8; 16], &ChunkGuess::new(2, [0; 4]));
        assert_eq!(out, [0x52; 4]);
    }

    #[test]
    fn deterministic() {
        let ct: [u8; 16] = core::array::from_fn(|i| (i * 31) as u8);
        let g = ChunkGuess::from_value(1, 0xdead_beef);
        assert_eq!(partial_decrypt(&ct, &g), partial_decrypt(&ct, &g));
        assert_eq!(g.value(), 0xdead_beef);
    }
}
