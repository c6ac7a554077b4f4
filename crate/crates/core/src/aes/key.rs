//! AES-128 key schedule and its inversion from the last round key.

use super::tables::SBOX;
use super::AesError;

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

/// The 44 schedule words of AES-128.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundKeys {
    words: [u32; 44],
}

fn sub_rot(w: u32) -> u32 {
    let b = w.rotate_left(8).to_be_bytes();
    u32::from_be_bytes(b.map(|x| SBOX[x as usize]))
}

impl RoundKeys {
    pub fn words(&self) -> &[u32; 44] {
        &self.words
    }

    /// Key words `4r..4r+4`.
    pub fn round_words(&self, round: usize) -> [u32; 4] {
        let w = &self.words[4 * round..4 * round + 4];
        [w[0], w[1], w[2], w[3]]
    }

    /// Round key `round` (0..=10) as bytes in state order.
    pub fn round_key(&self, round: usize) -> [u8; 16] {
        let mut out = [0u8; 16];
        for (c, w) in self.round_words(round).iter().enumerate() {
            out[4 * c..4 * c + 4].copy_from_slice(&w.to_be_bytes());
        }
        out
    }
}

/// Expands a 16-byte key.
pub fn expand_key(key: &[u8]) -> Result<RoundKeys, AesError> {
    let key: &[u8; 16] = key.try_into().map_err(|_| AesError::KeyLength(key.len()))?;
    Ok(expand_key128(key))
}

pub fn expand_key128(key: &[u8; 16]) -> RoundKeys {
    let mut words = [0u32; 44];
    for (i, chunk) in key.chunks_exact(4).enumerate() {
        words[i] = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    for i in 4..44 {
        let mut t = words[i - 1];
        if i % 4 == 0 {
            t = sub_rot(t) ^ ((RCON[i / 4 - 1] as u32) << 24);
        }
        words[i] = words[i - 4] ^ t;
    }
    RoundKeys { words }
}

/// Runs the schedule backwards from the round-10 key to the master key.
pub fn recover_master_key(k10: &[u8; 16]) -> [u8; 16] {
    let mut words = [0u32; 44];
    for (i, chunk) in k10.chunks_exact(4).enumerate() {
        words[40 + i] = u32::from_be_bytes(chunk.try_into().unwrap());
    }
    for i in (4..44).rev() {
        let mut t = words[i - 1];
        if i % 4 == 0 {
            t = sub_rot(t) ^ ((RCON[i / 4 - 1] as u32) << 24);
        }
        words[i - 4] = words[i] ^ t;
    }
    let mut out = [0u8; 16];
    for i in 0..4 {
        out[4 * i..4 * i + 4].copy_from_slice(&words[i].to_be_bytes());
    }
    out
}
