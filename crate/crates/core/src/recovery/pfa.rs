//! Classic last-round persistent fault analysis.
//!
//! A fault in the S-box lane of a last-round lookup turns `S[x]` into
//! `S[x] ^ δ`, so `S[x] ^ k` never appears at the ciphertext bytes that
//! lookup produces. The missing value reveals the key byte.

use serde::{Deserialize, Serialize};

use crate::aes::PersistentFault;

use super::{CiphertextCorpus, RecoveryError};

/// Default minimum corpus size.
pub const PFA_MIN_CORPUS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfaByte {
    pub position: u8,
    /// `Some` only when exactly one ciphertext value never occurred.
    pub key_byte: Option<u8>,
    pub empty_bins: usize,
    /// Gap between the rarest and second-rarest value, relative to the mean
    /// count. Near 1 for a clean recovery, near 0 without bias.
    pub confidence: f64,
    /// The over-represented value agrees with the faulty word.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaResult {
    /// Bytes produced by the faulted table in the last round.
    pub served: Vec<PfaByte>,
}

impl PfaResult {
    /// All 16 positions, `None` where the fault gives no information.
    pub fn key_bytes(&self) -> [Option<u8>; 16] {
        let mut out = [None; 16];
        for b in &self.served {
            out[b.position as usize] = b.key_byte;
        }
        out
    }

    pub fn recovered_any(&self) -> bool {
        self.served.iter().any(|b| b.key_byte.is_some())
    }
}

/// Runs last-round PFA for `fault`, whose entry held `original` before the
/// flip and `faulty` after. Only ciphertext positions fed by the faulted
/// table in the last round are analysed.
pub fn pfa_last_round(
    corpus: &CiphertextCorpus,
    fault: &PersistentFault,
    original: u32,
    faulty: u32,
    min_corpus: usize,
) -> Result<PfaResult, RecoveryError> {
    if corpus.len() < min_corpus.max(1) {
        return Err(RecoveryError::CorpusTooSmall { have: corpus.len(), need: min_corpus.max(1) });
    }
    let row = fault.table.last_round_row() as usize;
    let shift = 24 - 8 * row;
    let s_orig = (original >> shift) as u8;
    let s_faulty = (faulty >> shift) as u8;
    let mean = corpus.len() as f64 / 256.0;
    let served = (0..4)
        .map(|col| {
            let position = 4 * col + row;
            let mut h = [0u32; 256];
            for ct in &corpus.ciphertexts {
                h[ct[position] as usize] += 1;
            }
            let empty: Vec<usize> = (0..256).filter(|&v| h[v] == 0).collect();
            let mut sorted = h;
            sorted.sort_unstable();
            let confidence = (sorted[1] - sorted[0]) as f64 / mean;
            let key_byte = (empty.len() == 1).then(|| empty[0] as u8 ^ s_orig);
            let consistent = key_byte.is_some_and(|k| {
                let max = h.iter().max().copied().unwrap_or(0);
                h[(s_faulty ^ k) as usize] == max
            });
            PfaByte { position: position as u8, key_byte, empty_bins: empty.len(), confidence, consistent }
        })
        .collect();
    Ok(PfaResult { served })
}
