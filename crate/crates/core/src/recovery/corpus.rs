use rand::Rng;

use crate::aes::{encrypt_block, expand_key128, PersistentFault, TTableSet, TableStyle};

use super::RecoveryError;

/// Ciphertexts collected while a fault was active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextCorpus {
    pub ciphertexts: Vec<[u8; 16]>,
    pub plaintexts: Option<Vec<[u8; 16]>>,
    pub fault: Option<PersistentFault>,
    pub style: TableStyle,
    /// Only known in simulation.
    pub true_key: Option<[u8; 16]>,
}

impl CiphertextCorpus {
    pub fn new(ciphertexts: Vec<[u8; 16]>, style: TableStyle) -> Result<Self, RecoveryError> {
        if ciphertexts.is_empty() {
            return Err(RecoveryError::EmptyCorpus);
        }
        Ok(Self { ciphertexts, plaintexts: None, fault: None, style, true_key: None })
    }

    /// Encrypts `n` uniformly random plaintexts under `key` with `tables`.
    pub fn collect<R: Rng + ?Sized>(
        key: &[u8; 16],
        tables: &TTableSet,
        fault: Option<PersistentFault>,
        n: usize,
        rng: &mut R,
    ) -> Self {
        let rk = expand_key128(key);
        let plaintexts: Vec<[u8; 16]> = (0..n).map(|_| rng.random()).collect();
        let ciphertexts = plaintexts.iter().map(|pt| encrypt_block(pt, &rk, tables)).collect();
        Self { ciphertexts, plaintexts: Some(plaintexts), fault, style: tables.style(), true_key: Some(*key) }
    }

    pub fn len(&self) -> usize {
        self.ciphertexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ciphertexts.is_empty()
    }

    /// First `n` records (clamped to the corpus size).
    pub fn prefix(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            ciphertexts: self.ciphertexts[..n].to_vec(),
            plaintexts: self.plaintexts.as_ref().map(|p| p[..n].to_vec()),
            fault: self.fault,
            style: self.style,
            true_key: self.true_key,
        }
    }

    pub fn true_round10_key(&self) -> Option<[u8; 16]> {
        self.true_key.map(|k| expand_key128(&k).round_key(10))
    }
}
