//! Closed-form probabilities of the ECC scan and the truncated geometric
//! restart model.

use serde::{Deserialize, Serialize};

use super::EccError;

/// Table lookups per encryption that hit one given T-table in the shared
/// layout: four per round over ten rounds.
pub const ACCESSES_PER_TABLE: i32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticProbs {
    /// No lookup of an encryption hits the faulty entry.
    pub p_none: f64,
    pub p_fault: f64,
    /// Faulty encryptions expected over a 256-value scan.
    pub expected_faulty_per_scan: f64,
    pub p_success: f64,
}

pub fn analytic_probs() -> AnalyticProbs {
    let p_none = (255.0f64 / 256.0).powi(ACCESSES_PER_TABLE);
    let p_fault = 1.0 - p_none;
    let expected = 256.0 * p_fault;
    AnalyticProbs { p_none, p_fault, expected_faulty_per_scan: expected, p_success: 1.0 / expected }
}

/// Lookups of the faulted table whose index changes when one plaintext byte
/// of an otherwise quiet block changes: one in round 2 (the other three
/// columns repeat the quiet block) and four in each of rounds 3..=10.
pub const FRESH_ACCESSES_PER_SCAN_STEP: i32 = 33;

/// Expected restarts of one byte scan: on average 127.5 values precede the
/// winner, and each fails with a later-round correction independently.
pub fn scan_restart_expectation() -> f64 {
    127.5 * scan_step_fault_rate()
}

/// Chance that a non-winning scan value triggers a later-round correction.
pub fn scan_step_fault_rate() -> f64 {
    1.0 - (255.0f64 / 256.0).powi(FRESH_ACCESSES_PER_SCAN_STEP)
}

/// Geometric distribution truncated to `1..d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TGeomParams {
    pub p: f64,
    pub d: u32,
}

impl Default for TGeomParams {
    /// The estimate for one byte scan: success rate 0.026 and a budget of 40
    /// restarts.
    fn default() -> Self {
        Self { p: 0.026, d: 40 }
    }
}

impl TGeomParams {
    pub fn new(p: f64, d: u32) -> Result<Self, EccError> {
        let params = Self { p, d };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), EccError> {
        if !(self.p > 0.0 && self.p < 1.0) || self.d < 2 {
            return Err(EccError::InvalidTGeom { p: self.p, d: self.d });
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        1.0 - self.p
    }

    pub fn support(&self) -> std::ops::Range<u32> {
        1..self.d
    }
}

/// `p·q^(h−1) / (1 − q^(d−1))` on `1..d`, zero elsewhere.
///
/// The denominator is expanded as `p·Σ q^k` and `p` cancelled, which avoids
/// the cancellation in `1 − q^(d−1)` when `p` is small.
pub fn tgeom_pdf(h: u32, params: &TGeomParams) -> f64 {
    if h == 0 || h >= params.d {
        return 0.0;
    }
    let q = params.q();
    let norm: f64 = (0..params.d - 1).map(|k| q.powi(k as i32)).sum();
    q.powi(h as i32 - 1) / norm
}

/// Mean by direct summation over the support.
pub fn tgeom_mean(params: &TGeomParams) -> f64 {
    params.support().map(|h| h as f64 * tgeom_pdf(h, params)).sum()
}
