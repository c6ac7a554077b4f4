//! Monte Carlo restart counts against the truncated geometric model.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes::{PersistentFault, TableId, TableStyle};

use super::{
    find_quiet_plaintext, scan_byte, tgeom_mean, tgeom_pdf, EccConfig, EccError, EccOracle, RoundVisibility,
    TGeomParams, QUIET_RETRY_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartRow {
    pub restarts: u32,
    pub empirical_freq: f64,
    pub tgeom_pdf: f64,
}

/// One encryption of a scan campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub trial: u32,
    pub scanned_value: u8,
    pub correction_round: Option<u8>,
    pub restarted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStatistics {
    pub n_trials: u32,
    pub seed: u64,
    /// Restarts of each trial in trial order.
    pub restarts: Vec<u32>,
    pub empirical_mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub empirical_std: f64,
    /// `histogram[h]` trials needed exactly `h` restarts.
    pub histogram: Vec<u32>,
    pub tgeom: TGeomParams,
    pub tgeom_mean: f64,
    pub rows: Vec<RestartRow>,
    /// Fraction of non-winning scan encryptions that hit the fault in a
    /// later round, next to the model's per-encryption rate.
    pub empirical_fault_rate: f64,
    pub quiet_probes: u64,
}

impl RestartStatistics {
    /// Standard error of the empirical mean.
    pub fn standard_error(&self) -> f64 {
        self.empirical_std / (self.n_trials as f64).sqrt()
    }
}

struct Trial {
    restarts: u32,
    later_faults: u32,
    non_winning: u32,
    probes: u64,
    records: Vec<CampaignRecord>,
}

fn run_trial(trial: u32, seed: u64, cfg: EccConfig) -> Result<Trial, EccError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let key: [u8; 16] = rng.random();
    let t: u8 = rng.random();
    let position = 4 * rng.random_range(0..4usize);
    let mask = 1u32 << rng.random_range(0..32);
    let mut oracle = EccOracle::new(&key, TableStyle::SharedTables, cfg, RoundVisibility::Exact)?;
    let fault = PersistentFault::new(TableId::te(0), t, mask)?;
    oracle.place_fault(fault)?;
    let base = find_quiet_plaintext(&mut oracle, &mut rng, QUIET_RETRY_BUDGET)?;
    let probes = oracle.encryptions();
    let r = scan_byte(&mut oracle, &base, position, fault.table, t)?;
    debug_assert_eq!(r.recovered_key_byte, key[position]);
    let records = r
        .steps
        .iter()
        .map(|s| CampaignRecord {
            trial,
            scanned_value: s.scanned_value,
            correction_round: s.correction_round,
            restarted: s.restarted,
        })
        .collect();
    Ok(Trial { restarts: r.restarts, later_faults: r.restarts, non_winning: r.encryptions_used - 1, probes, records })
}

/// Runs `n_trials` independent byte scans (random key, T0 fault at a random
/// entry, random row-0 position). Trial `i` draws from stream `i` of the
/// seeded generator, so results do not depend on thread count.
pub fn restart_statistics(
    n_trials: u32,
    seed: u64,
    cfg: EccConfig,
    tgeom: TGeomParams,
) -> Result<(RestartStatistics, Vec<CampaignRecord>), EccError> {
    if n_trials == 0 {
        return Err(EccError::NoTrials);
    }
    tgeom.validate()?;
    let trials: Vec<Trial> =
        (0..n_trials).into_par_iter().map(|i| run_trial(i, seed, cfg)).collect::<Result<_, _>>()?;
    let restarts: Vec<u32> = trials.iter().map(|t| t.restarts).collect();
    let n = n_trials as f64;
    let mean = restarts.iter().map(|&r| r as f64).sum::<f64>() / n;
    let std = if n_trials > 1 {
        (restarts.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let max = restarts.iter().copied().max().unwrap_or(0).max(tgeom.d - 1);
    let mut histogram = vec![0u32; max as usize + 1];
    for &r in &restarts {
        histogram[r as usize] += 1;
    }
    let rows = histogram
        .iter()
        .enumerate()
        .map(|(h, &c)| RestartRow {
            restarts: h as u32,
            empirical_freq: c as f64 / n,
            tgeom_pdf: tgeom_pdf(h as u32, &tgeom),
        })
        .collect();
    let later: u64 = trials.iter().map(|t| t.later_faults as u64).sum();
    let non_winning: u64 = trials.iter().map(|t| t.non_winning as u64).sum();
    let stats = RestartStatistics {
        n_trials,
        seed,
        restarts,
        empirical_mean: mean,
        empirical_std: std,
        histogram,
        tgeom,
        tgeom_mean: tgeom_mean(&tgeom),
        rows,
        empirical_fault_rate: if non_winning == 0 { 0.0 } else { later as f64 / non_winning as f64 },
        quiet_probes: trials.iter().map(|t| t.probes).sum(),
    };
    let log = trials.into_iter().flat_map(|t| t.records).collect();
    Ok((stats, log))
}

/// Fraction of uniformly random plaintexts that never read a Te0 fault at a
/// random entry, re-hammering after every correction.
pub fn quiet_fraction(trials: u32, seed: u64, cfg: EccConfig) -> Result<f64, EccError> {
    if trials == 0 {
        return Err(EccError::NoTrials);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key: [u8; 16] = rng.random();
    let mut oracle = EccOracle::new(&key, TableStyle::SharedTables, cfg, RoundVisibility::Exact)?;
    oracle.place_fault(PersistentFault::new(TableId::te(0), rng.random(), 1 << rng.random_range(0..32))?)?;
    let mut quiet = 0u32;
    for _ in 0..trials {
        let pt: [u8; 16] = rng.random();
        if !oracle.observe(&pt).corrected(&cfg) {
            quiet += 1;
        }
        oracle.rehammer()?;
    }
    Ok(quiet as f64 / trials as f64)
}

pub fn write_restart_csv<W: Write>(rows: &[RestartRow], out: W) -> Result<(), EccError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_restart_csv<R: Read>(input: R) -> Result<Vec<RestartRow>, EccError> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(EccError::from)).collect()
}

/// Rebuilds trial counts from CSV frequencies.
pub fn histogram_from_rows(rows: &[RestartRow], n_trials: u32) -> Vec<u32> {
    rows.iter().map(|r| (r.empirical_freq * n_trials as f64).round() as u32).collect()
}

/// One JSON object per line.
pub fn write_campaign_log<W: Write>(records: &[CampaignRecord], mut out: W) -> Result<(), EccError> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
