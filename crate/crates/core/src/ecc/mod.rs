//! ECC-protected tables leak through correction latency: a faulty word is
//! fixed transparently, but the fix costs far more than a normal read, and
//! a cache probe tells which round paid for it.

mod oracle;
mod scan;
mod stats;
mod tgeom;

use thiserror::Error;

use crate::aes::{AesError, PersistentFault, TableId};

pub use oracle::{EccConfig, EccOracle, EncryptionObservation, RoundVisibility};
pub use scan::{
    find_quiet_plaintext, recover_first_round_key, scan_byte, FirstRoundKey, ScanResult, ScanStep, QUIET_RETRY_BUDGET,
};
pub use stats::{
    histogram_from_rows, quiet_fraction, read_restart_csv, restart_statistics, write_campaign_log, write_restart_csv,
    CampaignRecord, RestartRow, RestartStatistics,
};
pub use tgeom::{
    analytic_probs, scan_restart_expectation, scan_step_fault_rate, tgeom_mean, tgeom_pdf, AnalyticProbs, TGeomParams,
    ACCESSES_PER_TABLE, FRESH_ACCESSES_PER_SCAN_STEP,
};

#[derive(Debug, Error)]
pub enum EccError {
    #[error("correction overhead must be at least 100x the base access cost: {0:?}")]
    InvalidConfig(EccConfig),
    #[error("truncated geometric needs 0 < p < 1 and d >= 2, got p={p} d={d}")]
    InvalidTGeom { p: f64, d: u32 },
    #[error("fault {0} targets a table the victim does not have")]
    TableAbsent(PersistentFault),
    #[error("no fault has been placed")]
    NoFault,
    #[error("no quiet plaintext within {0} probes")]
    QuietBudgetExhausted(usize),
    #[error("position {position} is not read from {table} in round 1")]
    PositionNotServed { position: usize, table: TableId },
    #[error("a correction happened but its round is not observable")]
    RoundUnobservable,
    #[error("scan of position {position} ended without a round-1 correction")]
    ScanExhausted { position: usize },
    #[error("at least one trial is required")]
    NoTrials,
    #[error(transparent)]
    Aes(#[from] AesError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for EccError {
    fn eq(&self, other: &Self) -> bool {
        use EccError::*;
        match (self, other) {
            (InvalidConfig(a), InvalidConfig(b)) => a == b,
            (InvalidTGeom { p: a, d: x }, InvalidTGeom { p: b, d: y }) => a == b && x == y,
            (TableAbsent(a), TableAbsent(b)) => a == b,
            (QuietBudgetExhausted(a), QuietBudgetExhausted(b)) => a == b,
            (PositionNotServed { position: a, table: x }, PositionNotServed { position: b, table: y }) => {
                a == b && x == y
            }
            (ScanExhausted { position: a }, ScanExhausted { position: b }) => a == b,
            (Aes(a), Aes(b)) => a == b,
            (NoFault, NoFault) | (RoundUnobservable, RoundUnobservable) | (NoTrials, NoTrials) => true,
            _ => false,
        }
    }
}
