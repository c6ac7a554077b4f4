//! DRAM address mapping, row-conflict timing, same-bank binning and a
//! reproducible Rowhammer cell model.

mod binning;
mod geometry;
mod hammer;
mod timing;

use thiserror::Error;

pub use binning::{
    bin_partition, score_partition, write_bins_csv, Bin, BinPartition, BinPartitionConfig, PartitionScore,
};
pub use geometry::{DramCoord, DramGeometry, PAGE_SIZE};
pub use hammer::{
    hammer, template_bins, Aggressors, Flip, TemplateConfig, TemplateHit, TemplateOutcome, VulnerabilityConfig,
    VulnerabilityMap, VulnerableCell,
};
pub use timing::{calibrate_threshold, paired_access_latency, LatencyOracle, SimulatedDram, TimingModel};

#[derive(Debug, Error)]
pub enum DramError {
    #[error("invalid geometry: {0}")]
    BadGeometry(String),
    #[error("address {0:#x} outside the simulated range")]
    AddressOutOfRange(u64),
    #[error("coordinate {0:?} outside the geometry")]
    CoordOutOfRange(DramCoord),
    #[error("invalid timing model: {0:?}")]
    BadTiming(TimingModel),
    #[error("misclassification rate must lie in (0, 0.5), got {0}")]
    BadErrorRate(f64),
    #[error("no pages to partition")]
    NoPages,
    #[error("invalid bin partition settings: {0:?}")]
    BadBinConfig(BinPartitionConfig),
    #[error("invalid vulnerability settings: {0:?}")]
    BadVulnerabilityConfig(VulnerabilityConfig),
    #[error("aggressor rows must be distinct rows of one bank: {0:?}")]
    BadAggressors(Aggressors),
    #[error("invalid templating settings: {0:?}")]
    BadTemplateConfig(TemplateConfig),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PartialEq for DramError {
    fn eq(&self, other: &Self) -> bool {
        use DramError::*;
        match (self, other) {
            (BadGeometry(a), BadGeometry(b)) => a == b,
            (AddressOutOfRange(a), AddressOutOfRange(b)) => a == b,
            (CoordOutOfRange(a), CoordOutOfRange(b)) => a == b,
            (BadAggressors(a), BadAggressors(b)) => a == b,
            (NoPages, NoPages) => true,
            _ => false,
        }
    }
}
