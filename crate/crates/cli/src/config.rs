//! Experiment configuration: one optional TOML table per scenario.

use std::fmt;
use std::path::Path;

use anyhow::{bail, Context};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use rowfault::aes::{PersistentFault, TableId, TableStyle};
use rowfault::dram::{BinPartitionConfig, DramGeometry, TemplateConfig, TimingModel, VulnerabilityConfig};
use rowfault::ecc::{EccConfig, TGeomParams};
use rowfault::mem::SteerConfig;
use rowfault::pipeline::PipelineConfig;
use rowfault::recovery::ScoreCombine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    Tables,
    Drpfa,
    Pfa,
    EccAttack,
    EccStats,
    Binpart,
    Steer,
    Template,
    E2e,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TablesParams {
    /// Random known-answer vectors to emit.
    pub vectors: usize,
}

impl Default for TablesParams {
    fn default() -> Self {
        Self { vectors: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrpfaParams {
    /// Row of the observed-flip catalogue to inject, unless `fault` is set.
    pub flip: u8,
    pub fault: Option<PersistentFault>,
    pub style: TableStyle,
    pub corpus_size: usize,
    pub wrong_candidates: usize,
    /// Prefix increment of the convergence series.
    pub step: usize,
    pub combine: ScoreCombine,
    pub diagonals: Vec<u8>,
}

impl Default for DrpfaParams {
    fn default() -> Self {
        Self {
            flip: 7,
            fault: None,
            style: TableStyle::SharedTables,
            corpus_size: 20_000,
            wrong_candidates: 4096,
            step: 500,
            combine: ScoreCombine::default(),
            diagonals: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfaParams {
    pub corpus_size: usize,
    /// Catalogue row injected into shared tables.
    pub shared_flip: u8,
    /// Fault in a primed table of the separate-last-round layout.
    pub separate_fault: PersistentFault,
}

impl Default for PfaParams {
    fn default() -> Self {
        Self {
            corpus_size: 100_000,
            shared_flip: 7,
            separate_fault: PersistentFault { table: TableId::primed(3), entry: 0x4d, xor_mask: 0x0004_0000 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EccAttackParams {
    /// Independent full-key recoveries.
    pub runs: u32,
    /// Single-byte scan campaigns for the restart mean.
    pub campaigns: u32,
    /// Bit flipped in each scheduled table entry.
    pub xor_mask: u32,
    pub ecc: EccConfig,
}

impl Default for EccAttackParams {
    fn default() -> Self {
        Self { runs: 100, campaigns: 200, xor_mask: 0x0001_0000, ecc: EccConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EccStatsParams {
    pub n_trials: u32,
    pub quiet_trials: u32,
    pub tgeom: TGeomParams,
    pub ecc: EccConfig,
}

impl Default for EccStatsParams {
    fn default() -> Self {
        Self { n_trials: 500, quiet_trials: 10_000, tgeom: TGeomParams::default(), ecc: EccConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinpartParams {
    pub pages: usize,
    /// Pages drawn at random from this many frames; 0 takes frames
    /// `0..pages` in order.
    pub frame_range: u64,
    pub geometry: DramGeometry,
    pub timing: TimingModel,
    pub error_rate: Option<f64>,
    pub binning: BinPartitionConfig,
}

impl Default for BinpartParams {
    fn default() -> Self {
        Self {
            pages: 1024,
            frame_range: 0,
            geometry: DramGeometry::default(),
            timing: TimingModel::default(),
            error_rate: None,
            binning: BinPartitionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteerParams {
    #[serde(flatten)]
    pub steer: SteerConfig,
    /// Consecutive seeds to run, starting at the run seed.
    pub sweep: u32,
}

impl Default for SteerParams {
    fn default() -> Self {
        Self { steer: SteerConfig::default(), sweep: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateParams {
    pub pages: usize,
    pub geometry: DramGeometry,
    pub vulnerability: VulnerabilityConfig,
    pub template: TemplateConfig,
}

impl Default for TemplateParams {
    fn default() -> Self {
        Self {
            pages: 1024,
            geometry: DramGeometry::default(),
            vulnerability: VulnerabilityConfig { cells_per_row: 1.0 / 64.0, ..Default::default() },
            template: TemplateConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct E2eParams {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    /// `false` leaves the vulnerability map exactly as generated.
    pub plant_cell: bool,
}

impl Default for E2eParams {
    fn default() -> Self {
        Self { pipeline: PipelineConfig::default(), plant_cell: true }
    }
}

impl E2eParams {
    pub fn resolved(&self) -> PipelineConfig {
        let mut cfg = self.pipeline.clone();
        if !self.plant_cell {
            cfg.plant = None;
        }
        cfg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the scenario named on the command line when present.
    pub scenario: Option<Scenario>,
    /// Used when no seed is given on the command line.
    pub seed: Option<u64>,
    pub tables: TablesParams,
    pub drpfa: DrpfaParams,
    pub pfa: PfaParams,
    pub ecc_attack: EccAttackParams,
    pub ecc_stats: EccStatsParams,
    pub binpart: BinpartParams,
    pub steer: SteerParams,
    pub template: TemplateParams,
    pub e2e: E2eParams,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).context("invalid experiment config")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// The parameter block of `scenario`, for the report.
    pub fn section(&self, scenario: Scenario) -> serde_json::Value {
        let v = match scenario {
            Scenario::Tables => serde_json::to_value(&self.tables),
            Scenario::Drpfa => serde_json::to_value(&self.drpfa),
            Scenario::Pfa => serde_json::to_value(&self.pfa),
            Scenario::EccAttack => serde_json::to_value(&self.ecc_attack),
            Scenario::EccStats => serde_json::to_value(&self.ecc_stats),
            Scenario::Binpart => serde_json::to_value(&self.binpart),
            Scenario::Steer => serde_json::to_value(&self.steer),
            Scenario::Template => serde_json::to_value(&self.template),
            Scenario::E2e => serde_json::to_value(&self.e2e),
        };
        v.expect("config types serialize")
    }

    pub fn check_scenario(&self, requested: Scenario) -> anyhow::Result<()> {
        match self.scenario {
            Some(s) if s != requested => bail!("config is for scenario {s}, but {requested} was requested"),
            _ => Ok(()),
        }
    }
}
