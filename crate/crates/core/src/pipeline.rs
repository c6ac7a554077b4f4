//! The chained attack: page pool, bins, templating, frame steering, table
//! corruption and key recovery, each stage fed only by the one before.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::{
    expand_key128, pristine_entry, recover_master_key, AesError, PersistentFault, TTableSet, TableId, TableStyle,
};
use crate::dram::{
    bin_partition, hammer, score_partition, template_bins, BinPartition, BinPartitionConfig, DramError, DramGeometry,
    SimulatedDram, TemplateConfig, TemplateHit, TimingModel, VulnerabilityConfig, VulnerabilityMap, VulnerableCell,
    PAGE_SIZE,
};
use crate::mem::{
    steer, warm_up, AllocRequest, Allocator, Frame, MemError, Owner, PfcConfig, SteerOutcome, SteerRoles,
};
use crate::recovery::{
    diagonal_positions, pfa_last_round, sampled_candidates, ChunkGuess, CiphertextCorpus, Drpfa, RecoveryError,
    ScoreCombine, SeiReport, PFA_MIN_CORPUS,
};

/// Bytes of the four main tables laid out back to back.
pub const TABLES_BYTES: u64 = 4 * 256 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pool,
    Binpart,
    Template,
    Steer,
    Install,
    Rehammer,
    Corpus,
    Drpfa,
    Pfa,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned));
        f.write_str(name.as_deref().unwrap_or("?"))
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Mem(#[from] MemError),
    #[error(transparent)]
    Dram(#[from] DramError),
    #[error(transparent)]
    Aes(#[from] AesError),
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
    #[error("{0}")]
    Config(String),
}

fn at<E: Into<StageError>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError { stage, source: e.into() }
}

/// A cell added to the generated vulnerability map inside the attacker's
/// pool, so that templating is guaranteed to find something.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedCell {
    /// Byte offset within the page; decides which table word gets hit.
    pub page_offset: u32,
    pub bit: u8,
    pub threshold: u64,
}

impl Default for PlantedCell {
    /// Lands on byte 1 of Te1[88] (little-endian words): the flip listed as
    /// row 7 of [`crate::aes::OBSERVED_FLIPS`].
    fn default() -> Self {
        Self { page_offset: 1024 + 88 * 4 + 1, bit: 6, threshold: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub total_frames: u64,
    pub max_order: u8,
    pub pfc: PfcConfig,
    pub warmup_ops: usize,
    pub pool_pages: usize,
    pub geometry: DramGeometry,
    pub timing: TimingModel,
    /// Overrides `timing.noise_std` and `timing.threshold` when set.
    pub error_rate: Option<f64>,
    pub binning: BinPartitionConfig,
    pub vulnerability: VulnerabilityConfig,
    pub plant: Option<PlantedCell>,
    pub template: TemplateConfig,
    /// Interleaved allocations between the attacker's free and the victim's
    /// request.
    pub noise_allocs: usize,
    pub style: TableStyle,
    /// Victim key; drawn from the seed when absent.
    pub key: Option<[u8; 16]>,
    pub corpus_size: usize,
    pub wrong_candidates: usize,
    pub combine: ScoreCombine,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            total_frames: 1 << 14,
            max_order: 10,
            pfc: PfcConfig::default(),
            warmup_ops: 200,
            pool_pages: 1024,
            geometry: DramGeometry::default(),
            timing: TimingModel::default(),
            error_rate: None,
            binning: BinPartitionConfig::default(),
            vulnerability: VulnerabilityConfig::default(),
            plant: Some(PlantedCell::default()),
            template: TemplateConfig::default(),
            noise_allocs: 0,
            style: TableStyle::SharedTables,
            key: None,
            corpus_size: 40_000,
            wrong_candidates: 4096,
            combine: ScoreCombine::default(),
        }
    }
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), StageError> {
        let bad = |m: &str| Err(StageError::Config(m.to_string()));
        if self.pool_pages == 0 || self.pool_pages as u64 > self.total_frames {
            return bad("pool_pages must be between 1 and total_frames");
        }
        if self.total_frames * PAGE_SIZE > self.geometry.capacity() {
            return bad("total_frames exceed the DRAM capacity");
        }
        if let Some(p) = self.plant {
            if p.page_offset as u64 >= PAGE_SIZE || p.bit >= 8 {
                return bad("planted cell must lie inside a page");
            }
        }
        if self.corpus_size == 0 {
            return bad("corpus_size must be positive");
        }
        self.geometry.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub pages: usize,
    pub lowest_frame: Frame,
    pub highest_frame: Frame,
    /// Where the planted cell went, if any.
    pub planted_at: Option<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub bins: usize,
    pub first_pass_bins: usize,
    pub merges: usize,
    pub moved: usize,
    pub measurements: u64,
    pub exact: bool,
    pub misplaced_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub hit: Option<TemplateHit>,
    pub visit_order: Vec<usize>,
    pub activations: u64,
    pub map_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    /// Flips the re-hammer produced inside the victim's page.
    pub flips_in_page: usize,
    pub page_offset: u64,
    pub fault: PersistentFault,
    pub before: u32,
    pub after: u32,
    pub visible_in_last_round: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub diagonal: u8,
    pub winner: ChunkGuess,
    pub sei: f64,
    pub truth: ChunkGuess,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrpfaReport {
    pub chunks: Vec<ChunkReport>,
    pub round10_key: String,
    pub master_key: String,
    pub key_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaReport {
    pub positions_analysed: usize,
    pub recovered: usize,
    pub correct: usize,
    /// All analysed bytes recovered and right.
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub true_key: String,
    pub pool: Option<PoolReport>,
    pub binning: Option<BinReport>,
    pub template: Option<TemplateReport>,
    pub steer: Option<SteerOutcome>,
    pub fault: Option<FaultReport>,
    pub drpfa: Option<DrpfaReport>,
    pub pfa: Option<PfaReport>,
    /// First stage that produced nothing usable.
    pub stopped_at: Option<Stage>,
    pub stop_reason: Option<String>,
}

impl PipelineReport {
    pub fn completed(&self) -> bool {
        self.stopped_at.is_none()
    }
}

/// Report plus the bulky intermediate results worth saving as artifacts.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub partition: Option<BinPartition>,
    pub drpfa: Vec<SeiReport>,
}

/// Separate generator per stage, so one stage's draws never shift another's.
fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage as u64);
    rng
}

const KEY_STREAM: u64 = 64;

const ROLES: SteerRoles = SteerRoles { attacker: 1, victim: 2, noise: 3, cpu: 0 };

/// Word `entry` of table `table` occupies bytes `1024 * table + 4 * entry`
/// onwards, least significant byte first.
pub fn fault_at_offset(page_offset: u64, bit: u8) -> Result<PersistentFault, AesError> {
    let table = (page_offset / 1024) as u8;
    let entry = ((page_offset % 1024) / 4) as u8;
    let mask = 1u32 << (8 * (page_offset % 4) as u32 + bit as u32);
    PersistentFault::new(TableId::te(table.min(3)), entry, mask)
}

/// A pool page whose bank also holds pool pages one row above and below,
/// so the cell can be reached from the attacker's own memory.
fn plant_site<R: Rng>(pool: &[Frame], geometry: &DramGeometry, rng: &mut R) -> Result<Option<Frame>, DramError> {
    let coords: std::collections::BTreeSet<(u32, u32)> =
        pool.iter().map(|&p| geometry.page_coord(p).map(|c| (c.bank, c.row))).collect::<Result<_, _>>()?;
    let mut eligible = Vec::new();
    for &p in pool {
        let c = geometry.page_coord(p)?;
        if c.row > 0 && coords.contains(&(c.bank, c.row - 1)) && coords.contains(&(c.bank, c.row + 1)) {
            eligible.push(p);
        }
    }
    Ok((!eligible.is_empty()).then(|| eligible[rng.random_range(0..eligible.len())]))
}

/// Runs every stage. Stages that yield nothing (no flip found, frame
/// stolen, flip outside the tables) stop the run and are named in the
/// report; invalid input is an error.
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64) -> Result<PipelineRun, PipelineError> {
    cfg.validate().map_err(|e| PipelineError { stage: Stage::Pool, source: e })?;
    let key: [u8; 16] = cfg.key.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(KEY_STREAM);
        rng.random()
    });
    let mut report = PipelineReport {
        seed,
        true_key: hex::encode(key),
        pool: None,
        binning: None,
        template: None,
        steer: None,
        fault: None,
        drpfa: None,
        pfa: None,
        stopped_at: None,
        stop_reason: None,
    };
    let mut run = PipelineRun { report: report.clone(), partition: None, drpfa: Vec::new() };
    let stop = |mut run: PipelineRun, report: PipelineReport, stage: Stage, why: String| {
        run.report = PipelineReport { stopped_at: Some(stage), stop_reason: Some(why), ..report };
        Ok(run)
    };

    // attacker fills a pool of single pages after background activity
    let mut alloc = Allocator::new(cfg.total_frames, cfg.max_order, 1, cfg.pfc).map_err(at(Stage::Pool))?;
    let mut rng = stage_rng(seed, Stage::Pool);
    warm_up(&mut alloc, cfg.warmup_ops, ROLES.cpu, &mut rng).map_err(at(Stage::Pool))?;
    let mut pool = Vec::with_capacity(cfg.pool_pages);
    for _ in 0..cfg.pool_pages {
        let req = AllocRequest { pid: ROLES.attacker, n_pages: 1, cpu: ROLES.cpu };
        pool.extend(alloc.alloc(req).map_err(at(Stage::Pool))?);
    }
    let mut map =
        VulnerabilityMap::generate(&cfg.geometry, &cfg.vulnerability, rng.random()).map_err(at(Stage::Pool))?;
    let mut planted_at = None;
    if let Some(cell) = cfg.plant {
        if let Some(p) = plant_site(&pool, &cfg.geometry, &mut rng).map_err(at(Stage::Pool))? {
            let c = cfg.geometry.map_address(p * PAGE_SIZE + cell.page_offset as u64).map_err(at(Stage::Pool))?;
            map.plant(c.bank, c.row, VulnerableCell { offset: c.column, bit: cell.bit, threshold: cell.threshold });
            planted_at = Some((c.bank, c.row));
        }
    }
    report.pool = Some(PoolReport {
        pages: pool.len(),
        lowest_frame: *pool.iter().min().expect("pool nonempty"),
        highest_frame: *pool.iter().max().expect("pool nonempty"),
        planted_at,
    });

    // group the pool into same-bank bins by timing
    let timing = match cfg.error_rate {
        Some(p) => cfg.timing.with_error_rate(p).map_err(at(Stage::Binpart))?,
        None => cfg.timing,
    };
    timing.validate().map_err(at(Stage::Binpart))?;
    let binning = BinPartitionConfig { threshold: timing.threshold, ..cfg.binning };
    let mut dram = SimulatedDram::new(&cfg.geometry, timing, stage_rng(seed, Stage::Binpart));
    let partition = bin_partition(&pool, &mut dram, &binning).map_err(at(Stage::Binpart))?;
    let score = score_partition(&partition, &cfg.geometry).map_err(at(Stage::Binpart))?;
    report.binning = Some(BinReport {
        bins: partition.bins.len(),
        first_pass_bins: partition.first_pass_bins,
        merges: partition.merges,
        moved: partition.moved,
        measurements: dram.measurements,
        exact: score.exact,
        misplaced_rate: score.misplaced_rate,
    });

    // hammer bins from the last one back
    let outcome =
        template_bins(&partition.bins, &map, &cfg.geometry, &cfg.template, &mut stage_rng(seed, Stage::Template))
            .map_err(at(Stage::Template))?;
    run.partition = Some(partition);
    report.template = Some(TemplateReport {
        hit: outcome.hit.clone(),
        visit_order: outcome.visit_order,
        activations: outcome.activations,
        map_cells: map.len(),
    });
    let Some(hit) = outcome.hit else {
        return stop(run, report, Stage::Template, "no flip found in any bin".into());
    };
    if alloc.owner(hit.page) != Some(Owner::Process(ROLES.attacker)) {
        return stop(run, report, Stage::Template, format!("flipped page {} is not in the attacker's pool", hit.page));
    }

    // release the vulnerable frame and let the victim allocate
    let outcome = steer(&mut alloc, ROLES, hit.page, cfg.noise_allocs).map_err(at(Stage::Steer))?;
    report.steer = Some(outcome.clone());
    if !outcome.success {
        return stop(run, report, Stage::Steer, format!("victim received frame {}", outcome.victim_frames[0]));
    }

    // victim copies its tables into the page
    alloc.tag_payload(hit.page, "aes-ttables").map_err(at(Stage::Install))?;
    let pristine = TTableSet::derive(cfg.style);
    let mut image = pristine.main_tables_image();
    image.resize(PAGE_SIZE as usize, 0);

    // the templated pair flips the same cell again
    let flips = hammer(&map, &cfg.geometry, hit.aggressors, cfg.template.activations_per_attempt)
        .map_err(at(Stage::Rehammer))?;
    let mut in_page = Vec::new();
    for f in &flips {
        let (page, offset) = f.locate(&cfg.geometry).map_err(at(Stage::Rehammer))?;
        if page == hit.page {
            image[offset as usize] ^= 1 << f.bit;
            in_page.push((offset, f.bit));
        }
    }
    let Some(&(offset, bit)) = in_page.iter().find(|&&(o, _)| o == hit.page_offset) else {
        return stop(run, report, Stage::Rehammer, "templated flip did not reproduce".into());
    };
    if offset >= TABLES_BYTES {
        return stop(run, report, Stage::Rehammer, format!("flip at offset {offset} lies past the tables"));
    }
    let fault = fault_at_offset(offset, bit).map_err(at(Stage::Rehammer))?;
    let faulty = pristine.inject_fault(&fault).map_err(at(Stage::Rehammer))?;
    if in_page.len() == 1 && faulty.main_tables_image()[..] != image[..TABLES_BYTES as usize] {
        return Err(PipelineError {
            stage: Stage::Rehammer,
            source: StageError::Config("table image and derived fault disagree".into()),
        });
    }
    let before = pristine_entry(fault.table, fault.entry);
    let after = before ^ fault.xor_mask;
    report.fault = Some(FaultReport {
        flips_in_page: in_page.len(),
        page_offset: offset,
        fault,
        before,
        after,
        visible_in_last_round: fault.visible_in_last_round(),
    });

    // victim encrypts random plaintexts with the corrupted tables
    let corpus =
        CiphertextCorpus::collect(&key, &faulty, Some(fault), cfg.corpus_size, &mut stage_rng(seed, Stage::Corpus));
    let k10 = expand_key128(&key).round_key(10);

    let mut rng = stage_rng(seed, Stage::Drpfa);
    let engine = Drpfa::new(cfg.combine);
    let mut chunks = Vec::with_capacity(4);
    let mut guessed_k10 = [0u8; 16];
    for d in 0..4u8 {
        let truth = ChunkGuess::from_round_key(d, &k10);
        let candidates = sampled_candidates(truth, cfg.wrong_candidates, &mut rng);
        let sei_report = engine.run(&corpus, &candidates).map_err(at(Stage::Drpfa))?;
        let winner = sei_report.winner;
        for (pos, b) in diagonal_positions(d).into_iter().zip(winner.guess.bytes) {
            guessed_k10[pos] = b;
        }
        chunks.push(ChunkReport {
            diagonal: d,
            winner: winner.guess,
            sei: winner.sei,
            truth,
            correct: winner.guess == truth,
        });
        run.drpfa.push(sei_report);
    }
    let master = recover_master_key(&guessed_k10);
    report.drpfa = Some(DrpfaReport {
        chunks,
        round10_key: hex::encode(guessed_k10),
        master_key: hex::encode(master),
        key_correct: master == key,
    });

    let pfa = pfa_last_round(&corpus, &fault, before, after, PFA_MIN_CORPUS).map_err(at(Stage::Pfa))?;
    let recovered = pfa.served.iter().filter(|b| b.key_byte.is_some()).count();
    let correct = pfa.served.iter().filter(|b| b.key_byte == Some(k10[b.position as usize])).count();
    report.pfa = Some(PfaReport {
        positions_analysed: pfa.served.len(),
        recovered,
        correct,
        success: correct == pfa.served.len() && correct > 0,
    });
    run.report = report;
    Ok(run)
}
