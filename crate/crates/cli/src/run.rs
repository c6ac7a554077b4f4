//! Scenario dispatch. Each scenario returns typed metrics plus artifact
//! bytes; nothing touches the filesystem until [`Run::write`].

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rowfault::aes::{
    encrypt_block, expand_key128, observed_flip, pristine_entry, write_vectors, PersistentFault, TTableSet, TableId,
    TableStyle, TestVector, OBSERVED_FLIPS,
};
use rowfault::dram::{
    bin_partition, score_partition, template_bins, write_bins_csv, BinPartitionConfig, SimulatedDram, TemplateOutcome,
    TimingModel, VulnerabilityMap,
};
use rowfault::ecc::{
    analytic_probs, quiet_fraction, recover_first_round_key, restart_statistics, scan_restart_expectation,
    write_campaign_log, write_restart_csv, AnalyticProbs, EccOracle, RoundVisibility, TGeomParams,
};
use rowfault::mem::{steer_scenario, Frame, SteerOutcome, SteerRoles};
use rowfault::pipeline::{run_pipeline, PipelineReport};
use rowfault::recovery::{
    pfa_last_round, sampled_candidates, write_convergence_csv, write_scores_csv, ChunkGuess, CiphertextCorpus, Drpfa,
    PFA_MIN_CORPUS,
};

use crate::config::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn csv_artifact(name: &str, f: impl FnOnce(&mut Vec<u8>) -> anyhow::Result<()>) -> anyhow::Result<Artifact> {
    let mut bytes = Vec::new();
    f(&mut bytes).with_context(|| format!("writing {name}"))?;
    Ok(Artifact { name: name.to_string(), bytes })
}

/// The part of a run that is written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: serde_json::Value,
    pub metrics: serde_json::Value,
    pub artifacts: Vec<String>,
    /// Printed, never written, so reruns produce identical files.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Debug)]
pub struct Run {
    pub report: RunReport,
    pub artifacts: Vec<Artifact>,
}

impl Run {
    /// Writes every artifact and `report.json` into `dir`, returning the
    /// paths written.
    pub fn write(&self, dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut written = Vec::new();
        for a in &self.artifacts {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(&self.report)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(written)
    }
}

pub fn run(cfg: &ExperimentConfig, scenario: Scenario, seed: u64) -> anyhow::Result<Run> {
    cfg.check_scenario(scenario)?;
    let start = Instant::now();
    let (metrics, artifacts) = match scenario {
        Scenario::Tables => boxed(tables(&cfg.tables, seed)),
        Scenario::Drpfa => boxed(drpfa(&cfg.drpfa, seed)),
        Scenario::Pfa => boxed(pfa(&cfg.pfa, seed)),
        Scenario::EccAttack => boxed(ecc_attack(&cfg.ecc_attack, seed)),
        Scenario::EccStats => boxed(ecc_stats(&cfg.ecc_stats, seed)),
        Scenario::Binpart => boxed(binpart(&cfg.binpart, seed)),
        Scenario::Steer => boxed(steer(&cfg.steer, seed)),
        Scenario::Template => boxed(template(&cfg.template, seed)),
        Scenario::E2e => boxed(e2e(&cfg.e2e, seed)),
    }
    .with_context(|| format!("scenario {scenario}"))?;
    let report = RunReport {
        scenario,
        seed,
        config: cfg.section(scenario),
        metrics,
        artifacts: artifacts.iter().map(|a| a.name.clone()).collect(),
        wall_time: start.elapsed(),
    };
    Ok(Run { report, artifacts })
}

fn boxed<M: Serialize>(r: anyhow::Result<(M, Vec<Artifact>)>) -> anyhow::Result<(serde_json::Value, Vec<Artifact>)> {
    let (m, a) = r?;
    Ok((serde_json::to_value(m)?, a))
}

fn seeded_key(rng: &mut ChaCha8Rng) -> [u8; 16] {
    rng.random()
}

// tables

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipRow {
    pub number: u8,
    pub table: u8,
    pub listed_index: u8,
    pub entry: u8,
    pub before: String,
    pub after: String,
    pub reproduced: bool,
    pub flipped_bits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablesMetrics {
    pub flips: Vec<FlipRow>,
    pub all_reproduced: bool,
    pub all_single_bit: bool,
    pub vectors: usize,
}

pub fn tables(p: &TablesParams, seed: u64) -> anyhow::Result<(TablesMetrics, Vec<Artifact>)> {
    let pristine = TTableSet::derive(TableStyle::SharedTables);
    let mut flips = Vec::new();
    for row in &OBSERVED_FLIPS {
        let fault = row.fault();
        let before = pristine.entry(fault.table, fault.entry).expect("main table");
        let after = pristine.inject_fault(&fault)?.entry(fault.table, fault.entry).expect("main table");
        flips.push(FlipRow {
            number: row.number,
            table: row.table,
            listed_index: row.listed_index,
            entry: row.entry,
            before: format!("{before:08x}"),
            after: format!("{after:08x}"),
            reproduced: before == row.before && after == row.after,
            flipped_bits: (before ^ after).count_ones(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<TestVector> = (0..p.vectors)
        .map(|_| {
            let (key, pt): ([u8; 16], [u8; 16]) = (rng.random(), rng.random());
            TestVector { key, pt, ct: encrypt_block(&pt, &expand_key128(&key), &pristine) }
        })
        .collect();
    let artifacts = vec![
        csv_artifact("flips.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            for f in &flips {
                c.serialize(f)?;
            }
            c.flush()?;
            Ok(())
        })?,
        csv_artifact("vectors.csv", |w| Ok(write_vectors(w, &vectors)?))?,
    ];
    let metrics = TablesMetrics {
        all_reproduced: flips.iter().all(|f| f.reproduced),
        all_single_bit: flips.iter().all(|f| f.flipped_bits == 1),
        flips,
        vectors: vectors.len(),
    };
    Ok((metrics, artifacts))
}

// drpfa

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalResult {
    pub diagonal: u8,
    pub truth: ChunkGuess,
    pub winner: ChunkGuess,
    pub correct: bool,
    pub winner_sei: f64,
    pub correct_sei: f64,
    pub first_separation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrpfaMetrics {
    pub fault: PersistentFault,
    pub corpus_size: usize,
    pub candidates: usize,
    pub diagonals: Vec<DiagonalResult>,
}

pub fn drpfa(p: &DrpfaParams, seed: u64) -> anyhow::Result<(DrpfaMetrics, Vec<Artifact>)> {
    let fault = match p.fault {
        Some(f) => f,
        None => observed_flip(p.flip).ok_or_else(|| anyhow!("no catalogue row {}", p.flip))?.fault(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = seeded_key(&mut rng);
    let tables = TTableSet::derive(p.style).inject_fault(&fault)?;
    let corpus = CiphertextCorpus::collect(&key, &tables, Some(fault), p.corpus_size, &mut rng);
    let k10 = expand_key128(&key).round_key(10);
    let engine = Drpfa::new(p.combine);
    let mut diagonals = Vec::new();
    let mut artifacts = Vec::new();
    for &d in &p.diagonals {
        anyhow::ensure!(d < 4, "diagonal {d} out of range");
        let truth = ChunkGuess::from_round_key(d, &k10);
        let candidates = sampled_candidates(truth, p.wrong_candidates, &mut rng);
        let report = engine.convergence(&corpus, &candidates, &truth, p.step.max(1))?;
        diagonals.push(DiagonalResult {
            diagonal: d,
            truth,
            winner: report.winner.guess,
            correct: report.winner.guess == truth,
            winner_sei: report.winner.sei,
            correct_sei: report.score_of(&truth).expect("truth is a candidate"),
            first_separation: report.first_separation(),
        });
        artifacts
            .push(csv_artifact(&format!("convergence_d{d}.csv"), |w| Ok(write_convergence_csv(w, &report.series)?))?);
        artifacts.push(csv_artifact(&format!("scores_d{d}.csv"), |w| Ok(write_scores_csv(w, &report.scores)?))?);
    }
    let metrics = DrpfaMetrics { fault, corpus_size: corpus.len(), candidates: p.wrong_candidates + 1, diagonals };
    Ok((metrics, artifacts))
}

// pfa

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaCampaign {
    pub style: TableStyle,
    pub fault: PersistentFault,
    pub visible_in_last_round: bool,
    /// Ciphertext positions fed by the faulted table in the last round.
    pub served: Vec<u8>,
    pub recovered: usize,
    pub correct: usize,
    /// Every served byte recovered and right.
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfaMetrics {
    pub corpus_size: usize,
    pub shared: PfaCampaign,
    pub separate: PfaCampaign,
}

fn pfa_campaign(
    style: TableStyle,
    fault: PersistentFault,
    key: &[u8; 16],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> anyhow::Result<PfaCampaign> {
    let tables = TTableSet::derive(style).inject_fault(&fault)?;
    let corpus = CiphertextCorpus::collect(key, &tables, Some(fault), n, rng);
    let before = pristine_entry(fault.table, fault.entry);
    let result = pfa_last_round(&corpus, &fault, before, before ^ fault.xor_mask, PFA_MIN_CORPUS)?;
    let k10 = expand_key128(key).round_key(10);
    let correct = result.served.iter().filter(|b| b.key_byte == Some(k10[b.position as usize])).count();
    Ok(PfaCampaign {
        style,
        fault,
        visible_in_last_round: fault.visible_in_last_round(),
        served: result.served.iter().map(|b| b.position).collect(),
        recovered: result.served.iter().filter(|b| b.key_byte.is_some()).count(),
        correct,
        exact: correct == result.served.len() && correct > 0,
    })
}

pub fn pfa(p: &PfaParams, seed: u64) -> anyhow::Result<(PfaMetrics, Vec<Artifact>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = seeded_key(&mut rng);
    let shared_fault = observed_flip(p.shared_flip).ok_or_else(|| anyhow!("no catalogue row {}", p.shared_flip))?;
    let shared = pfa_campaign(TableStyle::SharedTables, shared_fault.fault(), &key, p.corpus_size, &mut rng)?;
    let separate = pfa_campaign(TableStyle::SeparateLastRound, p.separate_fault, &key, p.corpus_size, &mut rng)?;
    Ok((PfaMetrics { corpus_size: p.corpus_size, shared, separate }, Vec::new()))
}

// ecc

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRecoveryRun {
    pub run: u32,
    pub key: String,
    pub recovered: String,
    pub exact: bool,
    pub restarts: u32,
    pub encryptions: u64,
    pub hammer_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EccAttackMetrics {
    pub runs: u32,
    pub exact_runs: u32,
    pub campaigns: u32,
    pub restart_mean: f64,
    pub restart_standard_error: f64,
    pub tgeom_mean: f64,
}

/// One full first-round key recovery with a random key and one fault per
/// table, drawn from stream `run` of `seed`.
pub fn seeded_key_recovery(p: &EccAttackParams, seed: u64, run: u32) -> anyhow::Result<KeyRecoveryRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    let key = seeded_key(&mut rng);
    let mut schedule = Vec::with_capacity(4);
    for j in 0..4 {
        schedule.push(PersistentFault::new(TableId::te(j), rng.random(), p.xor_mask)?);
    }
    let schedule: [PersistentFault; 4] = schedule.try_into().expect("four faults");
    let mut oracle = EccOracle::new(&key, TableStyle::SharedTables, p.ecc, RoundVisibility::Exact)?;
    let found = recover_first_round_key(&mut oracle, &schedule, &mut rng)?;
    Ok(KeyRecoveryRun {
        run,
        key: hex::encode(key),
        recovered: hex::encode(found.key),
        exact: found.key == key,
        restarts: found.restarts.iter().sum(),
        encryptions: found.encryptions,
        hammer_events: found.hammer_events,
    })
}

pub fn ecc_attack(p: &EccAttackParams, seed: u64) -> anyhow::Result<(EccAttackMetrics, Vec<Artifact>)> {
    let runs: Vec<KeyRecoveryRun> =
        (0..p.runs).into_par_iter().map(|i| seeded_key_recovery(p, seed, i)).collect::<anyhow::Result<_>>()?;
    let (stats, _) = restart_statistics(p.campaigns, seed, p.ecc, TGeomParams::default())?;
    let artifacts = vec![
        csv_artifact("key_runs.csv", |w| {
            let mut c = csv::Writer::from_writer(w);
            for r in &runs {
                c.serialize(r)?;
            }
            c.flush()?;
            Ok(())
        })?,
        csv_artifact("restarts.csv", |w| Ok(write_restart_csv(&stats.rows, w)?))?,
    ];
    let metrics = EccAttackMetrics {
        runs: p.runs,
        exact_runs: runs.iter().filter(|r| r.exact).count() as u32,
        campaigns: p.campaigns,
        restart_mean: stats.empirical_mean,
        restart_standard_error: stats.standard_error(),
        tgeom_mean: stats.tgeom_mean,
    };
    Ok((metrics, artifacts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EccStatsMetrics {
    pub analytic: AnalyticProbs,
    pub quiet_trials: u32,
    pub quiet_fraction: f64,
    pub n_trials: u32,
    pub restart_mean: f64,
    pub restart_std: f64,
    pub restart_standard_error: f64,
    pub tgeom: TGeomParams,
    pub tgeom_mean: f64,
    /// Expected restarts of the simulated scan itself.
    pub scan_expectation: f64,
    pub empirical_fault_rate: f64,
}

pub fn ecc_stats(p: &EccStatsParams, seed: u64) -> anyhow::Result<(EccStatsMetrics, Vec<Artifact>)> {
    let quiet = quiet_fraction(p.quiet_trials, seed, p.ecc)?;
    let (stats, log) = restart_statistics(p.n_trials, seed, p.ecc, p.tgeom)?;
    let artifacts = vec![
        csv_artifact("restarts.csv", |w| Ok(write_restart_csv(&stats.rows, w)?))?,
        csv_artifact("campaign.jsonl", |w| Ok(write_campaign_log(&log, w)?))?,
    ];
    let metrics = EccStatsMetrics {
        analytic: analytic_probs(),
        quiet_trials: p.quiet_trials,
        quiet_fraction: quiet,
        n_trials: p.n_trials,
        restart_mean: stats.empirical_mean,
        restart_std: stats.empirical_std,
        restart_standard_error: stats.standard_error(),
        tgeom: p.tgeom,
        tgeom_mean: stats.tgeom_mean,
        scan_expectation: scan_restart_expectation(),
        empirical_fault_rate: stats.empirical_fault_rate,
    };
    Ok((metrics, artifacts))
}

// dram

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinpartMetrics {
    pub pages: usize,
    pub noise_std: f64,
    pub threshold: f64,
    pub bins: usize,
    pub first_pass_bins: usize,
    pub merges: usize,
    pub moved: usize,
    pub measurements: u64,
    pub exact: bool,
    pub misplaced: usize,
    pub misplaced_rate: f64,
    pub mismatches: Vec<usize>,
}

fn pool_pages(n: usize, frame_range: u64, rng: &mut ChaCha8Rng) -> anyhow::Result<Vec<Frame>> {
    if frame_range == 0 {
        return Ok((0..n as u64).collect());
    }
    anyhow::ensure!(frame_range >= n as u64, "frame_range smaller than the page count");
    let mut seen = std::collections::BTreeSet::new();
    let mut pages = Vec::with_capacity(n);
    while pages.len() < n {
        let f = rng.random_range(0..frame_range);
        if seen.insert(f) {
            pages.push(f);
        }
    }
    Ok(pages)
}

pub fn binpart(p: &BinpartParams, seed: u64) -> anyhow::Result<(BinpartMetrics, Vec<Artifact>)> {
    p.geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pages = pool_pages(p.pages, p.frame_range, &mut rng)?;
    let timing = match p.error_rate {
        Some(e) => p.timing.with_error_rate(e)?,
        None => p.timing,
    };
    timing.validate()?;
    let cfg = BinPartitionConfig { threshold: timing.threshold, ..p.binning };
    let mut dram = SimulatedDram::new(&p.geometry, timing, rng);
    let part = bin_partition(&pages, &mut dram, &cfg)?;
    let score = score_partition(&part, &p.geometry)?;
    let artifacts = vec![csv_artifact("bins.csv", |w| Ok(write_bins_csv(&part, &p.geometry, w)?))?];
    let metrics = BinpartMetrics {
        pages: pages.len(),
        noise_std: timing.noise_std,
        threshold: timing.threshold,
        bins: part.bins.len(),
        first_pass_bins: part.first_pass_bins,
        merges: part.merges,
        moved: part.moved,
        measurements: dram.measurements,
        exact: score.exact,
        misplaced: score.misplaced,
        misplaced_rate: score.misplaced_rate,
        mismatches: score.mismatches,
    };
    Ok((metrics, artifacts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerMetrics {
    pub runs: u32,
    pub successes: u32,
    pub outcomes: Vec<SteerOutcome>,
}

pub fn steer(p: &SteerParams, seed: u64) -> anyhow::Result<(SteerMetrics, Vec<Artifact>)> {
    let outcomes: Vec<SteerOutcome> = (0..p.sweep.max(1) as u64)
        .map(|i| steer_scenario(&p.steer, SteerRoles::default(), seed.wrapping_add(i)))
        .collect::<Result<_, _>>()?;
    let artifacts = vec![csv_artifact("steer.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["seed", "success", "target", "victim_frame", "noise_frames"])?;
        for (i, o) in outcomes.iter().enumerate() {
            let noise: Vec<String> = o.noise_frames.iter().map(u64::to_string).collect();
            c.write_record([
                seed.wrapping_add(i as u64).to_string(),
                o.success.to_string(),
                o.target.to_string(),
                o.victim_frames[0].to_string(),
                noise.join(" "),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?];
    let metrics = SteerMetrics {
        runs: outcomes.len() as u32,
        successes: outcomes.iter().filter(|o| o.success).count() as u32,
        outcomes,
    };
    Ok((metrics, artifacts))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMetrics {
    pub map_cells: usize,
    pub bins: usize,
    #[serde(flatten)]
    pub outcome: TemplateOutcome,
}

pub fn template(p: &TemplateParams, seed: u64) -> anyhow::Result<(TemplateMetrics, Vec<Artifact>)> {
    p.geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pages: Vec<Frame> = (0..p.pages as u64).collect();
    let mut dram = SimulatedDram::new(&p.geometry, TimingModel::default(), ChaCha8Rng::seed_from_u64(seed));
    let part = bin_partition(&pages, &mut dram, &BinPartitionConfig::default())?;
    let map = VulnerabilityMap::generate(&p.geometry, &p.vulnerability, rng.random())?;
    let outcome = template_bins(&part.bins, &map, &p.geometry, &p.template, &mut rng)?;
    let metrics = TemplateMetrics { map_cells: map.len(), bins: part.bins.len(), outcome };
    Ok((metrics, Vec::new()))
}

pub fn e2e(p: &E2eParams, seed: u64) -> anyhow::Result<(PipelineReport, Vec<Artifact>)> {
    let run = run_pipeline(&p.resolved(), seed)?;
    let mut artifacts = Vec::new();
    if let Some(part) = &run.partition {
        artifacts.push(csv_artifact("bins.csv", |w| Ok(write_bins_csv(part, &p.pipeline.geometry, w)?))?);
    }
    for (d, r) in run.drpfa.iter().enumerate() {
        artifacts.push(csv_artifact(&format!("scores_d{d}.csv"), |w| Ok(write_scores_csv(w, &r.scores)?))?);
    }
    Ok((run.report, artifacts))
}
