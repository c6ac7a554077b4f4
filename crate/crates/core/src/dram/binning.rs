//! Grouping pages into same-bank bins with the row-conflict channel.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DramError, DramGeometry, LatencyOracle};
use crate::mem::Frame;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bin {
    pub representative: Frame,
    pub members: Vec<Frame>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinPartitionConfig {
    pub threshold: f64,
    /// 1 = first-fit placement only; every further pass merges duplicate
    /// bins and reassigns pages.
    pub passes: u32,
    /// Representative pair measurements per merge decision.
    pub merge_votes: u32,
    /// Conflicting measurements out of `merge_votes` needed to merge.
    pub merge_quorum: u32,
    /// Measurements per (page, representative) when reassigning.
    pub reassign_votes: u32,
}

impl Default for BinPartitionConfig {
    fn default() -> Self {
        Self { threshold: 275.0, passes: 2, merge_votes: 5, merge_quorum: 4, reassign_votes: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    /// In creation order.
    pub bins: Vec<Bin>,
    pub first_pass_bins: usize,
    pub merges: usize,
    pub moved: usize,
}

impl BinPartition {
    pub fn bin_of(&self) -> BTreeMap<Frame, usize> {
        self.bins.iter().enumerate().flat_map(|(i, b)| b.members.iter().map(move |&p| (p, i))).collect()
    }
}

fn conflicts<O: LatencyOracle + ?Sized>(oracle: &mut O, a: Frame, b: Frame, votes: u32, threshold: f64) -> u32 {
    (0..votes).filter(|_| oracle.pair_latency(a, b) > threshold).count() as u32
}

/// First pass: each page joins the first bin whose representative it
/// conflicts with, or opens a new bin. Later passes merge bins whose
/// representatives conflict reliably, then move every non-representative
/// page to the bin whose representative it conflicts with most often (ties
/// keep the current bin, else go to the lowest index).
pub fn bin_partition<O: LatencyOracle + ?Sized>(
    pages: &[Frame],
    oracle: &mut O,
    cfg: &BinPartitionConfig,
) -> Result<BinPartition, DramError> {
    if pages.is_empty() {
        return Err(DramError::NoPages);
    }
    if cfg.passes == 0 || cfg.merge_votes == 0 || cfg.reassign_votes == 0 || cfg.merge_quorum > cfg.merge_votes {
        return Err(DramError::BadBinConfig(*cfg));
    }
    let mut bins: Vec<Bin> = Vec::new();
    for &page in pages {
        match bins.iter().position(|b| oracle.pair_latency(page, b.representative) > cfg.threshold) {
            Some(i) => bins[i].members.push(page),
            None => bins.push(Bin { representative: page, members: vec![page] }),
        }
    }
    let first_pass_bins = bins.len();
    let (mut merges, mut moved) = (0, 0);
    for _ in 1..cfg.passes {
        let mut i = 0;
        while i < bins.len() {
            let mut j = i + 1;
            while j < bins.len() {
                let v =
                    conflicts(oracle, bins[i].representative, bins[j].representative, cfg.merge_votes, cfg.threshold);
                if v >= cfg.merge_quorum {
                    let gone = bins.remove(j);
                    bins[i].members.extend(gone.members);
                    merges += 1;
                } else {
                    j += 1;
                }
            }
            i += 1;
        }
        let reps: Vec<Frame> = bins.iter().map(|b| b.representative).collect();
        let mut next: Vec<Vec<Frame>> = reps.iter().map(|&r| vec![r]).collect();
        for (current, bin) in bins.iter().enumerate() {
            for &page in bin.members.iter().filter(|&&p| p != bin.representative) {
                let votes: Vec<u32> =
                    reps.iter().map(|&r| conflicts(oracle, page, r, cfg.reassign_votes, cfg.threshold)).collect();
                let top = *votes.iter().max().expect("at least one bin");
                let target = if votes[current] == top {
                    current
                } else {
                    votes.iter().position(|&v| v == top).expect("max exists")
                };
                moved += usize::from(target != current);
                next[target].push(page);
            }
        }
        for (bin, members) in bins.iter_mut().zip(next) {
            bin.members = members;
        }
    }
    Ok(BinPartition { bins, first_pass_bins, merges, moved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScore {
    /// Same set partition as grouping by true bank.
    pub exact: bool,
    /// Pages outside the bin that holds most of their bank.
    pub misplaced: usize,
    pub misplaced_rate: f64,
    /// Per bin, members whose bank differs from the bin's majority bank.
    pub mismatches: Vec<usize>,
}

/// Compares bins with the ground-truth bank of each page.
pub fn score_partition(partition: &BinPartition, geometry: &DramGeometry) -> Result<PartitionScore, DramError> {
    let bank = |p: Frame| geometry.page_coord(p).map(|c| c.bank);
    let mut per_bank_bin: BTreeMap<(u32, usize), usize> = BTreeMap::new();
    let mut majority = Vec::with_capacity(partition.bins.len());
    let mut mismatches = Vec::with_capacity(partition.bins.len());
    let mut total = 0;
    for (i, bin) in partition.bins.iter().enumerate() {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for &p in &bin.members {
            let b = bank(p)?;
            *counts.entry(b).or_default() += 1;
            *per_bank_bin.entry((b, i)).or_default() += 1;
        }
        let (&top_bank, &top) =
            counts.iter().max_by_key(|&(&b, &n)| (n, std::cmp::Reverse(b))).expect("bins are nonempty");
        majority.push((top_bank, top));
        mismatches.push(bin.members.len() - top);
        total += bin.members.len();
    }
    let mut home: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&(b, i), &n) in &per_bank_bin {
        let e = home.entry(b).or_insert((i, n));
        if n > e.1 {
            *e = (i, n);
        }
    }
    // a page is in place when it sits in its bank's home bin and that bin
    // belongs to its bank
    let placed: usize = majority.iter().enumerate().filter(|&(i, &(b, _))| home[&b].0 == i).map(|(_, &(_, n))| n).sum();
    let misplaced = total - placed;
    let exact = misplaced == 0 && partition.bins.len() == home.len();
    Ok(PartitionScore { exact, misplaced, misplaced_rate: misplaced as f64 / total as f64, mismatches })
}

/// Writes `page,bin,true_bank` rows, pages in bin order.
pub fn write_bins_csv<W: Write>(partition: &BinPartition, geometry: &DramGeometry, out: W) -> Result<(), DramError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["page", "bin", "true_bank"])?;
    for (i, bin) in partition.bins.iter().enumerate() {
        for &p in &bin.members {
            let bank = geometry.page_coord(p)?.bank;
            w.write_record([p.to_string(), i.to_string(), bank.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
