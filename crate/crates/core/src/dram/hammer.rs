//! Seeded Rowhammer cells, hammering and the templating search.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bin, DramCoord, DramError, DramGeometry, PAGE_SIZE};
use crate::mem::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VulnerableCell {
    /// Byte offset within the row.
    pub offset: u32,
    pub bit: u8,
    /// Activations of a neighbouring row needed to flip the cell.
    pub threshold: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VulnerabilityConfig {
    /// Probability that a row holds one vulnerable cell.
    pub cells_per_row: f64,
    pub min_threshold: u64,
    pub max_threshold: u64,
}

impl Default for VulnerabilityConfig {
    fn default() -> Self {
        Self { cells_per_row: 1.0 / 16384.0, min_threshold: 500_000, max_threshold: 1_500_000 }
    }
}

/// Vulnerable cells keyed by (bank, row).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityMap {
    cells: BTreeMap<(u32, u32), BTreeSet<VulnerableCell>>,
}

impl VulnerabilityMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Draws cells row by row from a generator seeded with `seed`.
    pub fn generate(geometry: &DramGeometry, cfg: &VulnerabilityConfig, seed: u64) -> Result<Self, DramError> {
        if !(0.0..=1.0).contains(&cfg.cells_per_row) || cfg.min_threshold > cfg.max_threshold {
            return Err(DramError::BadVulnerabilityConfig(*cfg));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut map = Self::empty();
        for bank in 0..geometry.n_banks {
            for row in 0..geometry.rows_per_bank() {
                if rng.random_bool(cfg.cells_per_row) {
                    let cell = VulnerableCell {
                        offset: rng.random_range(0..geometry.row_size() as u32),
                        bit: rng.random_range(0..8),
                        threshold: rng.random_range(cfg.min_threshold..=cfg.max_threshold),
                    };
                    map.plant(bank, row, cell);
                }
            }
        }
        Ok(map)
    }

    pub fn plant(&mut self, bank: u32, row: u32, cell: VulnerableCell) {
        self.cells.entry((bank, row)).or_default().insert(cell);
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> impl Iterator<Item = (u32, u32, &VulnerableCell)> {
        self.cells.iter().flat_map(|(&(b, r), set)| set.iter().map(move |c| (b, r, c)))
    }

    pub fn row(&self, bank: u32, row: u32) -> impl Iterator<Item = &VulnerableCell> {
        self.cells.get(&(bank, row)).into_iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flip {
    pub bank: u32,
    pub row: u32,
    pub offset: u32,
    pub bit: u8,
}

impl Flip {
    /// Page and byte offset within it of the flipped cell.
    pub fn locate(&self, geometry: &DramGeometry) -> Result<(Frame, u64), DramError> {
        let addr = geometry.compose(DramCoord { bank: self.bank, row: self.row, column: self.offset })?;
        Ok((addr / PAGE_SIZE, addr % PAGE_SIZE))
    }
}

/// Two rows of one bank hammered together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aggressors {
    pub bank: u32,
    pub rows: [u32; 2],
}

/// Cells in rows next to either aggressor (other than the aggressors
/// themselves) whose threshold is at most `activations`, sorted.
pub fn hammer(
    map: &VulnerabilityMap,
    geometry: &DramGeometry,
    aggressors: Aggressors,
    activations: u64,
) -> Result<Vec<Flip>, DramError> {
    let [a, b] = aggressors.rows;
    if a == b || aggressors.bank >= geometry.n_banks || a.max(b) >= geometry.rows_per_bank() {
        return Err(DramError::BadAggressors(aggressors));
    }
    let victims: BTreeSet<u32> = [a.checked_sub(1), a.checked_add(1), b.checked_sub(1), b.checked_add(1)]
        .into_iter()
        .flatten()
        .filter(|&r| r != a && r != b && r < geometry.rows_per_bank())
        .collect();
    let mut flips: Vec<Flip> = victims
        .into_iter()
        .flat_map(|row| {
            map.row(aggressors.bank, row).filter(|c| c.threshold <= activations).map(move |c| Flip {
                bank: aggressors.bank,
                row,
                offset: c.offset,
                bit: c.bit,
            })
        })
        .collect();
    flips.sort_unstable();
    Ok(flips)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateConfig {
    /// Activation budget spent on one bin before moving to the previous
    /// one.
    pub budget_per_bin: u64,
    pub activations_per_attempt: u64,
}

impl Default for TemplateConfig {
    fn default() -> Self {
        Self { budget_per_bin: 1_000_000_000, activations_per_attempt: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateHit {
    pub bin: usize,
    pub aggressor_pages: [Frame; 2],
    pub aggressors: Aggressors,
    pub flip: Flip,
    pub page: Frame,
    pub page_offset: u64,
    /// The same hammering flipped the same cell again.
    pub reproduced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateOutcome {
    pub hit: Option<TemplateHit>,
    /// Bins in the order they were hammered.
    pub visit_order: Vec<usize>,
    pub activations: u64,
}

/// Hammers random page pairs of each bin, last bin first, until a flip
/// appears or every bin's budget is spent. Pages in different banks do not
/// produce row conflicts, so such pairs waste their attempt.
pub fn template_bins<R: Rng + ?Sized>(
    bins: &[Bin],
    map: &VulnerabilityMap,
    geometry: &DramGeometry,
    cfg: &TemplateConfig,
    rng: &mut R,
) -> Result<TemplateOutcome, DramError> {
    if cfg.activations_per_attempt == 0 {
        return Err(DramError::BadTemplateConfig(*cfg));
    }
    let mut visit_order = Vec::new();
    let mut activations = 0;
    for (i, bin) in bins.iter().enumerate().rev() {
        visit_order.push(i);
        if bin.members.len() < 2 {
            continue;
        }
        let mut spent = 0;
        while spent + cfg.activations_per_attempt <= cfg.budget_per_bin {
            spent += cfg.activations_per_attempt;
            activations += cfg.activations_per_attempt;
            let x = rng.random_range(0..bin.members.len());
            let mut y = rng.random_range(0..bin.members.len() - 1);
            if y >= x {
                y += 1;
            }
            let pages = [bin.members[x], bin.members[y]];
            let (c1, c2) = (geometry.page_coord(pages[0])?, geometry.page_coord(pages[1])?);
            if c1.bank != c2.bank || c1.row == c2.row {
                continue;
            }
            let aggressors = Aggressors { bank: c1.bank, rows: [c1.row, c2.row] };
            let flips = hammer(map, geometry, aggressors, cfg.activations_per_attempt)?;
            if let Some(&flip) = flips.first() {
                let again = hammer(map, geometry, aggressors, cfg.activations_per_attempt)?;
                let (page, page_offset) = flip.locate(geometry)?;
                let hit = TemplateHit {
                    bin: i,
                    aggressor_pages: pages,
                    aggressors,
                    flip,
                    page,
                    page_offset,
                    reproduced: again.contains(&flip),
                };
                return Ok(TemplateOutcome { hit: Some(hit), visit_order, activations });
            }
        }
    }
    Ok(TemplateOutcome { hit: None, visit_order, activations })
}
