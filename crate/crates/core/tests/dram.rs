use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowfault::dram::*;
use rowfault::mem::Frame;

/// Bank and row of the default mapping computed bit by bit.
fn reference_bank_row(addr: u64) -> (u32, u32) {
    let bit = |i: u32| ((addr >> i) & 1) as u32;
    let bank = (0..4).map(|i| (bit(12 + i) ^ bit(16 + i)) << i).sum();
    (bank, ((addr >> 16) & 0x3fff) as u32)
}

fn noiseless(geom: &DramGeometry, seed: u64) -> SimulatedDram<'_, ChaCha8Rng> {
    SimulatedDram::new(geom, TimingModel::default(), ChaCha8Rng::seed_from_u64(seed))
}

fn noisy(geom: &DramGeometry, seed: u64) -> SimulatedDram<'_, ChaCha8Rng> {
    let timing = TimingModel::default().with_error_rate(0.02).unwrap();
    SimulatedDram::new(geom, timing, ChaCha8Rng::seed_from_u64(seed))
}

fn pool(n: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert(rng.random_range(0..1u64 << 18));
    }
    let mut pages: Vec<Frame> = set.into_iter().collect();
    // allocation order, not address order
    for i in (1..pages.len()).rev() {
        pages.swap(i, rng.random_range(0..=i));
    }
    pages
}

#[test]
fn address_zero_maps_to_origin() {
    let g = DramGeometry::default();
    assert_eq!(g.map_address(0).unwrap(), DramCoord { bank: 0, row: 0, column: 0 });
}

#[test]
fn row_bit_changes_row_but_not_bank_when_unshared() {
    let g = DramGeometry::default();
    // bits 20.. are row bits outside every bank function
    for bit in 20..30 {
        let a = g.map_address(0x1234_5000).unwrap();
        let b = g.map_address(0x1234_5000 ^ (1u64 << bit)).unwrap();
        assert_eq!(a.bank, b.bank);
        assert_ne!(a.row, b.row);
    }
}

#[test]
fn sweep_of_2_pow_20_addresses_is_uniform_over_banks() {
    let g = DramGeometry::default();
    let mut counts = [0u32; 16];
    for addr in 0..1u64 << 20 {
        let c = g.map_address(addr).unwrap();
        assert_eq!((c.bank, c.row), reference_bank_row(addr));
        counts[c.bank as usize] += 1;
    }
    assert!(counts.iter().all(|&c| c == 1 << 16), "{counts:?}");
}

proptest! {
    #[test]
    fn compose_inverts_map_address(addr in 0u64..1 << 30) {
        let g = DramGeometry::default();
        let c = g.map_address(addr).unwrap();
        prop_assert_eq!((c.bank, c.row), reference_bank_row(addr));
        prop_assert_eq!(g.compose(c).unwrap(), addr);
    }
}

#[test]
fn latency_examples() {
    let g = DramGeometry::default();
    let t = TimingModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // same bank, rows 0 and 1: flip bits 16 and 12 together
    let same_bank = (1u64 << 16) | (1 << 12);
    assert_eq!(g.map_address(same_bank).unwrap().bank, 0);
    assert_eq!(paired_access_latency(&g, &t, 0, same_bank, &mut rng).unwrap(), 400.0);
    assert_eq!(paired_access_latency(&g, &t, 0, 1 << 12, &mut rng).unwrap(), 150.0);
    assert_eq!(paired_access_latency(&g, &t, 0, 64, &mut rng).unwrap(), 150.0);
    assert!(paired_access_latency(&g, &t, 0, 1 << 30, &mut rng).is_err());
}

#[test]
fn noiseless_oracle_is_sound_on_small_sweep() {
    let g = DramGeometry::default();
    let t = TimingModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    // every combination of bits 10..22 plus a column offset
    let addrs: Vec<u64> = (0..1u64 << 12).map(|x| (x << 10) | 0x2a).collect();
    for (i, &a) in addrs.iter().enumerate().step_by(7) {
        for &b in &addrs[i..] {
            let (ba, ra) = reference_bank_row(a);
            let (bb, rb) = reference_bank_row(b);
            let slow = paired_access_latency(&g, &t, a, b, &mut rng).unwrap() > t.threshold;
            assert_eq!(slow, ba == bb && ra != rb, "{a:#x} {b:#x}");
        }
    }
}

#[test]
fn two_percent_noise_misclassifies_two_percent() {
    let g = DramGeometry::default();
    let mut dram = noisy(&g, 2);
    let n = 200_000;
    let same_bank = (1u64 << 16) | (1 << 12);
    let wrong_conflict = (0..n).filter(|_| dram.pair_latency(0, same_bank / PAGE_SIZE) <= 275.0).count();
    let wrong_miss = (0..n).filter(|_| dram.pair_latency(0, 1) > 275.0).count();
    for wrong in [wrong_conflict, wrong_miss] {
        let rate = wrong as f64 / n as f64;
        assert!((rate - 0.02).abs() < 0.0015, "{rate}");
    }
    assert_eq!(dram.measurements, 2 * n as u64);
}

fn truth_partition(pages: &[Frame]) -> BTreeSet<BTreeSet<Frame>> {
    let mut by_bank: BTreeMap<u32, BTreeSet<Frame>> = BTreeMap::new();
    for &p in pages {
        by_bank.entry(reference_bank_row(p * PAGE_SIZE).0).or_default().insert(p);
    }
    by_bank.into_values().collect()
}

fn as_sets(part: &BinPartition) -> BTreeSet<BTreeSet<Frame>> {
    part.bins.iter().map(|b| b.members.iter().copied().collect()).collect()
}

fn check_bins_wellformed(part: &BinPartition, pages: &[Frame]) {
    let mut all: Vec<Frame> = part.bins.iter().flat_map(|b| b.members.iter().copied()).collect();
    all.sort_unstable();
    let mut want = pages.to_vec();
    want.sort_unstable();
    assert_eq!(all, want, "every page in exactly one bin");
    for b in &part.bins {
        assert!(b.members.contains(&b.representative));
    }
}

#[test]
fn noiseless_partition_matches_banks_exactly() {
    let g = DramGeometry::default();
    for (seed, pages) in [(0, (0..1024).collect::<Vec<Frame>>()), (1, pool(1024, 10))] {
        for passes in [1, 2] {
            let cfg = BinPartitionConfig { passes, ..Default::default() };
            let part = bin_partition(&pages, &mut noiseless(&g, seed), &cfg).unwrap();
            check_bins_wellformed(&part, &pages);
            assert_eq!(part.bins.len(), 16);
            assert_eq!(as_sets(&part), truth_partition(&pages));
            let score = score_partition(&part, &g).unwrap();
            assert!(score.exact);
            assert_eq!(score.misplaced, 0);
            assert_eq!((part.merges, part.moved), (0, 0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn noiseless_partition_equals_bank_grouping(seed in any::<u64>(), n in 1usize..300) {
        let g = DramGeometry::default();
        let pages = pool(n, seed);
        let part = bin_partition(&pages, &mut noiseless(&g, seed), &BinPartitionConfig::default()).unwrap();
        prop_assert_eq!(as_sets(&part), truth_partition(&pages));
    }
}

#[test]
fn single_page_forms_one_bin() {
    let g = DramGeometry::default();
    let part = bin_partition(&[77], &mut noiseless(&g, 0), &BinPartitionConfig::default()).unwrap();
    assert_eq!(part.bins, vec![Bin { representative: 77, members: vec![77] }]);
    assert_eq!(bin_partition(&[], &mut noiseless(&g, 0), &BinPartitionConfig::default()), Err(DramError::NoPages));
}

#[test]
fn two_passes_under_two_percent_noise_misplace_under_one_percent() {
    let g = DramGeometry::default();
    for seed in 0..5 {
        let pages = pool(1024, 100 + seed);
        let part = bin_partition(&pages, &mut noisy(&g, seed), &BinPartitionConfig::default()).unwrap();
        check_bins_wellformed(&part, &pages);
        let score = score_partition(&part, &g).unwrap();
        assert!(score.misplaced_rate < 0.01, "seed {seed}: {score:?}");
        let last = *score.mismatches.last().unwrap();
        assert_eq!(last, *score.mismatches.iter().min().unwrap(), "seed {seed}: {:?}", score.mismatches);
    }
}

#[test]
fn one_pass_under_noise_is_worse_than_two() {
    let g = DramGeometry::default();
    let pages = pool(1024, 7);
    let one = BinPartitionConfig { passes: 1, ..Default::default() };
    let p1 = bin_partition(&pages, &mut noisy(&g, 7), &one).unwrap();
    let p2 = bin_partition(&pages, &mut noisy(&g, 7), &BinPartitionConfig::default()).unwrap();
    let (s1, s2) = (score_partition(&p1, &g).unwrap(), score_partition(&p2, &g).unwrap());
    assert!(p1.first_pass_bins > 16 || s1.misplaced > 0);
    assert!(s2.misplaced < s1.misplaced, "{} vs {}", s2.misplaced, s1.misplaced);
}

#[test]
fn misplacement_counts_split_banks() {
    let g = DramGeometry::default();
    // bank 0 split across two bins; the smaller half is misplaced
    let bank0: Vec<Frame> = (0..1024).filter(|&p| reference_bank_row(p * PAGE_SIZE).0 == 0).collect();
    let part = BinPartition {
        bins: vec![
            Bin { representative: bank0[0], members: bank0[..40].to_vec() },
            Bin { representative: bank0[40], members: bank0[40..].to_vec() },
        ],
        first_pass_bins: 2,
        merges: 0,
        moved: 0,
    };
    let s = score_partition(&part, &g).unwrap();
    assert_eq!(s.misplaced, bank0.len() - 40);
    assert!(!s.exact);
    assert_eq!(s.mismatches, vec![0, 0]);
}

#[test]
fn bins_csv_has_one_row_per_page() {
    let g = DramGeometry::default();
    let pages: Vec<Frame> = (0..64).collect();
    let part = bin_partition(&pages, &mut noiseless(&g, 0), &BinPartitionConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_bins_csv(&part, &g, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("page,bin,true_bank"));
    let rows: Vec<(Frame, usize, u32)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 64);
    for (page, bin, bank) in rows {
        assert!(part.bins[bin].members.contains(&page));
        assert_eq!(bank, reference_bank_row(page * PAGE_SIZE).0);
    }
}

#[test]
fn calibration_recovers_a_threshold_between_the_clusters() {
    let g = DramGeometry::default();
    let mut dram = noisy(&g, 9);
    let pages = pool(200, 9);
    let samples: Vec<f64> = pages.windows(2).map(|w| dram.pair_latency(w[0], w[1])).collect();
    let extra: Vec<f64> = (0..400).map(|_| dram.pair_latency(0, ((1 << 16) | (1 << 12)) / PAGE_SIZE)).collect();
    let all: Vec<f64> = samples.into_iter().chain(extra).collect();
    let t = calibrate_threshold(&all).unwrap();
    assert!(t > 230.0 && t < 320.0, "{t}");
}

// hammering

fn dense_map(seed: u64) -> VulnerabilityMap {
    let cfg = VulnerabilityConfig { cells_per_row: 0.05, ..Default::default() };
    VulnerabilityMap::generate(&DramGeometry::default(), &cfg, seed).unwrap()
}

#[test]
fn generation_is_seeded() {
    let g = DramGeometry::default();
    let cfg = VulnerabilityConfig::default();
    let a = VulnerabilityMap::generate(&g, &cfg, 5).unwrap();
    assert_eq!(a, VulnerabilityMap::generate(&g, &cfg, 5).unwrap());
    assert_ne!(a, VulnerabilityMap::generate(&g, &cfg, 6).unwrap());
    // 16 banks x 2^14 rows at 2^-14 per row
    assert!(a.len() > 2 && a.len() < 40, "{}", a.len());
    for (_, _, c) in a.cells() {
        assert!((500_000..=1_500_000).contains(&c.threshold));
        assert!(c.offset < 4096 && c.bit < 8);
    }
}

#[test]
fn below_every_threshold_nothing_flips() {
    let map = dense_map(1);
    let g = DramGeometry::default();
    for row in 0..200 {
        let flips = hammer(&map, &g, Aggressors { bank: 3, rows: [row, row + 2] }, 499_999).unwrap();
        assert!(flips.is_empty());
    }
}

#[test]
fn cell_at_threshold_flips() {
    let g = DramGeometry::default();
    let mut map = VulnerabilityMap::empty();
    let cell = VulnerableCell { offset: 1378, bit: 6, threshold: 1_000_000 };
    map.plant(4, 11, cell);
    let agg = Aggressors { bank: 4, rows: [10, 12] };
    let want = vec![Flip { bank: 4, row: 11, offset: 1378, bit: 6 }];
    assert_eq!(hammer(&map, &g, agg, 1_000_000).unwrap(), want);
    assert_eq!(hammer(&map, &g, agg, 1_000_000).unwrap(), want);
    assert!(hammer(&map, &g, agg, 999_999).unwrap().is_empty());
    // one-sided: only one aggressor next to the cell
    assert_eq!(hammer(&map, &g, Aggressors { bank: 4, rows: [12, 40] }, 1_000_000).unwrap(), want);
    // other bank, or an aggressor on the cell's own row
    assert!(hammer(&map, &g, Aggressors { bank: 5, rows: [10, 12] }, 2_000_000).unwrap().is_empty());
    assert!(hammer(&map, &g, Aggressors { bank: 4, rows: [11, 30] }, 2_000_000).unwrap().is_empty());
    let (page, off) = want[0].locate(&g).unwrap();
    let c = g.page_coord(page).unwrap();
    assert_eq!((c.bank, c.row, off), (4, 11, 1378));
}

#[test]
fn bad_aggressors_rejected() {
    let g = DramGeometry::default();
    let map = VulnerabilityMap::empty();
    for agg in [
        Aggressors { bank: 0, rows: [3, 3] },
        Aggressors { bank: 16, rows: [1, 3] },
        Aggressors { bank: 0, rows: [1, 1 << 14] },
    ] {
        assert_eq!(hammer(&map, &g, agg, 1), Err(DramError::BadAggressors(agg)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn flips_reproducible_and_monotone(
        seed in 0u64..4,
        bank in 0u32..16,
        a in 0u32..(1 << 14),
        b in 0u32..(1 << 14),
        lo in 0u64..2_000_000,
        extra in 0u64..1_000_000,
    ) {
        prop_assume!(a != b);
        let g = DramGeometry::default();
        let map = dense_map(seed);
        let agg = Aggressors { bank, rows: [a, b] };
        let first = hammer(&map, &g, agg, lo).unwrap();
        prop_assert_eq!(&first, &hammer(&dense_map(seed), &g, agg, lo).unwrap());
        let dedup: BTreeSet<Flip> = first.iter().copied().collect();
        prop_assert_eq!(dedup.len(), first.len());
        let more: BTreeSet<Flip> = hammer(&map, &g, agg, lo + extra).unwrap().into_iter().collect();
        prop_assert!(dedup.is_subset(&more));
        for f in &first {
            prop_assert!(f.row.abs_diff(a) == 1 || f.row.abs_diff(b) == 1);
            prop_assert!(f.row != a && f.row != b);
        }
    }
}

// templating

fn default_bins(g: &DramGeometry) -> Vec<Bin> {
    let pages: Vec<Frame> = (0..1024).collect();
    bin_partition(&pages, &mut noiseless(g, 0), &BinPartitionConfig::default()).unwrap().bins
}

fn bank_of_bin(bin: &Bin, g: &DramGeometry) -> u32 {
    g.page_coord(bin.representative).unwrap().bank
}

#[test]
fn cell_in_last_bin_is_found_there() {
    let g = DramGeometry::default();
    let bins = default_bins(&g);
    let last = bins.len() - 1;
    let bank = bank_of_bin(&bins[last], &g);
    let mut map = VulnerabilityMap::empty();
    map.plant(bank, 20, VulnerableCell { offset: 100, bit: 3, threshold: 1_000_000 });
    let want = g.compose(DramCoord { bank, row: 20, column: 100 }).unwrap();
    let out = template_bins(&bins, &map, &g, &TemplateConfig::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let hit = out.hit.expect("flip found");
    assert_eq!(out.visit_order, vec![last]);
    assert_eq!(hit.bin, last);
    assert_eq!((hit.page, hit.page_offset), (want / PAGE_SIZE, want % PAGE_SIZE));
    assert!(bins[last].members.contains(&hit.page));
    assert!(hit.reproduced);
    for p in hit.aggressor_pages {
        assert!(bins[last].members.contains(&p));
    }
    assert!(hit.aggressors.rows.iter().any(|r| r.abs_diff(20) == 1));
}

#[test]
fn empty_map_yields_none_after_all_bins() {
    let g = DramGeometry::default();
    let bins = default_bins(&g);
    let cfg = TemplateConfig { budget_per_bin: 20_000_000, ..Default::default() };
    let out = template_bins(&bins, &VulnerabilityMap::empty(), &g, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(out.hit.is_none());
    assert_eq!(out.visit_order, (0..16).rev().collect::<Vec<_>>());
    assert_eq!(out.activations, 16 * 20_000_000);
}

#[test]
fn cell_in_first_bin_found_after_visiting_every_bin() {
    let g = DramGeometry::default();
    let bins = default_bins(&g);
    let bank = bank_of_bin(&bins[0], &g);
    let mut map = VulnerabilityMap::empty();
    map.plant(bank, 33, VulnerableCell { offset: 7, bit: 0, threshold: 600_000 });
    let out = template_bins(&bins, &map, &g, &TemplateConfig::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(out.visit_order, (0..16).rev().collect::<Vec<_>>());
    let hit = out.hit.unwrap();
    assert_eq!(hit.bin, 0);
    assert_eq!(g.page_coord(hit.page).unwrap().row, 33);
    assert!(out.activations > 15 * TemplateConfig::default().budget_per_bin);
}

#[test]
fn templating_is_seeded() {
    let g = DramGeometry::default();
    let bins = default_bins(&g);
    let map = dense_map(2);
    let cfg = TemplateConfig { budget_per_bin: 100_000_000, ..Default::default() };
    let a = template_bins(&bins, &map, &g, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let b = template_bins(&bins, &map, &g, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    assert_eq!(a, b);
    assert!(a.hit.is_some());
}
