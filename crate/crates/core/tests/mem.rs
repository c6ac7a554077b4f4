use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowfault::mem::*;

fn one(pid: Pid) -> AllocRequest {
    AllocRequest { pid, n_pages: 1, cpu: 0 }
}

#[test]
fn freed_frame_is_next_single_page() {
    let mut a = Allocator::with_defaults();
    let frames: Vec<Frame> = (0..5).map(|_| a.alloc(one(1)).unwrap()[0]).collect();
    a.free(1, 0, &[frames[2]]).unwrap();
    assert_eq!(a.alloc(one(9)).unwrap(), vec![frames[2]]);
}

#[test]
fn empty_cache_refills_then_serves() {
    let mut a = Allocator::with_defaults();
    let cfg = *a.pfc_config();
    assert!(a.pfc(0).is_empty());
    let f = a.alloc(one(1)).unwrap()[0];
    assert_eq!(a.pfc(0).len(), cfg.low_watermark + cfg.refill_batch - 1);
    assert_eq!(a.allocated_frames(), 1);
    assert_eq!(a.owner(f), Some(Owner::Process(1)));
    for &c in a.pfc(0) {
        assert_eq!(a.owner(c), Some(Owner::Pfc(0)));
    }
    a.check_invariants().unwrap();
}

#[test]
fn refill_happens_below_low_watermark_only() {
    let mut a = Allocator::with_defaults();
    let cfg = *a.pfc_config();
    a.alloc(one(1)).unwrap();
    // drain the cache down to the low watermark without triggering refill
    while a.pfc(0).len() > cfg.low_watermark {
        a.alloc(one(1)).unwrap();
    }
    let before = a.pfc(0).len();
    a.alloc(one(1)).unwrap();
    assert_eq!(a.pfc(0).len(), before - 1);
    let hot = *a.pfc(0).back().unwrap();
    // now below low: refill lands at the cold end, hot end unchanged
    assert_eq!(a.alloc(one(1)).unwrap(), vec![hot]);
    assert_eq!(a.pfc(0).len(), cfg.low_watermark + cfg.refill_batch - 1);
}

#[test]
fn split_leaves_buddy_in_lower_list() {
    for k in 1..6u8 {
        let mut a = Allocator::new(1 << (k + 1), k + 1, 1, PfcConfig::default()).unwrap();
        let frames = a.alloc(AllocRequest { pid: 1, n_pages: 1 << k, cpu: 0 }).unwrap();
        assert_eq!(frames.len(), 1 << k);
        assert_eq!(frames[0], 0);
        assert_eq!(a.free_list(k).iter().copied().collect::<Vec<_>>(), vec![1u64 << k]);
        assert!(a.free_list(k + 1).is_empty());
        a.check_invariants().unwrap();
    }
}

#[test]
fn buddy_pair_coalesces_on_release() {
    let cfg = PfcConfig { low_watermark: 1, high_watermark: 4, refill_batch: 1, release_batch: 1 };
    let mut a = Allocator::new(4, 2, 1, cfg).unwrap();
    let x = a.alloc(one(1)).unwrap()[0];
    let y = a.alloc(one(1)).unwrap()[0];
    assert_eq!(x ^ y, 1, "order-0 buddies");
    a.free(1, 0, &[x, y]).unwrap();
    a.drain_pfc(0).unwrap();
    assert_eq!(a.free_list(2).iter().copied().collect::<Vec<_>>(), vec![0]);
    assert!(a.free_list(0).is_empty() && a.free_list(1).is_empty());
}

#[test]
fn multi_page_free_coalesces_directly() {
    let mut a = Allocator::new(8, 3, 1, PfcConfig::default()).unwrap();
    let lo = a.alloc(AllocRequest { pid: 1, n_pages: 2, cpu: 0 }).unwrap();
    let hi = a.alloc(AllocRequest { pid: 1, n_pages: 2, cpu: 0 }).unwrap();
    assert_eq!(lo[0] ^ hi[0], 2);
    a.free(1, 0, &[lo[0], hi[0]]).unwrap();
    assert_eq!(a, Allocator::new(8, 3, 1, PfcConfig::default()).unwrap());
}

#[test]
fn overflow_releases_a_batch_from_the_cold_end() {
    let mut a = Allocator::new(4096, 10, 1, PfcConfig::default()).unwrap();
    let cfg = *a.pfc_config();
    let n = cfg.high_watermark + 1;
    let singles: Vec<Frame> = (0..n).map(|_| a.alloc(one(1)).unwrap()[0]).collect();
    a.drain_pfc(0).unwrap();
    assert!(a.pfc(0).is_empty());
    for &f in &singles {
        a.free(1, 0, &[f]).unwrap();
        a.check_invariants().unwrap();
    }
    assert_eq!(a.pfc(0).len(), n - cfg.release_batch);
    // the oldest frees were released, the newest remain, hot end last
    let kept: Vec<Frame> = a.pfc(0).iter().copied().collect();
    assert_eq!(kept, singles[cfg.release_batch..].to_vec());
}

#[test]
fn double_free_and_foreign_free_are_rejected() {
    let mut a = Allocator::with_defaults();
    let f = a.alloc(one(1)).unwrap()[0];
    assert_eq!(a.free(2, 0, &[f]), Err(MemError::NotOwned { frame: f, pid: Some(2) }));
    a.free(1, 0, &[f]).unwrap();
    assert_eq!(a.free(1, 0, &[f]), Err(MemError::NotOwned { frame: f, pid: Some(1) }));
    let g = a.alloc(one(1)).unwrap()[0];
    let snapshot = a.clone();
    assert!(a.free(1, 0, &[g, g]).is_err());
    assert_eq!(a, snapshot, "failed free must not change state");
}

#[test]
fn out_of_memory_reported() {
    let mut a =
        Allocator::new(4, 2, 1, PfcConfig { low_watermark: 1, high_watermark: 8, refill_batch: 1, release_batch: 1 })
            .unwrap();
    a.alloc(AllocRequest { pid: 1, n_pages: 4, cpu: 0 }).unwrap();
    assert_eq!(a.alloc(one(1)), Err(MemError::OutOfMemory { n_pages: 1 }));
    assert_eq!(a.alloc(AllocRequest { pid: 1, n_pages: 2, cpu: 0 }), Err(MemError::OutOfMemory { n_pages: 2 }));
}

#[test]
fn steering_succeeds_without_noise() {
    for seed in 0..100 {
        let out = steer_scenario(&SteerConfig::default(), SteerRoles::default(), seed).unwrap();
        assert!(out.success, "seed {seed}");
        assert_eq!(out.victim_frames, vec![out.target]);
    }
}

#[test]
fn one_interleaved_allocation_steals_the_frame() {
    let cfg = SteerConfig { noise_allocs: 1, ..Default::default() };
    for seed in 0..100 {
        let out = steer_scenario(&cfg, SteerRoles::default(), seed).unwrap();
        assert!(!out.success, "seed {seed}");
        assert_eq!(out.noise_frames, vec![out.target]);
    }
}

#[test]
fn noise_on_another_cpu_does_not_interfere() {
    let mut a = Allocator::new(4096, 10, 2, PfcConfig::default()).unwrap();
    let pool = a.alloc(one(1)).unwrap();
    a.free(1, 0, &pool).unwrap();
    a.alloc(AllocRequest { pid: 3, n_pages: 1, cpu: 1 }).unwrap();
    assert_eq!(a.alloc(one(2)).unwrap(), pool);
}

#[test]
fn last_freed_is_first_received() {
    let mut a = Allocator::with_defaults();
    let k = 6;
    let frames: Vec<Frame> = (0..k).map(|_| a.alloc(one(1)).unwrap()[0]).collect();
    let target = frames[2];
    let mut order: Vec<Frame> = frames.iter().copied().filter(|&f| f != target).collect();
    order.push(target);
    for &f in &order {
        a.free(1, 0, &[f]).unwrap();
    }
    let got: Vec<Frame> = (0..k).map(|_| a.alloc(one(2)).unwrap()[0]).collect();
    assert_eq!(got[0], target);
    let mut rev = order.clone();
    rev.reverse();
    assert_eq!(got, rev);
}

#[test]
fn steering_ignores_process_identities() {
    for seed in 0..20 {
        let base = steer_scenario(&SteerConfig::default(), SteerRoles::default(), seed).unwrap();
        let swapped = SteerRoles { attacker: 50, victim: 7, noise: 99, cpu: 0 };
        let other = steer_scenario(&SteerConfig::default(), swapped, seed).unwrap();
        assert_eq!(base, other);
    }
}

fn random_op<R: Rng>(a: &mut Allocator, held: &mut Vec<(Pid, u8, Frame)>, rng: &mut R) {
    let cpus = a.n_cpus();
    match rng.random_range(0..10) {
        0..=4 => {
            let pid = rng.random_range(1..6);
            let cpu = rng.random_range(0..cpus);
            let n = if rng.random_bool(0.75) { 1 } else { rng.random_range(2..=33) };
            if let Ok(frames) = a.alloc(AllocRequest { pid, n_pages: n, cpu }) {
                held.push((pid, cpu, frames[0]));
            }
        }
        5..=8 if !held.is_empty() => {
            let (pid, _, f) = held.swap_remove(rng.random_range(0..held.len()));
            let cpu = rng.random_range(0..cpus);
            a.free(pid, cpu, &[f]).unwrap();
        }
        _ => a.drain_pfc(rng.random_range(0..cpus)).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn invariants_hold_under_random_operations(seed in any::<u64>(), cpus in 1u8..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Allocator::new(512, 8, cpus, PfcConfig::default()).unwrap();
        let mut held = Vec::new();
        for _ in 0..1500 {
            random_op(&mut a, &mut held, &mut rng);
            prop_assert!(a.check_invariants().is_ok(), "{:?}", a.check_invariants());
        }
    }

    #[test]
    fn freeing_everything_restores_initial_state(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fresh = Allocator::new(1024, 10, 2, PfcConfig::default()).unwrap();
        let mut a = fresh.clone();
        let mut held = Vec::new();
        for _ in 0..800 {
            random_op(&mut a, &mut held, &mut rng);
        }
        for (pid, cpu, f) in held.drain(..) {
            a.free(pid, cpu, &[f]).unwrap();
        }
        for cpu in 0..2 {
            a.drain_pfc(cpu).unwrap();
        }
        prop_assert_eq!(a, fresh);
    }
}

#[test]
fn hundred_thousand_operations_keep_invariants_and_replay_identically() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut a = Allocator::new(1024, 10, 2, PfcConfig::default()).unwrap();
        let mut held = Vec::new();
        for i in 0..100_000 {
            random_op(&mut a, &mut held, &mut rng);
            if let Err(e) = a.check_invariants() {
                panic!("op {i}: {e}");
            }
        }
        a
    };
    let a = run();
    assert_eq!(a.dump(), run().dump());
    assert_eq!(a.allocated_frames() + a.buddy_free_frames() + a.pfc_frames(), 1024);
}

#[test]
fn script_round_trip_and_dump() {
    let text = "# steer\nalloc,1,0,1\nalloc,1,0,1\nalloc,1,0,4\n\nfree,1,0,{a}\nalloc,2,0,1\ndrain,0,0,\n";
    let mut a = Allocator::with_defaults();
    let first = run_script(&mut a, &parse_script("alloc,1,0,1").unwrap()).unwrap();
    let a_frame = first[0].frames[0];
    let script = text.replace("{a}", &a_frame.to_string());
    let ops = parse_script(&script).unwrap();
    assert_eq!(ops.len(), 6);
    assert_eq!(ops[0].0, 2);
    let events = run_script(&mut a, &ops).unwrap();
    assert_eq!(events[2].frames.len(), 4);
    assert_eq!(events[4].frames, vec![a_frame]);
    assert!(a.pfc(0).is_empty());
    let dump = a.dump();
    let json = serde_json::to_string(&dump).unwrap();
    assert_eq!(serde_json::from_str::<StateDump>(&json).unwrap(), dump);
    assert_eq!(dump.owners.iter().map(|r| r.end - r.start).sum::<u64>(), 1024);
    assert!(json.contains("\"process\":2"));
}

#[test]
fn script_errors_carry_line_numbers() {
    assert!(matches!(parse_script("alloc,1,0"), Err(MemError::Script { line: 1, .. })));
    assert!(matches!(parse_script("\nfoo,1,0,1"), Err(MemError::Script { line: 2, .. })));
    assert!(matches!(parse_script("free,1,0,1;x"), Err(MemError::Script { line: 1, .. })));
    let mut a = Allocator::with_defaults();
    let ops = parse_script("free,1,0,5").unwrap();
    assert!(matches!(run_script(&mut a, &ops), Err(MemError::Script { line: 1, .. })));
}
