use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rowfault::aes::{encrypt, encrypt_block, expand_key128, observed_flip, TTableSet, TableStyle};
use rowfault::dram::{bin_partition, BinPartitionConfig, DramGeometry, SimulatedDram, TimingModel};
use rowfault::recovery::{drpfa, sampled_candidates, ChunkGuess, CiphertextCorpus};

fn aes(c: &mut Criterion) {
    let tables = TTableSet::derive(TableStyle::SharedTables);
    let rk = expand_key128(&[7; 16]);
    let pt = [0x3c; 16];
    let mut g = c.benchmark_group("aes");
    g.throughput(Throughput::Elements(1));
    g.bench_function("encrypt_block", |b| b.iter(|| encrypt_block(black_box(&pt), &rk, &tables)));
    g.bench_function("encrypt_traced", |b| b.iter(|| encrypt(black_box(&pt), &rk, &tables)));
    g.finish();
}

fn drpfa_scoring(c: &mut Criterion) {
    let fault = observed_flip(7).unwrap().fault();
    let tables = TTableSet::derive(TableStyle::SharedTables).inject_fault(&fault).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let key: [u8; 16] = rng.random();
    let corpus = CiphertextCorpus::collect(&key, &tables, Some(fault), 20_000, &mut rng);
    let truth = ChunkGuess::from_round_key(0, &corpus.true_round10_key().unwrap());
    let mut g = c.benchmark_group("drpfa");
    g.sample_size(10);
    for m in [256usize, 4096] {
        let cands = sampled_candidates(truth, m, &mut rng);
        g.throughput(Throughput::Elements((cands.len() * corpus.len()) as u64));
        g.bench_with_input(BenchmarkId::new("score_20k", m + 1), &cands, |b, cands| {
            b.iter(|| drpfa(&corpus, cands).unwrap())
        });
    }
    g.finish();
}

fn binning(c: &mut Criterion) {
    let geom = DramGeometry::default();
    let pages: Vec<u64> = (0..1024).collect();
    let noisy = TimingModel::default().with_error_rate(0.02).unwrap();
    let mut g = c.benchmark_group("bin_partition");
    g.sample_size(20);
    for (name, timing) in [("noiseless", TimingModel::default()), ("two_percent", noisy)] {
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut dram = SimulatedDram::new(&geom, timing, ChaCha8Rng::seed_from_u64(2));
                bin_partition(&pages, &mut dram, &BinPartitionConfig::default()).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, aes, drpfa_scoring, binning);
criterion_main!(benches);
