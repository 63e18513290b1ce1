use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use wegner::css::{css_distance_upper, CssPair};
use wegner::exact::enumerate_model;
use wegner::gf2::BinMatrix;
use wegner::mc::{Metropolis, Wolff};
use wegner::model::IsingModel;
use wegner::rng::SplitMix64;
use wegner::tiling::{five_five_quotient, square_torus, FIVE_FIVE_150};

fn random_matrix(rows: usize, cols: usize, seed: u64) -> BinMatrix {
    let mut rng = SplitMix64::new(seed);
    let mut m = BinMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if rng.below(2) == 1 {
                m.set(i, j, true);
            }
        }
    }
    m
}

fn bench_gf2_rank(c: &mut Criterion) {
    let m = random_matrix(256, 512, 42);
    c.bench_function("gf2 rank 256x512", |b| b.iter(|| m.rank()));
}

fn bench_enumeration(c: &mut Criterion) {
    let t = square_torus(4).unwrap();
    let model = IsingModel::new(t.g.clone(), 0.5, 0.0).unwrap();
    c.bench_function("enumerate 16-spin torus", |b| {
        b.iter(|| enumerate_model(&model, &[], 24).unwrap())
    });
}

fn bench_wolff(c: &mut Criterion) {
    let t = square_torus(16).unwrap();
    let model = IsingModel::new(t.g.clone(), 1.0, 0.0).unwrap();
    c.bench_function("wolff 100 updates L=16", |b| {
        b.iter_batched(
            || (Wolff::new(&model).unwrap(), SplitMix64::new(7)),
            |(mut eng, mut rng)| {
                for _ in 0..100 {
                    eng.update(2.3, &mut rng);
                }
                eng.energy()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_metropolis(c: &mut Criterion) {
    let t = square_torus(16).unwrap();
    let model = IsingModel::new(t.g.clone(), 1.0, 0.0).unwrap();
    c.bench_function("metropolis 100 sweeps L=16", |b| {
        b.iter_batched(
            || (Metropolis::new(&model), SplitMix64::new(7)),
            |(mut eng, mut rng)| {
                for _ in 0..100 {
                    eng.sweep(2.3, &mut rng);
                }
                eng.energy()
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_distance(c: &mut Criterion) {
    let t = five_five_quotient(FIVE_FIVE_150, 20_000).unwrap();
    let pair = CssPair::new(t.g.clone(), t.h.clone()).unwrap();
    c.bench_function("distance upper n=150 (50 trials)", |b| {
        b.iter(|| css_distance_upper(&pair, 50, 3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_gf2_rank,
    bench_enumeration,
    bench_wolff,
    bench_metropolis,
    bench_distance
);
criterion_main!(benches);
