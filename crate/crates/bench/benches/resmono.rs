use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use resmono_core::catalysis;
use resmono_core::convert::{self, DecideOptions};
use resmono_core::monotones;
use resmono_core::oracle::{self, OracleBudget};
use resmono_core::random;
use resmono_core::state::qubit;
use resmono_core::TheorySpec;

fn monotone_evaluation(c: &mut Criterion) {
    let th = TheorySpec::coherence(2).unwrap();
    let rho = qubit(0.4, -0.3, 0.5).unwrap();
    c.bench_function("evaluate_all qubit coherence", |b| {
        b.iter(|| monotones::evaluate_all(black_box(&rho), &th).unwrap())
    });
    let th4 = TheorySpec::coherence(4).unwrap();
    let rho4 = random::density(4, 4, &mut random::rng(1));
    c.bench_function("rel_entropy_coherence d=4", |b| {
        b.iter(|| monotones::rel_entropy_coherence(black_box(&rho4)))
    });
    c.bench_function("evaluate_all d=4 coherence", |b| {
        b.iter(|| monotones::evaluate_all(black_box(&rho4), &th4).unwrap())
    });
}

fn exact_decider(c: &mut Criterion) {
    let th = TheorySpec::imaginarity(2).unwrap();
    let a = qubit(0.1, 0.7, 0.2).unwrap();
    let b = qubit(0.3, 0.4, -0.1).unwrap();
    let opts = DecideOptions::default();
    c.bench_function("decide imaginarity qubit", |bench| {
        bench.iter(|| convert::decide(&th, black_box(&a), black_box(&b), &opts).unwrap())
    });
}

fn qubit_oracle(c: &mut Criterion) {
    let th = TheorySpec::coherence(2).unwrap();
    let rho = qubit(0.6, 0.0, 0.3).unwrap();
    let sigma = qubit(0.3, 0.1, 0.2).unwrap();
    let budget = OracleBudget {
        restarts: 2,
        ..OracleBudget::default()
    };
    let mut group = c.benchmark_group("oracle");
    group.sample_size(20);
    group.bench_function("qubit DIO min_residual", |b| {
        b.iter(|| oracle::min_residual(black_box(&rho), &sigma, &th, &budget, 0).unwrap())
    });
    group.finish();
}

fn catalysis_protocol(c: &mut Criterion) {
    let rho = qubit(0.8, 0.0, 0.2).unwrap();
    let sigma = qubit(0.5, 0.0, 0.0).unwrap();
    let budget = OracleBudget::default();
    let mut group = c.benchmark_group("catalysis");
    group.sample_size(10);
    group.bench_function("simulate n=2 m=1", |b| {
        b.iter(|| catalysis::simulate(black_box(&rho), &sigma, 2, 1, &budget, 0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, monotone_evaluation, exact_decider, qubit_oracle, catalysis_protocol);
criterion_main!(benches);
