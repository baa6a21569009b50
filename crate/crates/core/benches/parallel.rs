//! Sequential against rayon execution for the two data-parallel hot spots:
//! frozen-policy evaluation episodes and a batch of envelope targets.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use critigen_core::eql::{envelope_target, sample_weight, Transition, WeightVector};
use critigen_core::harness::{evaluate, Algorithm, Policy, RunConfig};
use critigen_core::momdp::{ACTION_COUNT, STATE_DIM};
use critigen_core::nn::Mlp;
use critigen_core::par::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if Execution::available() {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn bench_eval(c: &mut Criterion) {
    let net = Mlp::new(&[STATE_DIM + 2, 128, 128, 2 * ACTION_COUNT], 1).unwrap();
    let policy = Policy::Eql {
        net: &net,
        weight: WeightVector::equal(),
        epsilon: 0.05,
    };
    let mut group = c.benchmark_group("eval_16_episodes");
    group.sample_size(10);
    for (name, exec) in modes() {
        let cfg = RunConfig {
            algorithm: Algorithm::Eql,
            eval_episodes: 16,
            parallel: exec == Execution::Parallel,
            ..RunConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(evaluate(&cfg, policy, false).unwrap()))
        });
    }
    group.finish();
}

fn bench_envelope(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = Mlp::new(&[STATE_DIM + 2, 128, 128, 2 * ACTION_COUNT], 2).unwrap();
    let batch: Vec<Transition> = (0..64)
        .map(|_| Transition {
            state: (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: rng.random_range(0..ACTION_COUNT),
            reward: [rng.random(), rng.random()],
            next_state: (0..STATE_DIM).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal: false,
        })
        .collect();
    let refs: Vec<&Transition> = batch.iter().collect();
    let ws: Vec<WeightVector> = batch.iter().map(|_| sample_weight(&mut rng)).collect();
    let extra: Vec<WeightVector> = (0..16).map(|_| sample_weight(&mut rng)).collect();
    let mut group = c.benchmark_group("envelope_batch_64x17");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(envelope_target(&refs, &ws, &extra, &net, 0.99, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_eval, bench_envelope);
criterion_main!(benches);
