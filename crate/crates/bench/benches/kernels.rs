use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use daso::eval::evaluate;
use daso::item_adv::{disc_loss_item, gen_policy_grad_item, PolicyOptions};
use daso::mapping::cycle_loss;
use daso::trainer::Phase;
use daso::Trainer;
use daso_bench::{random_pairs, small_model, workload};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernels");
    for dim in [8, 16, 32] {
        let p = small_model(500, 1000, dim);
        let users: Vec<usize> = (0..64).collect();
        g.bench_with_input(BenchmarkId::new("cycle_loss_64", dim), &dim, |b, _| {
            b.iter(|| cycle_loss(black_box(&users), &p).unwrap())
        });
        let real = random_pairs(64, 500, 1000, 1);
        let fake = random_pairs(64, 500, 1000, 2);
        g.bench_with_input(BenchmarkId::new("disc_loss_item_64", dim), &dim, |b, _| {
            b.iter(|| disc_loss_item(&p, black_box(&real), black_box(&fake)).unwrap())
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        g.bench_with_input(BenchmarkId::new("policy_grad_item_64x16", dim), &dim, |b, _| {
            b.iter(|| gen_policy_grad_item(&p, &users, 16, None, PolicyOptions::default(), &mut rng).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let w = workload(16);
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("evaluate_test_k3_5_10", |b| {
        b.iter(|| evaluate(&w.params, &w.split.test, &w.split.train, &[3, 5, 10]).unwrap())
    });
    for phase in [Phase::ItemDisc, Phase::ItemGen, Phase::SocialDisc, Phase::SocialGen, Phase::Cycle] {
        let mut trainer = Trainer::new(w.config.clone(), w.data.num_users(), w.data.num_items()).unwrap();
        g.bench_function(format!("phase_{phase:?}"), |b| {
            b.iter(|| trainer.run_phase(phase, &w.data).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, kernels, training);
criterion_main!(benches);
