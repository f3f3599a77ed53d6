//! Inputs shared by the kernel benchmarks under `benches/`.

use daso::dataset::{generate_synthetic, split, SyntheticConfig};
use daso::params::init_model;
use daso::{DatasetSplit, ModelParams, Shape, TrainConfig, TrainData};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Workload {
    pub split: DatasetSplit,
    pub data: TrainData,
    pub params: ModelParams,
    pub config: TrainConfig,
}

/// The default 500 x 1000 fixture with an initialized model at `dim`.
pub fn workload(dim: usize) -> Workload {
    let syn = generate_synthetic(&SyntheticConfig::default()).expect("fixture");
    let sp = split(&syn.interactions, [0.8, 0.1, 0.1], 0).expect("split");
    let data = TrainData::new(sp.train.clone(), sp.validation.clone(), syn.social).expect("data");
    let config = TrainConfig {
        dim,
        ..TrainConfig::default()
    };
    let params = init_model(&config.shape(data.num_users(), data.num_items()), 0).expect("model");
    Workload {
        split: sp,
        data,
        params,
        config,
    }
}

/// `n` random `(user, item)` pairs.
pub fn random_pairs(n: usize, users: usize, items: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.random_range(0..users), rng.random_range(0..items)))
        .collect()
}

pub fn small_model(users: usize, items: usize, dim: usize) -> ModelParams {
    init_model(
        &Shape {
            num_users: users,
            num_items: items,
            dim,
            hidden: vec![2 * dim; 3],
        },
        1,
    )
    .expect("model")
}
