#![allow(dead_code)]

use daso::dataset::{generate_synthetic, split, DatasetSplit, SyntheticConfig};
use daso::params::{init_model, Group, ModelParams, Shape};
use daso::{SocialGraph, TrainData};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub split: DatasetSplit,
    pub social: SocialGraph,
}

impl Fixture {
    pub fn data(&self) -> TrainData {
        TrainData::new(
            self.split.train.clone(),
            self.split.validation.clone(),
            self.social.clone(),
        )
        .unwrap()
    }
}

/// Planted-community data split 80/10/10, both drawn from `seed`.
pub fn fixture(config: SyntheticConfig) -> Fixture {
    let syn = generate_synthetic(&config).unwrap();
    Fixture {
        split: split(&syn.interactions, [0.8, 0.1, 0.1], config.seed).unwrap(),
        social: syn.social,
    }
}

pub fn small_fixture(seed: u64) -> Fixture {
    fixture(SyntheticConfig {
        num_users: 60,
        num_items: 80,
        num_communities: 3,
        affinity: 0.4,
        noise: 0.03,
        social_within: 0.3,
        social_across: 0.01,
        seed,
    })
}

/// A model whose every parameter is uniform on `(-scale, scale)`, so
/// hidden units sit away from the ReLU kink and nothing is exactly zero.
pub fn random_model(n: usize, m: usize, d: usize, hidden: Vec<usize>, scale: f64, seed: u64) -> ModelParams {
    let mut p = init_model(
        &Shape {
            num_users: n,
            num_items: m,
            dim: d,
            hidden,
        },
        seed,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    for g in Group::ALL {
        for v in p.group_mut(g) {
            *v = rng.random_range(-scale..scale);
        }
    }
    p
}
