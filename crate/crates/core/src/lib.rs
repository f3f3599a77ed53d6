//! Adversarial social recommendation with cyclic user modeling.
//!
//! Users carry separate representations in the item domain (interactions)
//! and the social domain (ties). Two MLPs map representations between the
//! domains and are tied together by a cycle-reconstruction loss. Each domain
//! runs a generator/discriminator game: the generator is a softmax over items
//! (or users) conditioned on the transferred user representation and is
//! trained with REINFORCE; the discriminator is a sigmoid over inner-product
//! scores. Recommendations rank items with the item-domain generator.

// `!(x >= 0.0)` style checks are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
mod game;
pub mod item_adv;
pub mod mapping;
pub mod math;
pub mod optim;
pub mod params;
pub mod social_adv;
pub mod trainer;

pub use dataset::{DatasetSplit, IdMap, InteractionSet, SocialGraph, SyntheticConfig};
pub use error::{Error, Result};
pub use eval::{MetricReport, RankedList, Scorer};
pub use optim::{OptimState, RmsProp};
pub use params::{Gradients, Group, MappingNet, Matrix, ModelParams, Shape};
pub use trainer::{fit, EpochRecord, FitResult, TrainConfig, TrainData, TrainHistory, Trainer};
