//! Alternating training of the two adversarial pairs and the mapping
//! networks.
//!
//! One epoch runs five phases in order, each touching only its own model:
//!
//! 1. item discriminator: real training pairs vs. one generated item per pair
//! 2. item generator: REINFORCE against the item discriminator
//! 3. social discriminator: real ties vs. one generated user per tie
//! 4. social generator: REINFORCE against the social discriminator
//! 5. mapping networks (and, unless frozen, the generator user tables) on
//!    `lambda` times the cycle-reconstruction loss
//!
//! Discriminator phases iterate over shuffled mini-batches of training pairs
//! or social ties. Generator phases iterate over shuffled mini-batches of
//! users (those with at least one training item, resp. tie), since the
//! policy objective is a sum over users; `gen_steps` updates are taken per
//! batch. The cycle phase covers every user.

use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{InteractionSet, SocialGraph};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::game::{self, PolicyOptions};
use crate::mapping::cycle_loss;
use crate::optim::{apply, RmsProp};
use crate::params::{default_hidden, init_model, Group, ModelParams, Shape};
use crate::{item_adv, social_adv};

pub use crate::optim::{rmsprop_step, OptimState};

/// Every training hyperparameter. Also serialized as the flat
/// `key = value` config file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Mapping-network hidden widths; `None` means three layers of `2 * dim`.
    pub hidden: Option<Vec<usize>>,
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    pub batch: usize,
    /// Weight of the cycle-reconstruction loss.
    pub lambda: f64,
    /// Generator samples drawn per user for each policy-gradient estimate.
    pub samples_per_user: usize,
    /// Discriminator steps per mini-batch.
    pub disc_steps: usize,
    /// Generator steps per mini-batch.
    pub gen_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Early-stopping patience on validation Precision@`eval_k`; 0 disables.
    pub patience: usize,
    pub eval_k: usize,
    /// Keep the generator user tables out of the cycle-loss update.
    pub freeze_cycle_embeddings: bool,
    /// Mean-reward baseline for REINFORCE.
    pub reward_baseline: bool,
    /// Forbid generators from proposing observed items / existing ties.
    pub exclude_observed: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            hidden: None,
            lr: 0.001,
            rho: 0.9,
            eps: 1e-8,
            batch: 64,
            lambda: 100.0,
            samples_per_user: 16,
            disc_steps: 1,
            gen_steps: 20,
            epochs: 40,
            seed: 0,
            patience: 0,
            eval_k: 10,
            freeze_cycle_embeddings: false,
            reward_baseline: false,
            exclude_observed: false,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn optimizer(&self) -> RmsProp {
        RmsProp {
            lr: self.lr,
            rho: self.rho,
            eps: self.eps,
        }
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| default_hidden(self.dim))
    }

    pub fn shape(&self, num_users: usize, num_items: usize) -> Shape {
        Shape {
            num_users,
            num_items,
            dim: self.dim,
            hidden: self.hidden_widths(),
        }
    }

    /// Sets one hyperparameter from its config-file key. Returns `false`
    /// for keys this struct does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = parse_value(key, value)?,
            "hidden" => {
                self.hidden = if value.is_empty() || value == "default" {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|w| parse_value(key, w.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "lr" => self.lr = parse_value(key, value)?,
            "rho" => self.rho = parse_value(key, value)?,
            "eps" => self.eps = parse_value(key, value)?,
            "batch" => self.batch = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "samples_per_user" => self.samples_per_user = parse_value(key, value)?,
            "disc_steps" => self.disc_steps = parse_value(key, value)?,
            "gen_steps" => self.gen_steps = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "eval_k" => self.eval_k = parse_value(key, value)?,
            "freeze_cycle_embeddings" => self.freeze_cycle_embeddings = parse_value(key, value)?,
            "reward_baseline" => self.reward_baseline = parse_value(key, value)?,
            "exclude_observed" => self.exclude_observed = parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_owned()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.hidden_widths().contains(&0) {
            return bad("hidden widths must be non-zero");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1)");
        }
        if !(self.eps >= 0.0) {
            return bad("eps must be non-negative");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if self.samples_per_user == 0 {
            return bad("samples_per_user must be at least 1");
        }
        if self.eval_k == 0 {
            return bad("eval_k must be at least 1");
        }
        Ok(())
    }

    /// All keys in a stable order, one `key = value` line each.
    pub fn to_kv(&self) -> String {
        let hidden = self
            .hidden_widths()
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        let lines: [(&str, String); 17] = [
            ("dim", self.dim.to_string()),
            ("hidden", hidden),
            ("lr", self.lr.to_string()),
            ("rho", self.rho.to_string()),
            ("eps", self.eps.to_string()),
            ("batch", self.batch.to_string()),
            ("lambda", self.lambda.to_string()),
            ("samples_per_user", self.samples_per_user.to_string()),
            ("disc_steps", self.disc_steps.to_string()),
            ("gen_steps", self.gen_steps.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("patience", self.patience.to_string()),
            ("eval_k", self.eval_k.to_string()),
            ("freeze_cycle_embeddings", self.freeze_cycle_embeddings.to_string()),
            ("reward_baseline", self.reward_baseline.to_string()),
            ("exclude_observed", self.exclude_observed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str, source: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: source.to_owned(),
                line: i + 1,
                msg: "expected `key = value`".to_owned(),
            });
        };
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

/// Training inputs with per-user lookups precomputed.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub social: SocialGraph,
    train_by_user: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    /// Users with at least one training item / at least one tie.
    item_users: Vec<usize>,
    social_users: Vec<usize>,
}

impl TrainData {
    pub fn new(train: InteractionSet, validation: InteractionSet, social: SocialGraph) -> Result<Self> {
        if train.num_users() != social.num_users()
            || validation.num_users() != train.num_users()
            || validation.num_items() != train.num_items()
        {
            return Err(Error::Dimension(format!(
                "train {}x{}, validation {}x{}, social {} users",
                train.num_users(),
                train.num_items(),
                validation.num_users(),
                validation.num_items(),
                social.num_users()
            )));
        }
        let train_by_user = train.items_by_user();
        let neighbors = social.neighbors();
        let active = |lists: &[Vec<usize>]| {
            lists
                .iter()
                .enumerate()
                .filter(|(_, l)| !l.is_empty())
                .map(|(u, _)| u)
                .collect()
        };
        Ok(TrainData {
            item_users: active(&train_by_user),
            social_users: active(&neighbors),
            train_by_user,
            neighbors,
            train,
            validation,
            social,
        })
    }

    pub fn num_users(&self) -> usize {
        self.train.num_users()
    }

    pub fn num_items(&self) -> usize {
        self.train.num_items()
    }

    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_by_user[user]
    }
}

/// Losses and validation quality after one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-pair item discriminator loss over the epoch.
    pub disc_item_loss: f64,
    /// Mean per-pair social discriminator loss (NaN without social ties).
    pub disc_social_loss: f64,
    /// Mean per-user cycle loss after the epoch.
    pub cycle_loss: f64,
    pub gen_item_reward: f64,
    pub gen_social_reward: f64,
    /// Validation Precision@`eval_k`, if any user has validation items.
    pub val_precision: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Validation Precision@`eval_k` of the untrained model.
    pub initial_precision: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

impl TrainHistory {
    /// Tab-separated log with one row per epoch (epoch 0 = before training).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "epoch\tdisc_item_loss\tdisc_social_loss\tcycle_loss\tgen_item_reward\tgen_social_reward\tval_precision\n",
        );
        let _ = writeln!(out, "0\tNA\tNA\tNA\tNA\tNA\t{}", fmt_opt(self.initial_precision));
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.epoch,
                r.disc_item_loss,
                r.disc_social_loss,
                r.cycle_loss,
                r.gen_item_reward,
                r.gen_social_reward,
                fmt_opt(r.val_precision)
            );
        }
        out
    }
}

const ITEM_DISC: [Group; 3] = [Group::DiscUserItem, Group::DiscItem, Group::DiscItemBias];
const ITEM_GEN: [Group; 4] = [
    Group::GenUserSocial,
    Group::SocialToItem,
    Group::GenItem,
    Group::GenItemBias,
];
const SOCIAL_DISC: [Group; 2] = [Group::DiscUserSocial, Group::DiscSocialBias];
const SOCIAL_GEN: [Group; 4] = [
    Group::GenUserItem,
    Group::ItemToSocial,
    Group::GenUserSocial,
    Group::GenSocialBias,
];

/// Parameter groups each training phase may change.
pub fn phase_groups(phase: Phase, freeze_cycle_embeddings: bool) -> Vec<Group> {
    match phase {
        Phase::ItemDisc => ITEM_DISC.to_vec(),
        Phase::ItemGen => ITEM_GEN.to_vec(),
        Phase::SocialDisc => SOCIAL_DISC.to_vec(),
        Phase::SocialGen => SOCIAL_GEN.to_vec(),
        Phase::Cycle if freeze_cycle_embeddings => vec![Group::SocialToItem, Group::ItemToSocial],
        Phase::Cycle => vec![
            Group::SocialToItem,
            Group::ItemToSocial,
            Group::GenUserItem,
            Group::GenUserSocial,
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    ItemDisc,
    ItemGen,
    SocialDisc,
    SocialGen,
    Cycle,
}

/// Mutable training state: parameters, accumulators and the sampling RNG.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub state: OptimState,
    rng: ChaCha8Rng,
}

impl Trainer {
    /// Fresh model initialized from `config.seed`.
    pub fn new(config: TrainConfig, num_users: usize, num_items: usize) -> Result<Self> {
        config.validate()?;
        let params = init_model(&config.shape(num_users, num_items), config.seed)?;
        let state = OptimState::new(&params);
        Self::resume(config, params, state)
    }

    /// Continues from existing parameters and accumulators.
    pub fn resume(config: TrainConfig, params: ModelParams, state: OptimState) -> Result<Self> {
        config.validate()?;
        if !state.matches(&params) {
            return Err(Error::Dimension(
                "optimizer state does not match the parameter shapes".to_owned(),
            ));
        }
        // a separate stream so sampling does not replay the initialization draws
        let rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da50_0000_0001);
        Ok(Trainer {
            config,
            params,
            state,
            rng,
        })
    }

    /// Runs one phase over its mini-batches. Returns the phase's mean
    /// discriminator loss, mean generator reward, or post-phase cycle loss
    /// (NaN when the phase is disabled).
    pub fn run_phase(&mut self, phase: Phase, data: &TrainData) -> Result<f64> {
        match phase {
            Phase::ItemDisc => self.item_disc_phase(data),
            Phase::ItemGen => self.item_gen_phase(data),
            Phase::SocialDisc => self.social_disc_phase(data),
            Phase::SocialGen => self.social_gen_phase(data),
            Phase::Cycle => self.cycle_phase(data),
        }
    }

    fn opts(&self) -> PolicyOptions {
        PolicyOptions {
            reward_baseline: self.config.reward_baseline,
        }
    }

    fn shuffled<T: Clone>(&mut self, items: &[T]) -> Vec<T> {
        let mut v = items.to_vec();
        v.shuffle(&mut self.rng);
        v
    }

    fn item_disc_phase(&mut self, data: &TrainData) -> Result<f64> {
        if self.config.disc_steps == 0 {
            return Ok(f64::NAN);
        }
        // the generator is frozen for the whole phase, so its policies are
        // computed once per user rather than once per pair
        let gen = item_adv::generator(&self.params);
        let masks = self.config.exclude_observed.then_some(data.train_by_user.as_slice());
        let samplers = policy_samplers(&gen, &data.item_users, data.num_users(), masks)?;
        let pairs = self.shuffled(data.train.pairs());
        let opt = self.config.optimizer();
        let (mut total, mut count) = (0.0, 0usize);
        for batch in pairs.chunks(self.config.batch) {
            for _ in 0..self.config.disc_steps {
                let fake = draw_fakes(batch, &samplers, &mut self.rng);
                let mut out = item_adv::disc_loss_item(&self.params, batch, &fake)?;
                total += out.loss;
                count += batch.len() + fake.len();
                out.grads.retain(&ITEM_DISC);
                apply(&mut self.params, &out.grads, &mut self.state, opt)?;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    fn item_gen_phase(&mut self, data: &TrainData) -> Result<f64> {
        if self.config.gen_steps == 0 {
            return Ok(f64::NAN);
        }
        let users = self.shuffled(&data.item_users);
        let opt = self.config.optimizer();
        let masks = self.config.exclude_observed.then_some(data.train_by_user.as_slice());
        let (mut total, mut count) = (0.0, 0usize);
        for batch in users.chunks(self.config.batch) {
            for _ in 0..self.config.gen_steps {
                let mut pg = item_adv::gen_policy_grad_item(
                    &self.params,
                    batch,
                    self.config.samples_per_user,
                    masks,
                    self.opts(),
                    &mut self.rng,
                )?;
                total += pg.mean_reward;
                count += 1;
                // ascend the expected reward
                pg.grads.scale(-1.0);
                pg.grads.retain(&ITEM_GEN);
                apply(&mut self.params, &pg.grads, &mut self.state, opt)?;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    fn social_disc_phase(&mut self, data: &TrainData) -> Result<f64> {
        if self.config.disc_steps == 0 || data.social_users.is_empty() || data.num_users() < 2 {
            return Ok(f64::NAN);
        }
        let gen = social_adv::generator(&self.params);
        let masks = self.config.exclude_observed.then_some(data.neighbors.as_slice());
        let samplers = policy_samplers(&gen, &data.social_users, data.num_users(), masks)?;
        let ties = self.shuffled(data.social.edges());
        let opt = self.config.optimizer();
        let (mut total, mut count) = (0.0, 0usize);
        for batch in ties.chunks(self.config.batch) {
            for _ in 0..self.config.disc_steps {
                let fake = draw_fakes(batch, &samplers, &mut self.rng);
                let mut out = social_adv::disc_loss_social(&self.params, batch, &fake)?;
                total += out.loss;
                count += batch.len() + fake.len();
                out.grads.retain(&SOCIAL_DISC);
                apply(&mut self.params, &out.grads, &mut self.state, opt)?;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    fn social_gen_phase(&mut self, data: &TrainData) -> Result<f64> {
        if self.config.gen_steps == 0 || data.social_users.is_empty() || data.num_users() < 2 {
            return Ok(f64::NAN);
        }
        let users = self.shuffled(&data.social_users);
        let opt = self.config.optimizer();
        let masks = self.config.exclude_observed.then_some(data.neighbors.as_slice());
        let (mut total, mut count) = (0.0, 0usize);
        for batch in users.chunks(self.config.batch) {
            for _ in 0..self.config.gen_steps {
                let mut pg = social_adv::gen_policy_grad_social(
                    &self.params,
                    batch,
                    self.config.samples_per_user,
                    masks,
                    self.opts(),
                    &mut self.rng,
                )?;
                total += pg.mean_reward;
                count += 1;
                pg.grads.scale(-1.0);
                pg.grads.retain(&SOCIAL_GEN);
                apply(&mut self.params, &pg.grads, &mut self.state, opt)?;
            }
        }
        Ok(total / count.max(1) as f64)
    }

    fn cycle_phase(&mut self, data: &TrainData) -> Result<f64> {
        if self.config.lambda > 0.0 {
            let users: Vec<usize> = (0..data.num_users()).collect();
            let users = self.shuffled(&users);
            let opt = self.config.optimizer();
            let keep = phase_groups(Phase::Cycle, self.config.freeze_cycle_embeddings);
            for batch in users.chunks(self.config.batch) {
                let mut out = cycle_loss(batch, &self.params)?;
                out.grads.scale(self.config.lambda);
                out.grads.retain(&keep);
                apply(&mut self.params, &out.grads, &mut self.state, opt)?;
            }
        }
        let all: Vec<usize> = (0..data.num_users()).collect();
        Ok(cycle_loss(&all, &self.params)?.loss / all.len() as f64)
    }

    /// Validation Precision@`eval_k`, or `None` without validation users.
    pub fn validate(&self, data: &TrainData) -> Result<Option<f64>> {
        validation_precision(&self.params, data, self.config.eval_k)
    }

    /// One full epoch of all five phases.
    pub fn train_epoch(&mut self, data: &TrainData, epoch: usize) -> Result<EpochRecord> {
        let disc_item_loss = self.run_phase(Phase::ItemDisc, data)?;
        let gen_item_reward = self.run_phase(Phase::ItemGen, data)?;
        let disc_social_loss = self.run_phase(Phase::SocialDisc, data)?;
        let gen_social_reward = self.run_phase(Phase::SocialGen, data)?;
        let cycle_loss = self.run_phase(Phase::Cycle, data)?;
        for (name, v) in [
            ("item discriminator loss", disc_item_loss),
            ("social discriminator loss", disc_social_loss),
            ("cycle loss", cycle_loss),
        ] {
            if v.is_infinite() {
                return Err(Error::NonFinite(name.to_owned()));
            }
        }
        Ok(EpochRecord {
            epoch,
            disc_item_loss,
            disc_social_loss,
            cycle_loss,
            gen_item_reward,
            gen_social_reward,
            val_precision: self.validate(data)?,
        })
    }
}

/// One sampler per listed user over the generator's (masked) policy.
fn policy_samplers(
    gen: &game::Generator<'_>,
    users: &[usize],
    num_users: usize,
    masks: Option<&[Vec<usize>]>,
) -> Result<Vec<Option<WeightedIndex<f64>>>> {
    let mut samplers = vec![None; num_users];
    for &u in users {
        let masked = masks.map(|m| m[u].as_slice()).unwrap_or(&[]);
        let policy = gen.policy(u, masked)?;
        let dist = WeightedIndex::new(&policy.probs)
            .map_err(|e| Error::InvalidArgument(format!("cannot sample for user {u}: {e}")))?;
        samplers[u] = Some(dist);
    }
    Ok(samplers)
}

/// One generated counterpart for the first member of every real pair.
fn draw_fakes<R: Rng>(
    batch: &[(usize, usize)],
    samplers: &[Option<WeightedIndex<f64>>],
    rng: &mut R,
) -> Vec<(usize, usize)> {
    batch
        .iter()
        .map(|&(u, _)| {
            let dist = samplers[u].as_ref().expect("every pair owner has a sampler");
            (u, dist.sample(rng))
        })
        .collect()
}

fn validation_precision(params: &ModelParams, data: &TrainData, k: usize) -> Result<Option<f64>> {
    match evaluate(params, &data.validation, &data.train, &[k]) {
        Ok(report) => Ok(report.precision(k)),
        Err(Error::NoEvaluableUsers) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    pub state: OptimState,
    pub history: TrainHistory,
}

/// Trains for `config.epochs` epochs, stopping early when validation
/// Precision@`eval_k` has not improved for `patience` epochs. Returns the
/// final parameters.
pub fn fit(config: &TrainConfig, data: &TrainData) -> Result<FitResult> {
    let mut trainer = Trainer::new(config.clone(), data.num_users(), data.num_items())?;
    let mut history = TrainHistory {
        initial_precision: trainer.validate(data)?,
        epochs: Vec::new(),
    };
    let mut best = history.initial_precision.unwrap_or(f64::NEG_INFINITY);
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let record = trainer.train_epoch(data, epoch)?;
        history.epochs.push(record);
        if config.patience > 0 {
            if let Some(p) = record.val_precision {
                if p > best {
                    best = p;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= config.patience {
                        break;
                    }
                }
            }
        }
    }
    Ok(FitResult {
        params: trainer.params,
        state: trainer.state,
        history,
    })
}
