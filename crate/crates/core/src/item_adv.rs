//! Item-domain adversarial pair: a sigmoid discriminator on user-item pairs
//! and a softmax generator over all items driven by the social-to-item
//! transferred user representation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{self, Discriminator, Generator};
use crate::math::sigmoid;
use crate::params::{Group, ModelParams};

pub use crate::game::{DiscLoss, PolicyGrad, PolicyOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Real,
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemSample {
    pub user: usize,
    pub item: usize,
    pub source: Source,
    /// `ln G(item | user)` for generated samples.
    pub log_prob: Option<f64>,
}

/// Real and generated user-item pairs for one discriminator step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ItemSampleBatch {
    pub samples: Vec<ItemSample>,
}

impl ItemSampleBatch {
    pub fn push_real(&mut self, user: usize, item: usize) {
        self.samples.push(ItemSample {
            user,
            item,
            source: Source::Real,
            log_prob: None,
        });
    }

    pub fn push_generated(&mut self, user: usize, item: usize, log_prob: f64) {
        self.samples.push(ItemSample {
            user,
            item,
            source: Source::Generated,
            log_prob: Some(log_prob),
        });
    }

    pub fn pairs(&self, source: Source) -> Vec<(usize, usize)> {
        self.samples
            .iter()
            .filter(|s| s.source == source)
            .map(|s| (s.user, s.item))
            .collect()
    }
}

pub(crate) fn discriminator(params: &ModelParams) -> Discriminator<'_> {
    Discriminator {
        users: &params.disc_user_item,
        user_group: Group::DiscUserItem,
        candidates: &params.disc_item,
        candidate_group: Group::DiscItem,
        bias: &params.disc_item_bias,
        bias_group: Group::DiscItemBias,
    }
}

pub(crate) fn generator(params: &ModelParams) -> Generator<'_> {
    Generator {
        net: &params.social_to_item,
        net_group: Group::SocialToItem,
        queries: &params.gen_user_social,
        query_group: Group::GenUserSocial,
        candidates: &params.gen_item,
        candidate_group: Group::GenItem,
        bias: &params.gen_item_bias,
        bias_group: Group::GenItemBias,
        exclude_self: false,
    }
}

fn check(params: &ModelParams, user: usize, item: usize) -> Result<()> {
    if user >= params.num_users() || item >= params.num_items() {
        return Err(Error::InvalidArgument(format!(
            "pair ({user}, {item}) outside {} users x {} items",
            params.num_users(),
            params.num_items()
        )));
    }
    Ok(())
}

/// Raw discriminator score `x_u·y_v + a_v`.
pub fn disc_score_item(params: &ModelParams, user: usize, item: usize) -> Result<f64> {
    check(params, user, item)?;
    Ok(discriminator(params).score(user, item))
}

/// Probability the discriminator assigns to `(user, item)` being real.
pub fn disc_prob_item(params: &ModelParams, user: usize, item: usize) -> Result<f64> {
    disc_score_item(params, user, item).map(sigmoid)
}

/// Generator distribution over all items for `user`.
pub fn gen_dist_item(params: &ModelParams, user: usize) -> Result<Vec<f64>> {
    check(params, user, 0)?;
    Ok(generator(params).policy(user, &[])?.probs)
}

/// As [`gen_dist_item`], with the listed items given zero probability.
pub fn gen_dist_item_masked(params: &ModelParams, user: usize, masked: &[usize]) -> Result<Vec<f64>> {
    check(params, user, 0)?;
    Ok(generator(params).policy(user, masked)?.probs)
}

/// `n` items drawn with replacement from the generator, with log-probabilities.
pub fn sample_items<R: Rng + ?Sized>(
    params: &ModelParams,
    user: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    game::sample(&gen_dist_item(params, user)?, n, rng)
}

/// Negated discriminator objective and its gradient (discriminator groups only).
pub fn disc_loss_item(
    params: &ModelParams,
    real: &[(usize, usize)],
    fake: &[(usize, usize)],
) -> Result<DiscLoss> {
    for &(u, v) in real.iter().chain(fake) {
        check(params, u, v)?;
    }
    discriminator(params).loss(params, real, fake)
}

/// REINFORCE estimate of the gradient of the expected reward
/// `E_{v~G(.|u)} ln(1 + exp f(u, v))`, averaged over `users`.
///
/// Touches the social user rows, the social-to-item network, the generator
/// item table and the generator item bias. `masks`, if given, lists per
/// user the items the generator may not propose.
pub fn gen_policy_grad_item<R: Rng + ?Sized>(
    params: &ModelParams,
    users: &[usize],
    n: usize,
    masks: Option<&[Vec<usize>]>,
    opts: PolicyOptions,
    rng: &mut R,
) -> Result<PolicyGrad> {
    for &u in users {
        check(params, u, 0)?;
    }
    let disc = discriminator(params);
    generator(params).policy_grad(params, users, n, |u, v| disc.reward(u, v), masks, opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_model, Matrix, Shape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, m: usize, d: usize) -> ModelParams {
        init_model(
            &Shape {
                num_users: n,
                num_items: m,
                dim: d,
                hidden: vec![2 * d; 3],
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn score_hand_dot_product() {
        let mut p = model(1, 1, 2);
        p.disc_user_item = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        p.disc_item = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        p.disc_item_bias[0] = 0.5;
        assert_eq!(disc_score_item(&p, 0, 0).unwrap(), 11.5);

        // bilinear in x
        p.disc_user_item = Matrix::from_vec(1, 2, vec![2.0, 4.0]).unwrap();
        assert_eq!(disc_score_item(&p, 0, 0).unwrap() - 0.5, 22.0);

        p.disc_user_item = Matrix::zeros(1, 2);
        p.disc_item = Matrix::zeros(1, 2);
        p.disc_item_bias[0] = 0.0;
        assert_eq!(disc_score_item(&p, 0, 0).unwrap(), 0.0);
        assert_eq!(disc_prob_item(&p, 0, 0).unwrap(), 0.5);
        assert!(disc_score_item(&p, 0, 1).is_err());
    }

    #[test]
    fn prob_saturates_without_overflow() {
        let mut p = model(1, 1, 1);
        p.disc_user_item = Matrix::zeros(1, 1);
        p.disc_item_bias[0] = 1000.0;
        assert_eq!(disc_prob_item(&p, 0, 0).unwrap(), 1.0);
        p.disc_item_bias[0] = -1000.0;
        let q = disc_prob_item(&p, 0, 0).unwrap();
        assert!(q.is_finite() && q < 1e-300);
        p.disc_item_bias[0] = 2.0;
        assert!((disc_prob_item(&p, 0, 0).unwrap() - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn equal_scores_give_uniform() {
        let mut p = model(2, 5, 3);
        p.gen_item = Matrix::zeros(5, 3);
        let dist = gen_dist_item(&p, 1).unwrap();
        assert!(dist.iter().all(|&g| (g - 0.2).abs() < 1e-15));
    }

    #[test]
    fn shift_invariance() {
        let mut p = model(2, 6, 3);
        let before = gen_dist_item(&p, 0).unwrap();
        p.gen_item_bias.iter_mut().for_each(|b| *b += 3.7);
        let after = gen_dist_item(&p, 0).unwrap();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_item_closed_form() {
        let mut p = model(1, 2, 2);
        p.gen_item = Matrix::zeros(2, 2);
        p.gen_item_bias = vec![0.0, 2f64.ln()];
        let dist = gen_dist_item(&p, 0).unwrap();
        assert!((dist[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((dist[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn masked_items_get_zero_mass() {
        let p = model(1, 4, 2);
        let dist = gen_dist_item_masked(&p, 0, &[1, 3]).unwrap();
        assert_eq!((dist[1], dist[3]), (0.0, 0.0));
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gen_dist_item_masked(&p, 0, &[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn point_mass_sampling() {
        let mut p = model(1, 4, 2);
        p.gen_item = Matrix::zeros(4, 2);
        p.gen_item_bias = vec![0.0, 0.0, 50.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draws = sample_items(&p, 0, 1000, &mut rng).unwrap();
        assert!(draws.iter().all(|&(v, lp)| v == 2 && lp <= 0.0 && lp > -1e-20));
        assert!(sample_items(&p, 0, 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_frequencies_and_determinism() {
        let mut p = model(1, 5, 2);
        p.gen_item = Matrix::zeros(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws = sample_items(&p, 0, n, &mut rng).unwrap();
        let mut counts = [0usize; 5];
        for &(v, lp) in &draws {
            counts[v] += 1;
            assert!((lp - 0.2f64.ln()).abs() < 1e-12);
        }
        let sigma = (n as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - 0.2 * n as f64).abs() <= 3.0 * sigma, "{counts:?}");
        }
        let again = sample_items(&p, 0, n, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(draws, again);
    }

    #[test]
    fn disc_loss_limits() {
        let mut p = model(2, 3, 2);
        p.disc_user_item = Matrix::zeros(2, 2);
        let real = [(0, 1), (1, 2)];
        let fake = [(0, 0), (1, 0), (1, 1)];
        let l = disc_loss_item(&p, &real, &fake).unwrap();
        assert!((l.loss - 5.0 * std::f64::consts::LN_2).abs() < 1e-12);

        p.disc_item_bias = vec![-40.0, 40.0, 40.0];
        let real = [(0, 1), (1, 2)];
        let fake = [(0, 0), (1, 0)];
        assert!(disc_loss_item(&p, &real, &fake).unwrap().loss < 1e-15);

        assert!(disc_loss_item(&p, &[], &fake).is_err());
        assert!(disc_loss_item(&p, &real, &[]).is_err());
    }

    #[test]
    fn disc_loss_touches_only_discriminator() {
        let p = model(2, 3, 2);
        let l = disc_loss_item(&p, &[(0, 1)], &[(1, 2)]).unwrap();
        let groups: Vec<Group> = l.grads.groups().map(|(g, _)| g).collect();
        assert_eq!(
            groups,
            vec![Group::DiscUserItem, Group::DiscItem, Group::DiscItemBias]
        );
    }

    #[test]
    fn zero_reward_gives_zero_gradient() {
        let mut p = model(3, 6, 2);
        p.disc_item_bias = vec![-1e4; 6];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = gen_policy_grad_item(&p, &[0, 1, 2], 8, None, PolicyOptions::default(), &mut rng)
            .unwrap();
        for (_, v) in g.grads.groups() {
            assert!(v.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_item_gradient_is_exactly_zero() {
        let p = model(3, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gen_policy_grad_item(&p, &[0, 2], 5, None, PolicyOptions::default(), &mut rng)
            .unwrap();
        for (_, v) in g.grads.groups() {
            assert!(v.iter().all(|&x| x == 0.0));
        }
        assert!(g.mean_reward > 0.0);
    }
}
