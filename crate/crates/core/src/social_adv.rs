//! Social-domain adversarial pair: a sigmoid discriminator on user-user pairs
//! and a softmax generator over all other users driven by the item-to-social
//! transferred user representation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{self, Discriminator, Generator};
use crate::item_adv::Source;
use crate::math::sigmoid;
use crate::params::{Group, ModelParams};

pub use crate::game::{DiscLoss, PolicyGrad, PolicyOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocialSample {
    pub user: usize,
    pub other: usize,
    pub source: Source,
    pub log_prob: Option<f64>,
}

/// Real and generated user-user pairs for one discriminator step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocialSampleBatch {
    pub samples: Vec<SocialSample>,
}

impl SocialSampleBatch {
    pub fn push_real(&mut self, user: usize, other: usize) -> Result<()> {
        self.push(user, other, Source::Real, None)
    }

    pub fn push_generated(&mut self, user: usize, other: usize, log_prob: f64) -> Result<()> {
        self.push(user, other, Source::Generated, Some(log_prob))
    }

    fn push(&mut self, user: usize, other: usize, source: Source, log_prob: Option<f64>) -> Result<()> {
        if user == other {
            return Err(Error::InvalidArgument(format!("self pair ({user}, {user})")));
        }
        self.samples.push(SocialSample {
            user,
            other,
            source,
            log_prob,
        });
        Ok(())
    }

    pub fn pairs(&self, source: Source) -> Vec<(usize, usize)> {
        self.samples
            .iter()
            .filter(|s| s.source == source)
            .map(|s| (s.user, s.other))
            .collect()
    }
}

pub(crate) fn discriminator(params: &ModelParams) -> Discriminator<'_> {
    Discriminator {
        users: &params.disc_user_social,
        user_group: Group::DiscUserSocial,
        candidates: &params.disc_user_social,
        candidate_group: Group::DiscUserSocial,
        bias: &params.disc_social_bias,
        bias_group: Group::DiscSocialBias,
    }
}

pub(crate) fn generator(params: &ModelParams) -> Generator<'_> {
    Generator {
        net: &params.item_to_social,
        net_group: Group::ItemToSocial,
        queries: &params.gen_user_item,
        query_group: Group::GenUserItem,
        candidates: &params.gen_user_social,
        candidate_group: Group::GenUserSocial,
        bias: &params.gen_social_bias,
        bias_group: Group::GenSocialBias,
        exclude_self: true,
    }
}

fn check_pair(params: &ModelParams, user: usize, other: usize) -> Result<()> {
    let n = params.num_users();
    if user >= n || other >= n {
        return Err(Error::InvalidArgument(format!(
            "pair ({user}, {other}) outside {n} users"
        )));
    }
    if user == other {
        return Err(Error::InvalidArgument(format!(
            "social pair must join distinct users, got ({user}, {user})"
        )));
    }
    Ok(())
}

fn check_user(params: &ModelParams, user: usize) -> Result<()> {
    let n = params.num_users();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "social generator needs at least two users".to_owned(),
        ));
    }
    if user >= n {
        return Err(Error::InvalidArgument(format!("user {user} outside {n} users")));
    }
    Ok(())
}

/// Raw score `x_i·x_k + a_k`.
pub fn disc_score_social(params: &ModelParams, user: usize, other: usize) -> Result<f64> {
    check_pair(params, user, other)?;
    Ok(discriminator(params).score(user, other))
}

/// Probability the discriminator assigns to `user` and `other` being connected.
pub fn disc_prob_social(params: &ModelParams, user: usize, other: usize) -> Result<f64> {
    disc_score_social(params, user, other).map(sigmoid)
}

/// Generator distribution over users for `user`, indexed by user id; the
/// entry for `user` itself is exactly zero.
pub fn gen_dist_social(params: &ModelParams, user: usize) -> Result<Vec<f64>> {
    check_user(params, user)?;
    Ok(generator(params).policy(user, &[])?.probs)
}

/// `n` users drawn with replacement from the generator, with log-probabilities.
pub fn sample_users<R: Rng + ?Sized>(
    params: &ModelParams,
    user: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    game::sample(&gen_dist_social(params, user)?, n, rng)
}

pub fn disc_loss_social(
    params: &ModelParams,
    real: &[(usize, usize)],
    fake: &[(usize, usize)],
) -> Result<DiscLoss> {
    for &(u, k) in real.iter().chain(fake) {
        check_pair(params, u, k)?;
    }
    discriminator(params).loss(params, real, fake)
}

/// REINFORCE estimate of the gradient of `E_{k~G(.|u)} ln(1 + exp f(u, k))`,
/// averaged over `users`.
///
/// Touches the item-domain user rows of the batch, the item-to-social network,
/// the social user table (as candidates) and the social generator bias.
pub fn gen_policy_grad_social<R: Rng + ?Sized>(
    params: &ModelParams,
    users: &[usize],
    n: usize,
    masks: Option<&[Vec<usize>]>,
    opts: PolicyOptions,
    rng: &mut R,
) -> Result<PolicyGrad> {
    for &u in users {
        check_user(params, u)?;
    }
    let disc = discriminator(params);
    generator(params).policy_grad(params, users, n, |u, k| disc.reward(u, k), masks, opts, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{init_model, Matrix, Shape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, d: usize) -> ModelParams {
        init_model(
            &Shape {
                num_users: n,
                num_items: 3,
                dim: d,
                hidden: vec![2 * d; 3],
            },
            5,
        )
        .unwrap()
    }

    #[test]
    fn disc_prob_cases() {
        let mut p = model(2, 2);
        p.disc_user_social = Matrix::zeros(2, 2);
        assert_eq!(disc_prob_social(&p, 0, 1).unwrap(), 0.5);
        p.disc_user_social = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(disc_prob_social(&p, 0, 1).unwrap(), 0.5);
        p.disc_user_social = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((disc_prob_social(&p, 0, 1).unwrap() - 0.880_797_077_977_882_3).abs() < 1e-15);
        assert!(disc_prob_social(&p, 1, 1).is_err());
    }

    #[test]
    fn uniform_over_others() {
        let mut p = model(4, 3);
        p.gen_user_social = Matrix::zeros(4, 3);
        let dist = gen_dist_social(&p, 2).unwrap();
        assert_eq!(dist[2], 0.0);
        for k in [0, 1, 3] {
            assert!((dist[k] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_two_candidates() {
        let mut p = model(3, 2);
        p.gen_user_social = Matrix::zeros(3, 2);
        p.gen_social_bias = vec![0.0, 3f64.ln(), 100.0];
        let dist = gen_dist_social(&p, 2).unwrap();
        assert!((dist[0] - 0.25).abs() < 1e-15);
        assert!((dist[1] - 0.75).abs() < 1e-15);
        assert_eq!(dist[2], 0.0);
    }

    #[test]
    fn single_user_rejected() {
        let p = model(1, 2);
        assert!(gen_dist_social(&p, 0).is_err());
    }

    #[test]
    fn sampling_point_mass_frequency_determinism() {
        let mut p = model(4, 2);
        p.gen_user_social = Matrix::zeros(4, 2);
        p.gen_social_bias = vec![0.0, 0.0, 0.0, 50.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_users(&p, 0, 500, &mut rng)
            .unwrap()
            .iter()
            .all(|&(k, _)| k == 3));

        p.gen_social_bias = vec![0.0; 4];
        let n = 90_000;
        let draws = sample_users(&p, 1, n, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut counts = [0usize; 4];
        draws.iter().for_each(|&(k, _)| counts[k] += 1);
        assert_eq!(counts[1], 0);
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for k in [0, 2, 3] {
            assert!((counts[k] as f64 - n as f64 / 3.0).abs() <= 3.0 * sigma);
        }
        assert_eq!(draws, sample_users(&p, 1, n, &mut ChaCha8Rng::seed_from_u64(4)).unwrap());
    }

    #[test]
    fn disc_loss_limits() {
        let mut p = model(3, 2);
        p.disc_user_social = Matrix::zeros(3, 2);
        let l = disc_loss_social(&p, &[(0, 1), (1, 0)], &[(0, 2)]).unwrap();
        assert!((l.loss - 3.0 * std::f64::consts::LN_2).abs() < 1e-12);
        p.disc_social_bias = vec![40.0, 40.0, -40.0];
        assert!(disc_loss_social(&p, &[(0, 1), (1, 0)], &[(0, 2)]).unwrap().loss < 1e-15);
        assert!(disc_loss_social(&p, &[(0, 0)], &[(0, 2)]).is_err());
    }

    #[test]
    fn zero_reward_and_two_user_degenerate() {
        let mut p = model(5, 2);
        p.disc_social_bias = vec![-1e4; 5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = gen_policy_grad_social(&p, &[0, 3], 4, None, PolicyOptions::default(), &mut rng)
            .unwrap();
        assert!(g.grads.groups().all(|(_, v)| v.iter().all(|&x| x == 0.0)));

        let p = model(2, 4);
        let g = gen_policy_grad_social(&p, &[0, 1], 6, None, PolicyOptions::default(), &mut rng)
            .unwrap();
        assert!(g.grads.groups().all(|(_, v)| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn batch_rejects_self_pairs() {
        let mut b = SocialSampleBatch::default();
        assert!(b.push_real(2, 2).is_err());
        b.push_real(0, 1).unwrap();
        b.push_generated(0, 2, -0.5).unwrap();
        assert_eq!(b.pairs(Source::Real), vec![(0, 1)]);
        assert_eq!(b.pairs(Source::Generated), vec![(0, 2)]);
    }
}
