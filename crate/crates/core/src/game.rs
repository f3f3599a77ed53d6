//! Machinery shared by the item-domain and social-domain adversarial pairs:
//! an inner-product sigmoid discriminator and a softmax generator over
//! transferred user representations, optimized with REINFORCE.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{axpy, dot, sigmoid, softmax_in_place, softplus};
use crate::params::{Gradients, Group, MappingNet, Matrix, ModelParams, Trace};

/// Read-only view of one discriminator: `f(u, c) = users[u]·candidates[c] + bias[c]`.
pub(crate) struct Discriminator<'a> {
    pub users: &'a Matrix,
    pub user_group: Group,
    pub candidates: &'a Matrix,
    pub candidate_group: Group,
    pub bias: &'a [f64],
    pub bias_group: Group,
}

#[derive(Debug, Clone)]
pub struct DiscLoss {
    /// `-Σ_real ln σ(f) - Σ_fake ln(1 - σ(f))`
    pub loss: f64,
    pub grads: Gradients,
}

impl Discriminator<'_> {
    #[inline]
    pub fn score(&self, u: usize, c: usize) -> f64 {
        dot(self.users.row(u), self.candidates.row(c)) + self.bias[c]
    }

    /// Reward handed to the generator for proposing `c` to `u`: `ln(1 + e^f)`.
    #[inline]
    pub fn reward(&self, u: usize, c: usize) -> f64 {
        softplus(self.score(u, c))
    }

    pub fn loss(
        &self,
        params: &ModelParams,
        real: &[(usize, usize)],
        fake: &[(usize, usize)],
    ) -> Result<DiscLoss> {
        if real.is_empty() || fake.is_empty() {
            return Err(Error::InvalidArgument(
                "discriminator batches must be non-empty".to_owned(),
            ));
        }
        let d = self.users.cols();
        let mut g_users = vec![0.0; self.users.as_slice().len()];
        let mut g_cands = vec![0.0; self.candidates.as_slice().len()];
        let mut g_bias = vec![0.0; self.bias.len()];
        let mut loss = 0.0;
        let labelled = real
            .iter()
            .map(|p| (p, true))
            .chain(fake.iter().map(|p| (p, false)));
        for (&(u, c), is_real) in labelled {
            let f = self.score(u, c);
            // d/df of -ln σ(f) is σ(f) - 1; of -ln(1 - σ(f)) is σ(f)
            let df = if is_real {
                loss += softplus(-f);
                -sigmoid(-f)
            } else {
                loss += softplus(f);
                sigmoid(f)
            };
            axpy(&mut g_users[u * d..(u + 1) * d], df, self.candidates.row(c));
            axpy(&mut g_cands[c * d..(c + 1) * d], df, self.users.row(u));
            g_bias[c] += df;
        }
        let mut grads = Gradients::new();
        axpy(grads.slot(self.user_group, params), 1.0, &g_users);
        axpy(grads.slot(self.candidate_group, params), 1.0, &g_cands);
        axpy(grads.slot(self.bias_group, params), 1.0, &g_bias);
        Ok(DiscLoss { loss, grads })
    }
}

/// Read-only view of one generator:
/// `G(c | u) ∝ exp(net(queries[u])·candidates[c] + bias[c])`.
pub(crate) struct Generator<'a> {
    pub net: &'a MappingNet,
    pub net_group: Group,
    pub queries: &'a Matrix,
    pub query_group: Group,
    pub candidates: &'a Matrix,
    pub candidate_group: Group,
    pub bias: &'a [f64],
    pub bias_group: Group,
    /// Social generators never propose the querying user.
    pub exclude_self: bool,
}

/// A generator's conditional distribution for one user.
pub(crate) struct Policy {
    pub trace: Trace,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PolicyOptions {
    /// Subtract the per-user mean reward of the drawn samples.
    pub reward_baseline: bool,
}

#[derive(Debug, Clone)]
pub struct PolicyGrad {
    /// Ascent direction of the expected reward, averaged over the user batch.
    pub grads: Gradients,
    pub mean_reward: f64,
}

impl Generator<'_> {
    /// Policy for `u`; candidates listed in `masked` (and `u` itself when
    /// `exclude_self`) receive zero probability.
    pub fn policy(&self, u: usize, masked: &[usize]) -> Result<Policy> {
        let query = self.queries.row(u);
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("generator query row {u}")));
        }
        let trace = self.net.forward(query);
        let mapped = trace.output();
        let mut scores: Vec<f64> = (0..self.candidates.rows())
            .map(|c| dot(mapped, self.candidates.row(c)) + self.bias[c])
            .collect();
        if self.exclude_self {
            scores[u] = f64::NEG_INFINITY;
        }
        for &c in masked {
            scores[c] = f64::NEG_INFINITY;
        }
        if scores.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::InvalidArgument(format!(
                "user {u} has no candidate left to sample"
            )));
        }
        softmax_in_place(&mut scores);
        Ok(Policy {
            trace,
            probs: scores,
        })
    }

    /// Adds `scale * Σ_c weights[c] ∇ score(u, c)` into `grads`. Since
    /// `∇ ln G(v|u) = ∇ score(v) - Σ_c G(c) ∇ score(c)`, any REINFORCE
    /// estimate reduces to one such weighted sum.
    pub fn backprop_scores(
        &self,
        params: &ModelParams,
        u: usize,
        policy: &Policy,
        weights: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) {
        let d = self.candidates.cols();
        let mapped = policy.trace.output();
        let mut g_mapped = vec![0.0; d];
        {
            let g_bias = grads.slot(self.bias_group, params);
            for (gb, &w) in g_bias.iter_mut().zip(weights) {
                *gb += scale * w;
            }
        }
        {
            let g_cands = grads.slot(self.candidate_group, params);
            for (c, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    axpy(&mut g_cands[c * d..(c + 1) * d], scale * w, mapped);
                    axpy(&mut g_mapped, scale * w, self.candidates.row(c));
                }
            }
        }
        let g_query = {
            let g_net = grads.slot(self.net_group, params);
            self.net.backward(&policy.trace, &g_mapped, g_net)
        };
        let g_queries = grads.slot(self.query_group, params);
        axpy(&mut g_queries[u * d..(u + 1) * d], 1.0, &g_query);
    }

    /// Monte-Carlo policy gradient: `n` draws per user, rewards from `reward`.
    #[allow(clippy::too_many_arguments)]
    pub fn policy_grad<R: Rng + ?Sized>(
        &self,
        params: &ModelParams,
        users: &[usize],
        n: usize,
        reward: impl Fn(usize, usize) -> f64,
        masks: Option<&[Vec<usize>]>,
        opts: PolicyOptions,
        rng: &mut R,
    ) -> Result<PolicyGrad> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "samples per user must be at least 1".to_owned(),
            ));
        }
        let mut grads = Gradients::new();
        // allocate every touched group so callers see a consistent set
        for g in [
            self.bias_group,
            self.candidate_group,
            self.net_group,
            self.query_group,
        ] {
            grads.slot(g, params);
        }
        if users.is_empty() {
            return Ok(PolicyGrad {
                grads,
                mean_reward: 0.0,
            });
        }
        let scale = 1.0 / users.len() as f64;
        let mut reward_total = 0.0;
        let mut weights = vec![0.0; self.candidates.rows()];
        for &u in users {
            let masked = masks.map(|m| m[u].as_slice()).unwrap_or(&[]);
            let policy = self.policy(u, masked)?;
            let draws = sample(&policy.probs, n, rng)?;
            let mut rewards: Vec<f64> = draws.iter().map(|&(c, _)| reward(u, c)).collect();
            let mean = rewards.iter().sum::<f64>() / n as f64;
            reward_total += mean;
            if opts.reward_baseline {
                rewards.iter_mut().for_each(|r| *r -= mean);
            }
            // weights[c] = (1/n) Σ_t r_t (1[c = v_t] - G(c))
            weights.iter_mut().for_each(|w| *w = 0.0);
            let mut centre = 0.0;
            for (&(c, _), &r) in draws.iter().zip(&rewards) {
                weights[c] += r / n as f64;
                centre += r / n as f64;
            }
            for (w, &p) in weights.iter_mut().zip(&policy.probs) {
                *w -= centre * p;
            }
            self.backprop_scores(params, u, &policy, &weights, scale, &mut grads);
        }
        Ok(PolicyGrad {
            grads,
            mean_reward: reward_total * scale,
        })
    }
}

/// `n` i.i.d. draws from `probs`, each with its log-probability.
pub(crate) fn sample<R: Rng + ?Sized>(
    probs: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<(usize, f64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be at least 1".to_owned(),
        ));
    }
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::InvalidArgument(format!("cannot sample from distribution: {e}")))?;
    Ok((0..n)
        .map(|_| {
            let c = dist.sample(rng);
            (c, probs[c].ln())
        })
        .collect())
}
