//! Top-K ranking and Precision@K / NDCG@K evaluation.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::dataset::InteractionSet;
use crate::error::{Error, Result};
use crate::math::dot;
use crate::params::ModelParams;

/// Anything that assigns a score to every item for a user.
pub trait Scorer: Sync {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    /// Writes one score per item into `out` (length `num_items`).
    fn score_items(&self, user: usize, out: &mut [f64]);
}

/// Recommendation scores come from the generator side: the social user
/// representation mapped into the item domain against the generator item table.
impl Scorer for ModelParams {
    fn num_users(&self) -> usize {
        ModelParams::num_users(self)
    }

    fn num_items(&self) -> usize {
        ModelParams::num_items(self)
    }

    fn score_items(&self, user: usize, out: &mut [f64]) {
        let trace = self.social_to_item.forward(self.gen_user_social.row(user));
        let mapped = trace.output();
        for (j, s) in out.iter_mut().enumerate() {
            *s = dot(mapped, self.gen_item.row(j)) + self.gen_item_bias[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
    pub scores: Vec<f64>,
    /// Fewer than the requested K candidates were available.
    pub short: bool,
}

#[inline]
fn by_score_then_index(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Top-`k` items by descending score, lower index first on ties. `exclude`
/// must be sorted.
pub fn rank_scores(user: usize, scores: &[f64], exclude: &[usize], k: usize) -> RankedList {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| exclude.binary_search(i).is_err())
        .collect();
    let short = candidates.len() < k;
    let cmp = by_score_then_index(scores);
    if !short && k < candidates.len() && k > 0 {
        candidates.select_nth_unstable_by(k - 1, &cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(&cmp);
    candidates.truncate(k);
    RankedList {
        user,
        scores: candidates.iter().map(|&i| scores[i]).collect(),
        items: candidates,
        short,
    }
}

/// Top-`k` recommendations for `user` with `exclude` (sorted) removed.
pub fn recommend_topk<S: Scorer + ?Sized>(
    scorer: &S,
    user: usize,
    k: usize,
    exclude: &[usize],
) -> Result<RankedList> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".to_owned()));
    }
    if user >= scorer.num_users() {
        return Err(Error::InvalidArgument(format!(
            "user {user} outside {} users",
            scorer.num_users()
        )));
    }
    let mut scores = vec![0.0; scorer.num_items()];
    scorer.score_items(user, &mut scores);
    Ok(rank_scores(user, &scores, exclude, k))
}

/// `|top-k ∩ relevant| / k`; `None` when `relevant` (sorted) is empty.
pub fn precision_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    Some(hits as f64 / k as f64)
}

/// Binary-relevance NDCG with `log2(rank + 1)` discount and the ideal DCG
/// truncated at `min(|relevant|, k)`; `None` when `relevant` is empty.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| discount(r + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Some(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub k: usize,
    pub precision: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub users: usize,
}

impl MetricReport {
    pub fn precision(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.precision)
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.ndcg)
    }

    /// One tab-separated `metric k value users` record per metric and K.
    pub fn records(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(2 * self.rows.len());
        for (name, pick) in [
            ("precision", (|r: &MetricRow| r.precision) as fn(&MetricRow) -> f64),
            ("ndcg", |r: &MetricRow| r.ndcg),
        ] {
            for row in &self.rows {
                out.push(format!(
                    "metric={name}\tk={}\tvalue={:.10}\tusers={}",
                    row.k,
                    pick(row),
                    self.users
                ));
            }
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "evaluated users: {}", self.users)?;
        writeln!(f, "{:>4}  {:>12}  {:>12}", "K", "Precision@K", "NDCG@K")?;
        for row in &self.rows {
            writeln!(f, "{:>4}  {:>12.6}  {:>12.6}", row.k, row.precision, row.ndcg)?;
        }
        Ok(())
    }
}

/// Averages Precision@K and NDCG@K over users with at least one test item,
/// ranking all items not seen in `train`.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    test: &InteractionSet,
    train: &InteractionSet,
    ks: &[usize],
) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid K list {ks:?}")));
    }
    if test.num_users() != scorer.num_users() || test.num_items() != scorer.num_items() {
        return Err(Error::Dimension(format!(
            "model covers {} users x {} items, data has {} x {}",
            scorer.num_users(),
            scorer.num_items(),
            test.num_users(),
            test.num_items()
        )));
    }
    let relevant = test.items_by_user();
    let seen = train.items_by_user();
    let max_k = *ks.iter().max().unwrap();

    let users: Vec<usize> = (0..relevant.len())
        .filter(|&u| !relevant[u].is_empty())
        .collect();
    // per-user rows collected in user order so the reduction below is fixed
    let per_user: Vec<Vec<(f64, f64)>> = users
        .par_iter()
        .map_init(
            || vec![0.0; scorer.num_items()],
            |scores, &u| {
                scorer.score_items(u, scores);
                let ranked = rank_scores(u, scores, &seen[u], max_k);
                ks.iter()
                    .map(|&k| {
                        (
                            precision_at_k(&ranked.items, &relevant[u], k).unwrap(),
                            ndcg_at_k(&ranked.items, &relevant[u], k).unwrap(),
                        )
                    })
                    .collect()
            },
        )
        .collect();
    if per_user.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }

    let n = per_user.len() as f64;
    let rows = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let (mut p, mut g) = (0.0, 0.0);
            for row in &per_user {
                p += row[i].0;
                g += row[i].1;
            }
            MetricRow {
                k,
                precision: p / n,
                ndcg: g / n,
            }
        })
        .collect();
    Ok(MetricReport {
        rows,
        users: per_user.len(),
    })
}
