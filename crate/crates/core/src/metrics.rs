//! Top-n ranking quality: NDCG@n with binary relevance, averaged per fold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::FoldSplit;

pub const NDCG_AT_10: &str = "ndcg@10";

/// Produces a user's top-`n` list of dense item indices, best first.
///
/// `train_items` is the sorted set of the user's training items; returned
/// lists must not contain any of them and must not repeat an item.
pub trait Ranker: Sync {
    fn top_n(&self, user: usize, train_items: &[usize], n: usize) -> Result<Vec<usize>>;
}

impl<F> Ranker for F
where
    F: Fn(usize, &[usize], usize) -> Result<Vec<usize>> + Sync,
{
    fn top_n(&self, user: usize, train_items: &[usize], n: usize) -> Result<Vec<usize>> {
        self(user, train_items, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub fold_index: usize,
    pub metric_name: String,
    pub value: f64,
    pub n_evaluated_users: usize,
    /// Test users without any training interaction (cold start).
    pub n_skipped_users: usize,
}

/// Discount of the 1-based rank `rank`: `1 / log2(rank + 1)`.
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG over the first `n` entries of `ranked`; `relevant` must be sorted.
pub fn ndcg_at_n(ranked: &[usize], relevant: &[usize], n: usize) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::Metric(
            "NDCG undefined for an empty relevant set".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Metric("NDCG cutoff must be at least 1".into()));
    }
    let dcg: f64 = ranked
        .iter()
        .take(n)
        .enumerate()
        .filter(|(_, item)| relevant.binary_search(item).is_ok())
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(n)).map(discount).sum();
    Ok(dcg / ideal)
}

/// Mean NDCG@n over users that appear in both the test and train side.
///
/// Users are evaluated in parallel but summed in ascending user index, so the
/// value is bit-stable regardless of thread count.
pub fn evaluate_fold<R: Ranker + ?Sized>(
    ranker: &R,
    split: &FoldSplit<'_>,
    n: usize,
) -> Result<FoldScore> {
    let train = split.train_items_by_user();
    let test = split.test_items_by_user();

    let per_user: Vec<Option<f64>> = (0..test.len())
        .into_par_iter()
        .map(|user| -> Result<Option<f64>> {
            let held_out = &test[user];
            if held_out.is_empty() || train[user].is_empty() {
                return Ok(None);
            }
            let relevant: Vec<usize> = held_out
                .iter()
                .copied()
                .filter(|i| train[user].binary_search(i).is_err())
                .collect();
            if relevant.is_empty() {
                return Ok(None);
            }
            let ranked = ranker.top_n(user, &train[user], n)?;
            check_ranked(user, &ranked, &train[user])?;
            ndcg_at_n(&ranked, &relevant, n).map(Some)
        })
        .collect::<Result<_>>()?;

    let cold = (0..test.len())
        .filter(|&u| !test[u].is_empty() && train[u].is_empty())
        .count();
    let (sum, count) = per_user
        .iter()
        .flatten()
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        return Err(Error::Metric(format!(
            "fold {}: no evaluable users",
            split.fold_index
        )));
    }
    if cold > 0 {
        log::info!(
            "fold {}: skipped {cold} test users without training interactions",
            split.fold_index
        );
    }
    Ok(FoldScore {
        fold_index: split.fold_index,
        metric_name: metric_name(n),
        value: sum / count as f64,
        n_evaluated_users: count,
        n_skipped_users: cold,
    })
}

pub fn metric_name(n: usize) -> String {
    format!("ndcg@{n}")
}

fn check_ranked(user: usize, ranked: &[usize], train: &[usize]) -> Result<()> {
    if let Some(item) = ranked.iter().find(|i| train.binary_search(i).is_ok()) {
        return Err(Error::Metric(format!(
            "ranked list of user {user} contains training item {item}"
        )));
    }
    let mut sorted = ranked.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Metric(format!(
            "ranked list of user {user} repeats an item"
        )));
    }
    Ok(())
}
