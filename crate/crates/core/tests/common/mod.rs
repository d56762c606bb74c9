//! Brute-force reference implementations used as test oracles.
//!
//! Everything here is written from the definitions, without calling the
//! library code it is compared against (dataset loading aside).

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Repeats "drop every pair whose user or item has < core pairs" until
/// nothing changes. Removal is simultaneous, not alternating.
pub fn brute_kcore(pairs: &[(u32, u32)], core: usize) -> Vec<(u32, u32)> {
    let mut cur = pairs.to_vec();
    loop {
        let mut users: BTreeMap<u32, usize> = BTreeMap::new();
        let mut items: BTreeMap<u32, usize> = BTreeMap::new();
        for (u, i) in &cur {
            *users.entry(*u).or_default() += 1;
            *items.entry(*i).or_default() += 1;
        }
        let next: Vec<(u32, u32)> = cur
            .iter()
            .copied()
            .filter(|(u, i)| users[u] >= core && items[i] >= core)
            .collect();
        if next.len() == cur.len() {
            return next;
        }
        cur = next;
    }
}

/// DCG / IDCG straight from the definition, binary relevance.
pub fn brute_ndcg(ranked: &[usize], relevant: &BTreeSet<usize>, n: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(n).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..n.min(relevant.len()) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    dcg / idcg
}

/// Two-sided Student-t interval width from statrs quantiles.
pub fn statrs_width(scores: &[f64], level: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .unwrap()
        .inverse_cdf(0.5 + level / 2.0);
    2.0 * t * var.sqrt() / n.sqrt()
}

/// Replays the stopping rule over `scores` in the given order, returning
/// (stop fold, mean of the executed scores).
pub fn brute_replay(
    scores: &[f64],
    order: &[usize],
    alpha: f64,
    level: f64,
    e_min: usize,
) -> (usize, f64) {
    let k = order.len();
    let seq: Vec<f64> = order.iter().map(|&f| scores[f]).collect();
    let mut widths = Vec::new();
    let mut stop = k;
    for n in 2..=k {
        let w = statrs_width(&seq[..n], level);
        widths.push(w);
        if n >= e_min {
            let (prev, last) = (widths[widths.len() - 2], widths[widths.len() - 1]);
            if last == 0.0 || (prev - last).abs() <= alpha / last {
                stop = n;
                break;
            }
        }
    }
    let mean = seq[..stop].iter().sum::<f64>() / stop as f64;
    (stop, mean)
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, k - 1);
            out.push(q);
        }
    }
    out
}

pub fn pct_diff(x: f64, y: f64) -> f64 {
    if x == 0.0 && y == 0.0 {
        0.0
    } else {
        (x - y).abs() / ((x + y) / 2.0) * 100.0
    }
}

pub fn mean_and_sample_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    (
        m,
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt(),
    )
}

/// Random (user, item) pairs with possible repeats.
pub fn random_pairs(rng: &mut StdRng, max_len: usize, users: u32, items: u32) -> Vec<(u32, u32)> {
    let len = rng.random_range(1..=max_len);
    (0..len)
        .map(|_| (rng.random_range(0..users), rng.random_range(0..items)))
        .collect()
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Location of MovieLens-100K `u.data`: `$EFOLD_ML100K`, else a few
/// conventional paths.
pub fn ml100k_path() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("EFOLD_ML100K") {
        return Some(PathBuf::from(p));
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..");
    [
        root.join("data/ml-100k/u.data"),
        PathBuf::from("/root/data/ml-100k/u.data"),
        PathBuf::from("ml-100k/u.data"),
    ]
    .into_iter()
    .find(|p| p.exists())
}
