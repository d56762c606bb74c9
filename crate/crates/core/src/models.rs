//! Baseline recommenders (popularity, item-based kNN) and ingestion of ranked
//! lists produced by external frameworks.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::folding::{materialize_fold, FoldSplit, PartitionPlan};
use crate::metrics::{evaluate_fold, FoldScore, Ranker};

/// Neighbourhood size used when none is configured.
pub const DEFAULT_NEIGHBORS: usize = 100;

/// Binary user-item matrix of one training side, in both orientations.
#[derive(Debug, Clone)]
pub struct TrainMatrix {
    pub n_items: usize,
    /// Sorted item indices per user.
    pub user_items: Vec<Vec<usize>>,
    /// Sorted user indices per item.
    pub item_users: Vec<Vec<usize>>,
}

impl TrainMatrix {
    pub fn from_split(split: &FoldSplit<'_>) -> Self {
        Self::from_user_items(split.train_items_by_user(), split.dataset.n_items())
    }

    pub fn from_user_items(user_items: Vec<Vec<usize>>, n_items: usize) -> Self {
        let mut item_users = vec![Vec::new(); n_items];
        for (u, items) in user_items.iter().enumerate() {
            for &i in items {
                item_users[i].push(u);
            }
        }
        Self {
            n_items,
            user_items,
            item_users,
        }
    }

    pub fn n_interactions(&self) -> usize {
        self.user_items.iter().map(Vec::len).sum()
    }
}

/// Candidate items in ranking order: score descending, then item index.
fn top_by_score(scores: &[f64], train_items: &[usize], n: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len())
        .filter(|i| train_items.binary_search(i).is_err())
        .collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if candidates.len() > n {
        candidates.select_nth_unstable_by(n, cmp);
        candidates.truncate(n);
    }
    candidates.sort_unstable_by(cmp);
    candidates
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopModel {
    pub item_counts: Vec<usize>,
    order: Vec<usize>,
}

pub fn pop_train(train: &TrainMatrix) -> Result<PopModel> {
    if train.n_interactions() == 0 {
        return Err(Error::Model("popularity model needs training data".into()));
    }
    let item_counts: Vec<usize> = train.item_users.iter().map(Vec::len).collect();
    let mut order: Vec<usize> = (0..item_counts.len()).collect();
    order.sort_by(|a, b| item_counts[*b].cmp(&item_counts[*a]).then(a.cmp(b)));
    Ok(PopModel { item_counts, order })
}

impl Ranker for PopModel {
    fn top_n(&self, _user: usize, train_items: &[usize], n: usize) -> Result<Vec<usize>> {
        Ok(self
            .order
            .iter()
            .copied()
            .filter(|i| train_items.binary_search(i).is_err())
            .take(n)
            .collect())
    }
}

/// Item-based kNN over binary cosine similarity, no shrinkage.
#[derive(Debug, Clone)]
pub struct ItemKnnModel {
    pub neighbors: usize,
    /// Per item, its top neighbours as (item, similarity), most similar first.
    pub neighbor_lists: Vec<Vec<(usize, f64)>>,
    /// Per item `j`, every `(i, sim)` such that `j` is in `i`'s list.
    reverse: Vec<Vec<(usize, f64)>>,
}

/// Cosine similarity between two sorted user sets.
pub fn cosine(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    common as f64 / ((a.len() * b.len()) as f64).sqrt()
}

pub fn itemknn_train(train: &TrainMatrix, neighbors: usize) -> Result<ItemKnnModel> {
    if train.n_interactions() == 0 {
        return Err(Error::Model("item-kNN model needs training data".into()));
    }
    if neighbors == 0 {
        return Err(Error::Model(
            "item-kNN neighbourhood size must be at least 1".into(),
        ));
    }
    let n_items = train.n_items;
    let neighbor_lists: Vec<Vec<(usize, f64)>> = (0..n_items)
        .into_par_iter()
        .map_init(
            || vec![0u32; n_items],
            |co, i| {
                let users_i = &train.item_users[i];
                let mut touched = Vec::new();
                for &u in users_i {
                    for &j in &train.user_items[u] {
                        if j != i {
                            if co[j] == 0 {
                                touched.push(j);
                            }
                            co[j] += 1;
                        }
                    }
                }
                let norm_i = users_i.len() as f64;
                let mut list: Vec<(usize, f64)> = touched
                    .iter()
                    .map(|&j| {
                        let sim = co[j] as f64 / (norm_i * train.item_users[j].len() as f64).sqrt();
                        co[j] = 0;
                        (j, sim.min(1.0))
                    })
                    .collect();
                let cmp =
                    |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
                if list.len() > neighbors {
                    list.select_nth_unstable_by(neighbors, cmp);
                    list.truncate(neighbors);
                }
                list.sort_unstable_by(cmp);
                list
            },
        )
        .collect();

    let mut reverse = vec![Vec::new(); n_items];
    for (i, list) in neighbor_lists.iter().enumerate() {
        for &(j, sim) in list {
            reverse[j].push((i, sim));
        }
    }
    Ok(ItemKnnModel {
        neighbors,
        neighbor_lists,
        reverse,
    })
}

impl ItemKnnModel {
    /// `score(i) = Σ sim(i, j)` over the user's items `j` that are among
    /// `i`'s stored neighbours. Summation follows ascending `j`.
    pub fn scores(&self, train_items: &[usize]) -> Vec<f64> {
        let mut scores = vec![0.0; self.neighbor_lists.len()];
        for &j in train_items {
            for &(i, sim) in &self.reverse[j] {
                scores[i] += sim;
            }
        }
        scores
    }
}

impl Ranker for ItemKnnModel {
    fn top_n(&self, _user: usize, train_items: &[usize], n: usize) -> Result<Vec<usize>> {
        Ok(top_by_score(&self.scores(train_items), train_items, n))
    }
}

/// Full ranking of every non-train item, for callers that need more than top-n.
pub fn itemknn_score(model: &ItemKnnModel, user_train_items: &[usize]) -> Vec<usize> {
    top_by_score(
        &model.scores(user_train_items),
        user_train_items,
        model.neighbor_lists.len(),
    )
}

/// External-score CSV header, required verbatim.
pub const EXTERNAL_HEADER: [&str; 6] = [
    "algorithm",
    "fold_index",
    "user_id",
    "rank",
    "item_id",
    "score",
];

#[derive(Debug, Deserialize)]
struct ExternalRow {
    algorithm: String,
    fold_index: usize,
    user_id: String,
    rank: usize,
    item_id: String,
    score: f64,
}

/// Ranked lists computed by another framework, keyed by (fold, user id).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScoreTable {
    pub algorithm: String,
    pub lists: BTreeMap<(usize, String), Vec<(String, f64)>>,
}

/// Parses the external-score CSV, keeping rows of `algorithm_name`.
///
/// Rows must be grouped per (fold, user) with ranks 1, 2, ... and scores that
/// never increase. `k` bounds the fold index; `min_rows` is the least list
/// length accepted.
pub fn load_external_scores(
    path: &Path,
    algorithm_name: &str,
    k: usize,
    min_rows: usize,
) -> Result<ExternalScoreTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(EXTERNAL_HEADER.iter().copied()) {
        return Err(Error::Model(format!(
            "{}: expected header '{}', found '{}'",
            path.display(),
            EXTERNAL_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let bad = |line: u64, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let mut lists: BTreeMap<(usize, String), Vec<(String, f64)>> = BTreeMap::new();
    let mut current: Option<(usize, String)> = None;
    for (ix, row) in reader.deserialize::<ExternalRow>().enumerate() {
        let line = ix as u64 + 2;
        let row = row.map_err(|e| bad(line, e.to_string()))?;
        if row.algorithm != algorithm_name {
            continue;
        }
        if row.fold_index >= k {
            return Err(bad(
                line,
                format!("fold index {} out of range for k={k}", row.fold_index),
            ));
        }
        if !row.score.is_finite() {
            return Err(bad(line, "non-finite score".into()));
        }
        let key = (row.fold_index, row.user_id);
        if current.as_ref() != Some(&key) {
            if lists.contains_key(&key) {
                return Err(bad(
                    line,
                    format!("rows of fold {} user {} are not contiguous", key.0, key.1),
                ));
            }
            lists.insert(key.clone(), Vec::new());
            current = Some(key.clone());
        }
        let list = lists.get_mut(&key).expect("inserted above");
        if row.rank != list.len() + 1 {
            return Err(bad(
                line,
                format!("expected rank {}, found {}", list.len() + 1, row.rank),
            ));
        }
        if list.last().is_some_and(|(_, prev)| row.score > *prev) {
            return Err(bad(line, "scores must not increase with rank".into()));
        }
        if list.iter().any(|(item, _)| *item == row.item_id) {
            return Err(bad(
                line,
                format!("item {} repeated in one list", row.item_id),
            ));
        }
        list.push((row.item_id, row.score));
    }
    if let Some(((fold, user), list)) = lists.iter().find(|(_, l)| l.len() < min_rows) {
        return Err(Error::Model(format!(
            "{}: fold {fold} user {user} has {} rows, need at least {min_rows}",
            path.display(),
            list.len()
        )));
    }
    Ok(ExternalScoreTable {
        algorithm: algorithm_name.to_owned(),
        lists,
    })
}

impl ExternalScoreTable {
    pub fn folds(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.lists.keys().map(|(f, _)| *f).collect();
        f.dedup();
        f
    }

    /// Rejects lists that recommend an item the user trained on in that fold.
    pub fn check_leakage(&self, ds: &Dataset, plan: &PartitionPlan) -> Result<()> {
        let mut train: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for pos in 0..ds.len() {
            train
                .entry((ds.user_of(pos), plan.assignment[pos]))
                .or_default()
                .push(ds.item_of(pos));
        }
        let mut leaks = Vec::new();
        for ((fold, user_id), list) in &self.lists {
            let Some(user) = ds.user_index(user_id) else {
                continue;
            };
            for (item_id, _) in list {
                let Some(item) = ds.item_index(item_id) else {
                    continue;
                };
                let in_train = (0..plan.k)
                    .filter(|p| p != fold)
                    .any(|p| train.get(&(user, p)).is_some_and(|v| v.contains(&item)));
                if in_train {
                    leaks.push((*fold, user_id.clone(), item_id.clone()));
                }
            }
        }
        if leaks.is_empty() {
            Ok(())
        } else {
            Err(Error::Leakage(leaks))
        }
    }

    /// Ranker serving this table's lists for one fold of `ds`.
    pub fn ranker_for<'a>(&'a self, ds: &'a Dataset, fold: usize) -> Result<ExternalRanker<'a>> {
        if !self.lists.keys().any(|(f, _)| *f == fold) {
            return Err(Error::Model(format!(
                "external scores for {} have no rows for fold {fold}",
                self.algorithm
            )));
        }
        Ok(ExternalRanker {
            table: self,
            dataset: ds,
            fold,
        })
    }
}

pub struct ExternalRanker<'a> {
    table: &'a ExternalScoreTable,
    dataset: &'a Dataset,
    fold: usize,
}

impl Ranker for ExternalRanker<'_> {
    fn top_n(&self, user: usize, _train_items: &[usize], n: usize) -> Result<Vec<usize>> {
        let user_id = self.dataset.user_id(user);
        let Some(list) = self.table.lists.get(&(self.fold, user_id.to_owned())) else {
            return Err(Error::Model(format!(
                "external scores for {} lack fold {} user {user_id}",
                self.table.algorithm, self.fold
            )));
        };
        list.iter()
            .take(n)
            .map(|(item_id, _)| {
                self.dataset.item_index(item_id).ok_or_else(|| {
                    Error::Model(format!("external item {item_id} is not in the dataset"))
                })
            })
            .collect()
    }
}

/// A recommender that can be trained and scored fold by fold.
#[derive(Debug, Clone)]
pub enum Algorithm {
    Pop,
    ItemKnn { neighbors: usize },
    External(ExternalScoreTable),
}

impl Algorithm {
    pub fn name(&self) -> &str {
        match self {
            Algorithm::Pop => "Pop",
            Algorithm::ItemKnn { .. } => "ItemKNN",
            Algorithm::External(t) => &t.algorithm,
        }
    }

    /// Trains on the fold's train side and scores its test side.
    pub fn score_fold(&self, split: &FoldSplit<'_>, n: usize) -> Result<FoldScore> {
        match self {
            Algorithm::Pop => {
                let model = pop_train(&TrainMatrix::from_split(split))?;
                evaluate_fold(&model, split, n)
            }
            Algorithm::ItemKnn { neighbors } => {
                let model = itemknn_train(&TrainMatrix::from_split(split), *neighbors)?;
                evaluate_fold(&model, split, n)
            }
            Algorithm::External(table) => {
                let ranker = table.ranker_for(split.dataset, split.fold_index)?;
                evaluate_fold(&ranker, split, n)
            }
        }
    }
}

/// Materialises fold `fold` of `plan` and scores `algorithm` on it.
pub fn score_fold(
    algorithm: &Algorithm,
    ds: &Dataset,
    plan: &PartitionPlan,
    fold: usize,
    n: usize,
) -> Result<FoldScore> {
    let split = materialize_fold(ds, plan, fold)?;
    algorithm.score_fold(&split, n).map_err(|e| e.at_fold(fold))
}
