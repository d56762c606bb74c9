//! Append-only CSV of per-fold scores: `dataset,algorithm,fold_index,metric,value,seed,k`.
//!
//! Scores of externally trained models can be merged by concatenating files
//! with the same columns.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::ScoreSequence;

pub const CACHE_HEADER: [&str; 7] = [
    "dataset",
    "algorithm",
    "fold_index",
    "metric",
    "value",
    "seed",
    "k",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRow {
    pub dataset: String,
    pub algorithm: String,
    pub fold_index: usize,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub k: usize,
}

type Key = (String, String, usize, u64, usize);

impl CacheRow {
    fn key(&self) -> Key {
        (
            self.dataset.clone(),
            self.algorithm.clone(),
            self.fold_index,
            self.seed,
            self.k,
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScoreCache {
    path: Option<PathBuf>,
    rows: Vec<CacheRow>,
    keys: HashSet<Key>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a cache file; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self> {
        let mut cache = Self {
            path: Some(path.to_owned()),
            ..Self::default()
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut reader = csv::Reader::from_reader(file);
        if reader.headers()?.iter().ne(CACHE_HEADER.iter().copied()) {
            return Err(Error::Cache(format!(
                "{}: expected header '{}'",
                path.display(),
                CACHE_HEADER.join(",")
            )));
        }
        for row in reader.deserialize::<CacheRow>() {
            cache.insert(row?)?;
        }
        Ok(cache)
    }

    fn insert(&mut self, row: CacheRow) -> Result<()> {
        if !(0.0..=1.0).contains(&row.value) {
            return Err(Error::Cache(format!(
                "{}/{} fold {}: value {} outside [0, 1]",
                row.dataset, row.algorithm, row.fold_index, row.value
            )));
        }
        if row.fold_index >= row.k {
            return Err(Error::Cache(format!(
                "{}/{}: fold {} out of range for k={}",
                row.dataset, row.algorithm, row.fold_index, row.k
            )));
        }
        if !self.keys.insert(row.key()) {
            return Err(Error::Cache(format!(
                "duplicate cache row for {}/{} fold {} seed {} k {}",
                row.dataset, row.algorithm, row.fold_index, row.seed, row.k
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[CacheRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(
        &self,
        dataset: &str,
        algorithm: &str,
        fold: usize,
        seed: u64,
        k: usize,
    ) -> bool {
        self.keys
            .contains(&(dataset.to_owned(), algorithm.to_owned(), fold, seed, k))
    }

    /// Adds a row and, for file-backed caches, appends it to disk at once.
    pub fn append(&mut self, row: CacheRow) -> Result<()> {
        self.insert(row.clone())?;
        let Some(path) = &self.path else {
            return Ok(());
        };
        let needs_header = std::fs::metadata(path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        if needs_header {
            w.write_record(CACHE_HEADER)?;
        }
        w.serialize(&row)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Score sequences for every (dataset, algorithm) recorded under
    /// (`k`, `seed`, `metric`). Fails with the list of missing folds if any
    /// pair is incomplete.
    pub fn sequences(&self, k: usize, seed: u64, metric: &str) -> Result<Vec<ScoreSequence>> {
        let mut grid: BTreeMap<(&str, &str), Vec<Option<f64>>> = BTreeMap::new();
        let mut datasets = BTreeSet::new();
        let mut algorithms = BTreeSet::new();
        for row in &self.rows {
            if row.k != k || row.seed != seed || row.metric != metric {
                continue;
            }
            datasets.insert(row.dataset.as_str());
            algorithms.insert(row.algorithm.as_str());
            grid.entry((&row.dataset, &row.algorithm))
                .or_insert_with(|| vec![None; k])[row.fold_index] = Some(row.value);
        }
        if grid.is_empty() {
            return Err(Error::Cache(format!(
                "score cache has no {metric} rows for k={k} seed={seed}"
            )));
        }
        let mut missing = Vec::new();
        for d in &datasets {
            for a in &algorithms {
                match grid.get(&(*d, *a)) {
                    None => missing.push(format!("{d}/{a} (all folds)")),
                    Some(folds) => {
                        let absent: Vec<String> = folds
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| v.is_none())
                            .map(|(f, _)| f.to_string())
                            .collect();
                        if !absent.is_empty() {
                            missing.push(format!("{d}/{a} (folds {})", absent.join(" ")));
                        }
                    }
                }
            }
        }
        if !missing.is_empty() {
            return Err(Error::Cache(format!(
                "incomplete score cache: missing {}",
                missing.join(", ")
            )));
        }
        grid.into_iter()
            .map(|((d, a), folds)| {
                ScoreSequence::new(d, a, folds.into_iter().flatten().collect(), seed)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(d: &str, a: &str, fold: usize, value: f64) -> CacheRow {
        CacheRow {
            dataset: d.into(),
            algorithm: a.into(),
            fold_index: fold,
            metric: "ndcg@10".into(),
            value,
            seed: 1,
            k: 3,
        }
    }

    #[test]
    fn append_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let mut cache = ScoreCache::open(&path).unwrap();
        assert!(cache.is_empty());
        for f in 0..3 {
            cache.append(row("d", "Pop", f, 0.1 * f as f64)).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "dataset,algorithm,fold_index,metric,value,seed,k\nd,Pop,0,ndcg@10,0.0,1,3\n"
        ));
        let again = ScoreCache::open(&path).unwrap();
        assert_eq!(again.rows(), cache.rows());
        assert!(again.contains("d", "Pop", 2, 1, 3));
        let seqs = again.sequences(3, 1, "ndcg@10").unwrap();
        assert_eq!(seqs.len(), 1);
        assert_eq!(seqs[0].scores.len(), 3);
    }

    #[test]
    fn duplicates_and_ranges_rejected() {
        let mut cache = ScoreCache::in_memory();
        cache.append(row("d", "Pop", 0, 0.5)).unwrap();
        assert!(cache.append(row("d", "Pop", 0, 0.6)).is_err());
        assert!(cache.append(row("d", "Pop", 1, 1.5)).is_err());
        assert!(cache.append(row("d", "Pop", 3, 0.5)).is_err());
    }

    #[test]
    fn missing_cells_listed() {
        let mut cache = ScoreCache::in_memory();
        for f in 0..3 {
            cache.append(row("d", "Pop", f, 0.2)).unwrap();
        }
        cache.append(row("d", "ItemKNN", 0, 0.3)).unwrap();
        cache.append(row("e", "Pop", 1, 0.3)).unwrap();
        let err = cache.sequences(3, 1, "ndcg@10").unwrap_err().to_string();
        assert!(err.contains("d/ItemKNN (folds 1 2)"), "{err}");
        assert!(err.contains("e/ItemKNN (all folds)"), "{err}");
        assert!(ScoreCache::in_memory().sequences(3, 1, "ndcg@10").is_err());
    }
}
