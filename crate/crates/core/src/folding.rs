//! User-stratified k-way partitioning and train/test fold splits.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Assignment of every interaction to one of `k` partitions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignment[pos]` is the partition of interaction `pos`.
    pub assignment: Vec<usize>,
}

/// Splits `ds` into `k` partitions so that every user is spread evenly.
///
/// Each user's interactions are shuffled and dealt round-robin starting at a
/// random partition, so per-partition counts differ by at most one. A user
/// with fewer than `k` interactions lands in a uniformly drawn set of
/// distinct partitions, one interaction each.
pub fn make_partition_plan(ds: &Dataset, k: usize, seed: u64) -> Result<PartitionPlan> {
    if k < 2 {
        return Err(Error::Folding(format!("k must be at least 2, got {k}")));
    }
    if ds.is_empty() {
        return Err(Error::Folding("cannot partition an empty dataset".into()));
    }
    let mut rng = SeededRng::new(seed);
    let mut assignment = vec![usize::MAX; ds.len()];
    for mut positions in ds.interactions_by_user() {
        rng.shuffle(&mut positions);
        if positions.len() >= k {
            let offset = rng.below(k);
            for (j, pos) in positions.into_iter().enumerate() {
                assignment[pos] = (offset + j) % k;
            }
        } else {
            let parts = rng.sample_distinct(k, positions.len());
            for (pos, part) in positions.into_iter().zip(parts) {
                assignment[pos] = part;
            }
        }
    }
    debug_assert!(assignment.iter().all(|&p| p < k));
    Ok(PartitionPlan {
        k,
        seed,
        assignment,
    })
}

impl PartitionPlan {
    pub fn partition_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &p in &self.assignment {
            sizes[p] += 1;
        }
        sizes
    }

    /// Writes `interaction_index,partition` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["interaction_index", "partition"])?;
        for (pos, part) in self.assignment.iter().enumerate() {
            w.write_record([pos.to_string(), part.to_string()])?;
        }
        w.flush().map_err(|e| Error::Folding(e.to_string()))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads a plan written by [`PartitionPlan::save_csv`]. The seed is not
    /// part of the file and is taken from the caller.
    pub fn load_csv(path: &Path, k: usize, seed: u64) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let mut assignment = Vec::new();
        for (row, rec) in r.deserialize::<(usize, usize)>().enumerate() {
            let (pos, part) = rec?;
            if pos != row {
                return Err(Error::Folding(format!(
                    "plan row {row} has interaction_index {pos}; rows must be dense and ordered"
                )));
            }
            if part >= k {
                return Err(Error::Folding(format!(
                    "partition {part} out of range for k={k}"
                )));
            }
            assignment.push(part);
        }
        Ok(Self {
            k,
            seed,
            assignment,
        })
    }

    fn check_matches(&self, ds: &Dataset) -> Result<()> {
        if self.assignment.len() != ds.len() {
            return Err(Error::Folding(format!(
                "plan covers {} interactions but dataset has {}",
                self.assignment.len(),
                ds.len()
            )));
        }
        Ok(())
    }
}

/// One train/test materialisation: test is partition `fold_index`, train is
/// everything else. Both sides are lists of interaction positions into the
/// borrowed dataset.
#[derive(Debug, Clone)]
pub struct FoldSplit<'a> {
    pub fold_index: usize,
    pub dataset: &'a Dataset,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn materialize_fold<'a>(
    ds: &'a Dataset,
    plan: &PartitionPlan,
    fold_index: usize,
) -> Result<FoldSplit<'a>> {
    if fold_index >= plan.k {
        return Err(Error::Folding(format!(
            "fold index {fold_index} out of range for k={}",
            plan.k
        )));
    }
    plan.check_matches(ds)?;
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&pos| plan.assignment[pos] == fold_index);
    Ok(FoldSplit {
        fold_index,
        dataset: ds,
        train,
        test,
    })
}

impl FoldSplit<'_> {
    /// Sorted, deduplicated item indices per user for the train side.
    pub fn train_items_by_user(&self) -> Vec<Vec<usize>> {
        self.items_by_user(&self.train)
    }

    pub fn test_items_by_user(&self) -> Vec<Vec<usize>> {
        self.items_by_user(&self.test)
    }

    fn items_by_user(&self, positions: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.dataset.n_users()];
        for &pos in positions {
            out[self.dataset.user_of(pos)].push(self.dataset.item_of(pos));
        }
        for items in &mut out {
            items.sort_unstable();
            items.dedup();
        }
        out
    }
}
