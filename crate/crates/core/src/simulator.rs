//! Replays recorded k-fold scores under many fold orders to measure how
//! early stopping compares with running every fold.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efold::{check_order, ci_of_mean, mean, should_stop, CiPoint, EfoldConfig, EfoldResult};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const DEFAULT_PERMUTATIONS: usize = 5000;

/// Percentage difference `|x - y| / ((x + y) / 2) * 100`, with `d(0, 0) = 0`.
pub fn percentage_diff(x: f64, y: f64) -> Result<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::Simulation(format!(
            "percentage difference needs non-negative inputs, got {x} and {y}"
        )));
    }
    if x + y == 0.0 {
        return Ok(0.0);
    }
    Ok((x - y).abs() / ((x + y) / 2.0) * 100.0)
}

/// All k fold scores of one (dataset, algorithm), in canonical fold order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSequence {
    pub dataset: String,
    pub algorithm: String,
    pub k: usize,
    pub scores: Vec<f64>,
    /// Seed of the partition plan that produced the scores.
    pub seed: u64,
}

impl ScoreSequence {
    pub fn new(dataset: &str, algorithm: &str, scores: Vec<f64>, seed: u64) -> Result<Self> {
        let seq = Self {
            dataset: dataset.to_owned(),
            algorithm: algorithm.to_owned(),
            k: scores.len(),
            scores,
            seed,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.len() != self.k {
            return Err(Error::Simulation(format!(
                "{}/{}: {} scores for k={}",
                self.dataset,
                self.algorithm,
                self.scores.len(),
                self.k
            )));
        }
        if let Some(v) = self.scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Simulation(format!(
                "{}/{}: score {v} outside [0, 1]",
                self.dataset, self.algorithm
            )));
        }
        Ok(())
    }

    /// Full k-fold mean, i.e. the reference the early-stopped mean is
    /// compared against.
    pub fn kcv_mean(&self) -> f64 {
        mean(&self.scores)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    pub k: usize,
    pub seed: u64,
    pub perms: Vec<Vec<usize>>,
}

impl PermutationSet {
    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }
}

fn factorial(k: usize) -> Option<usize> {
    (1..=k).try_fold(1usize, |acc, x| acc.checked_mul(x))
}

fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for f in 0..used.len() {
            if !used[f] {
                used[f] = true;
                prefix.push(f);
                extend(prefix, used, out);
                prefix.pop();
                used[f] = false;
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// `n_perms` distinct, uniformly drawn orderings of `0..k`.
///
/// When the request covers more than half of all `k!` orderings they are
/// enumerated and a random subset is taken; otherwise orderings are drawn by
/// shuffling and duplicates rejected.
pub fn sample_permutations(k: usize, n_perms: usize, seed: u64) -> Result<PermutationSet> {
    if k == 0 {
        return Err(Error::Simulation("cannot permute zero folds".into()));
    }
    let total = factorial(k);
    if total.is_some_and(|t| n_perms > t) {
        return Err(Error::Simulation(format!(
            "{n_perms} distinct permutations requested but only {}! = {} exist",
            k,
            total.unwrap_or(usize::MAX)
        )));
    }
    let mut rng = SeededRng::new(seed);
    let perms = match total {
        Some(t) if n_perms.saturating_mul(2) > t => {
            let mut all = all_permutations(k);
            let picks = rng.sample_distinct(all.len(), n_perms);
            picks
                .into_iter()
                .map(|i| std::mem::take(&mut all[i]))
                .collect()
        }
        _ => {
            let mut seen = HashSet::with_capacity(n_perms);
            let mut perms = Vec::with_capacity(n_perms);
            let mut base: Vec<usize> = (0..k).collect();
            while perms.len() < n_perms {
                rng.shuffle(&mut base);
                if seen.insert(base.clone()) {
                    perms.push(base.clone());
                }
            }
            perms
        }
    };
    Ok(PermutationSet { k, seed, perms })
}

/// Offline replay of an early-stopped run over recorded scores, visiting
/// folds in `perm` order. No model is trained.
///
/// Works on prefixes of the permuted score vector rather than driving a
/// scorer, so it doubles as an independent check of [`crate::run_efold`].
pub fn simulate_one(
    seq: &ScoreSequence,
    perm: &[usize],
    config: &EfoldConfig,
) -> Result<EfoldResult> {
    config.validate()?;
    if seq.k != config.k_max {
        return Err(Error::Simulation(format!(
            "sequence has k={} but config expects {}",
            seq.k, config.k_max
        )));
    }
    check_order(perm, seq.k)?;
    let ordered: Vec<f64> = perm.iter().map(|&f| seq.scores[f]).collect();

    let trace = (2..=seq.k)
        .map(|n| {
            ci_of_mean(&ordered[..n], config.confidence_level).map(|ci| CiPoint {
                folds: n,
                mean: ci.mean,
                ci_lower: ci.lower,
                ci_upper: ci.upper,
                width: ci.width,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let widths: Vec<f64> = trace.iter().map(|p| p.width).collect();

    let mut stop = seq.k;
    for n in config.e_min..=seq.k {
        // widths[i] belongs to n = i + 2
        if should_stop(&widths[..n - 1], config.alpha)? {
            stop = n;
            break;
        }
    }
    Ok(EfoldResult {
        fold_order: perm[..stop].to_vec(),
        scores: ordered[..stop].to_vec(),
        stop_fold: stop,
        final_mean: mean(&ordered[..stop]),
        trace: trace[..stop - 1].to_vec(),
        stopped_early: stop < seq.k,
        k_max: seq.k,
    })
}

/// One (dataset, algorithm, permutation) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub dataset: String,
    pub algorithm: String,
    pub perm_index: usize,
    pub stop_fold: usize,
    pub efold_mean: f64,
    pub kcv_mean: f64,
    pub percent_diff: f64,
    pub energy_fraction: f64,
}

/// Aggregates over all permutations of one (dataset, algorithm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub dataset: String,
    pub algorithm: String,
    pub k: usize,
    pub n_perms: usize,
    pub kcv_mean: f64,
    pub mean_percent_diff: f64,
    pub std_percent_diff: f64,
    pub mean_stop_fold: f64,
    pub std_stop_fold: f64,
    /// `mean_stop_fold / k`.
    pub mean_energy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallSummary {
    pub mean_percent_diff: f64,
    pub mean_stop_fold: f64,
    pub mean_energy_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub k: usize,
    pub alpha: f64,
    pub confidence_level: f64,
    pub e_min: usize,
    pub n_perms: usize,
    pub perm_seed: u64,
    pub cells: Vec<CellSummary>,
    /// Averages over every cell (equal weight per cell).
    pub overall: OverallSummary,
    /// Per-permutation rows; written to CSV rather than JSON.
    #[serde(skip)]
    pub rows: Vec<RawRow>,
}

/// Sample mean and standard deviation (`n - 1` denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (m, (ss / (n - 1) as f64).sqrt())
}

/// Replays every sequence under every permutation and aggregates.
///
/// Cells are ordered by (dataset, algorithm); rows within a cell by
/// permutation index. The result depends only on the inputs.
pub fn simulate_all(
    seqs: &[ScoreSequence],
    perms: &PermutationSet,
    config: &EfoldConfig,
) -> Result<SimulationReport> {
    if seqs.is_empty() {
        return Err(Error::Simulation("no score sequences to simulate".into()));
    }
    let mut ordered: Vec<&ScoreSequence> = seqs.iter().collect();
    ordered.sort_by(|a, b| (&a.dataset, &a.algorithm).cmp(&(&b.dataset, &b.algorithm)));
    for pair in ordered.windows(2) {
        if pair[0].dataset == pair[1].dataset && pair[0].algorithm == pair[1].algorithm {
            return Err(Error::Simulation(format!(
                "duplicate sequence for {}/{}",
                pair[0].dataset, pair[0].algorithm
            )));
        }
    }
    for seq in &ordered {
        seq.validate()?;
        if seq.k != perms.k {
            return Err(Error::Simulation(format!(
                "{}/{} has k={} but permutations are over {} folds",
                seq.dataset, seq.algorithm, seq.k, perms.k
            )));
        }
    }

    let mut cells = Vec::with_capacity(ordered.len());
    let mut rows = Vec::with_capacity(ordered.len() * perms.len());
    for seq in ordered {
        let kcv = seq.kcv_mean();
        let cell_rows: Vec<RawRow> = perms
            .perms
            .par_iter()
            .enumerate()
            .map(|(p, perm)| {
                let run = simulate_one(seq, perm, config)?;
                Ok(RawRow {
                    dataset: seq.dataset.clone(),
                    algorithm: seq.algorithm.clone(),
                    perm_index: p,
                    stop_fold: run.stop_fold,
                    efold_mean: run.final_mean,
                    kcv_mean: kcv,
                    percent_diff: percentage_diff(run.final_mean, kcv)?,
                    energy_fraction: run.stop_fold as f64 / seq.k as f64,
                })
            })
            .collect::<Result<_>>()?;
        let diffs: Vec<f64> = cell_rows.iter().map(|r| r.percent_diff).collect();
        let stops: Vec<f64> = cell_rows.iter().map(|r| r.stop_fold as f64).collect();
        let (mean_d, std_d) = mean_std(&diffs);
        let (mean_e, std_e) = mean_std(&stops);
        cells.push(CellSummary {
            dataset: seq.dataset.clone(),
            algorithm: seq.algorithm.clone(),
            k: seq.k,
            n_perms: perms.len(),
            kcv_mean: kcv,
            mean_percent_diff: mean_d,
            std_percent_diff: std_d,
            mean_stop_fold: mean_e,
            std_stop_fold: std_e,
            mean_energy_fraction: mean_e / seq.k as f64,
        });
        rows.extend(cell_rows);
    }

    let n = cells.len() as f64;
    let overall = OverallSummary {
        mean_percent_diff: cells.iter().map(|c| c.mean_percent_diff).sum::<f64>() / n,
        mean_stop_fold: cells.iter().map(|c| c.mean_stop_fold).sum::<f64>() / n,
        mean_energy_fraction: cells.iter().map(|c| c.mean_energy_fraction).sum::<f64>() / n,
    };
    Ok(SimulationReport {
        k: perms.k,
        alpha: config.alpha,
        confidence_level: config.confidence_level,
        e_min: config.e_min,
        n_perms: perms.len(),
        perm_seed: perms.seed,
        cells,
        overall,
        rows,
    })
}

/// Ranks for `means` (aligned with the input): 1 is the highest mean, ties
/// go to the alphabetically smaller name.
pub fn rank_algorithms(means: &[(&str, f64)]) -> Result<Vec<usize>> {
    if means.len() < 2 {
        return Err(Error::Simulation(
            "ranking needs at least two algorithms".into(),
        ));
    }
    let mut order: Vec<usize> = (0..means.len()).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .1
            .total_cmp(&means[a].1)
            .then(means[a].0.cmp(means[b].0))
    });
    let mut ranks = vec![0; means.len()];
    for (pos, &ix) in order.iter().enumerate() {
        ranks[ix] = pos + 1;
    }
    Ok(ranks)
}

/// Kendall's tau-b; `None` when either side is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let (mut concordant, mut discordant, mut ties_x, mut ties_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dx = (x[i] - x[j]).partial_cmp(&0.0)? as i64;
            let dy = (y[i] - y[j]).partial_cmp(&0.0)? as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => ties_x += 1,
                (_, 0) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (concordant + discordant + ties_x) as f64;
    let n1 = (concordant + discordant + ties_y) as f64;
    if n0 == 0.0 || n1 == 0.0 {
        return None;
    }
    Some((concordant - discordant) as f64 / (n0 * n1).sqrt())
}

/// How often early stopping keeps the k-fold order of one algorithm pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    /// Better of the two under full k-fold.
    pub higher: String,
    pub lower: String,
    /// Share of permutations in which `higher` also ranks above `lower`.
    pub efold_agreement_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRanking {
    pub dataset: String,
    pub algorithms: Vec<String>,
    pub kcv_means: Vec<f64>,
    pub kcv_ranks: Vec<usize>,
    /// Per-permutation ranks averaged per algorithm.
    pub mean_efold_ranks: Vec<f64>,
    /// Ranks of the per-algorithm e-fold means averaged over permutations.
    pub rank_of_mean_efold: Vec<usize>,
    /// Share of permutations whose full order equals the k-fold order.
    pub exact_order_fraction: f64,
    /// Kendall tau-b between k-fold ranks and mean e-fold ranks.
    pub kendall_tau: Option<f64>,
    pub pairwise: Vec<PairAgreement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub datasets: Vec<DatasetRanking>,
}

impl RankingReport {
    pub fn dataset(&self, name: &str) -> Option<&DatasetRanking> {
        self.datasets.iter().find(|d| d.dataset == name)
    }
}

impl DatasetRanking {
    pub fn pair(&self, higher: &str, lower: &str) -> Option<&PairAgreement> {
        self.pairwise
            .iter()
            .find(|p| p.higher == higher && p.lower == lower)
    }
}

/// Ranks algorithms per dataset under full k-fold and under each
/// permutation's early-stopped means. Datasets with a single algorithm are
/// left out.
pub fn ranking_report(report: &SimulationReport) -> Result<RankingReport> {
    let mut by_dataset: BTreeMap<&str, Vec<&CellSummary>> = BTreeMap::new();
    for cell in &report.cells {
        by_dataset.entry(&cell.dataset).or_default().push(cell);
    }
    let mut efold: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for row in &report.rows {
        efold
            .entry((&row.dataset, &row.algorithm))
            .or_default()
            .push(row.efold_mean);
    }

    let mut datasets = Vec::new();
    for (dataset, cells) in by_dataset {
        if cells.len() < 2 {
            log::info!("dataset {dataset}: single algorithm, no ranking");
            continue;
        }
        let names: Vec<&str> = cells.iter().map(|c| c.algorithm.as_str()).collect();
        let kcv_means: Vec<f64> = cells.iter().map(|c| c.kcv_mean).collect();
        let kcv_ranks = rank_algorithms(
            &names
                .iter()
                .copied()
                .zip(kcv_means.iter().copied())
                .collect::<Vec<_>>(),
        )?;

        let per_alg: Vec<&Vec<f64>> = names
            .iter()
            .map(|a| {
                efold.get(&(dataset, *a)).ok_or_else(|| {
                    Error::Simulation(format!("no permutation rows for {dataset}/{a}"))
                })
            })
            .collect::<Result<_>>()?;
        let n_perms = per_alg[0].len();
        if per_alg.iter().any(|v| v.len() != n_perms) || n_perms == 0 {
            return Err(Error::Simulation(format!(
                "dataset {dataset}: algorithms were simulated over different permutation counts"
            )));
        }

        let mut rank_sums = vec![0usize; names.len()];
        let mut exact = 0usize;
        let mut above = vec![vec![0usize; names.len()]; names.len()];
        for p in 0..n_perms {
            let means: Vec<(&str, f64)> = names
                .iter()
                .zip(&per_alg)
                .map(|(a, v)| (*a, v[p]))
                .collect();
            let ranks = rank_algorithms(&means)?;
            if ranks == kcv_ranks {
                exact += 1;
            }
            for (a, r) in ranks.iter().enumerate() {
                rank_sums[a] += r;
                for (b, r2) in ranks.iter().enumerate() {
                    if r < r2 {
                        above[a][b] += 1;
                    }
                }
            }
        }
        let mean_efold_ranks: Vec<f64> = rank_sums
            .iter()
            .map(|&s| s as f64 / n_perms as f64)
            .collect();
        let avg_efold: Vec<(&str, f64)> = names
            .iter()
            .zip(&per_alg)
            .map(|(a, v)| (*a, v.iter().sum::<f64>() / n_perms as f64))
            .collect();
        let rank_of_mean_efold = rank_algorithms(&avg_efold)?;
        let kcv_as_f64: Vec<f64> = kcv_ranks.iter().map(|&r| r as f64).collect();

        let mut pairwise = Vec::new();
        for a in 0..names.len() {
            for b in 0..names.len() {
                if kcv_ranks[a] < kcv_ranks[b] {
                    pairwise.push(PairAgreement {
                        higher: names[a].to_owned(),
                        lower: names[b].to_owned(),
                        efold_agreement_fraction: above[a][b] as f64 / n_perms as f64,
                    });
                }
            }
        }
        pairwise.sort_by(|x, y| (&x.higher, &x.lower).cmp(&(&y.higher, &y.lower)));

        datasets.push(DatasetRanking {
            dataset: dataset.to_owned(),
            algorithms: names.iter().map(|s| s.to_string()).collect(),
            kcv_means,
            kcv_ranks,
            kendall_tau: kendall_tau(&kcv_as_f64, &mean_efold_ranks),
            mean_efold_ranks,
            rank_of_mean_efold,
            exact_order_fraction: exact as f64 / n_perms as f64,
            pairwise,
        });
    }
    Ok(RankingReport { datasets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn percentage_diff_cases() {
        assert_eq!(percentage_diff(0.3, 0.3).unwrap(), 0.0);
        assert_relative_eq!(
            percentage_diff(1.0, 0.5).unwrap(),
            200.0 / 3.0,
            epsilon = 1e-12
        );
        assert_eq!(percentage_diff(0.0, 0.0).unwrap(), 0.0);
        assert!(percentage_diff(-0.1, 0.5).is_err());
        assert!(percentage_diff(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn exhaustive_small_k() {
        let set = sample_permutations(3, 6, 1).unwrap();
        let mut perms = set.perms.clone();
        perms.sort();
        assert_eq!(perms, all_permutations(3));
        assert_eq!(perms.len(), 6);
    }

    #[test]
    fn five_thousand_distinct_for_k10() {
        let set = sample_permutations(10, 5000, 7).unwrap();
        let distinct: HashSet<_> = set.perms.iter().collect();
        assert_eq!(distinct.len(), 5000);
        assert!(set.perms.iter().all(|p| check_order(p, 10).is_ok()));
        assert_eq!(set, sample_permutations(10, 5000, 7).unwrap());
    }

    #[test]
    fn too_many_permutations() {
        assert!(sample_permutations(2, 3, 0).is_err());
        assert!(sample_permutations(2, 2, 0).is_ok());
    }

    #[test]
    fn constant_sequence_stops_at_e_min() {
        let seq = ScoreSequence::new("d", "a", vec![0.2; 10], 0).unwrap();
        let cfg = EfoldConfig::new(10);
        let perms = sample_permutations(10, 20, 3).unwrap();
        for p in &perms.perms {
            assert_eq!(simulate_one(&seq, p, &cfg).unwrap().stop_fold, 3);
        }
        let rep = simulate_all(&[seq], &perms, &cfg).unwrap();
        assert_eq!(rep.cells[0].mean_percent_diff, 0.0);
        assert_eq!(rep.cells[0].mean_stop_fold, 3.0);
        assert_eq!(rep.cells[0].mean_energy_fraction, 0.3);
        assert_eq!(rep.rows.len(), 20);
    }

    #[test]
    fn sequence_validation() {
        assert!(ScoreSequence::new("d", "a", vec![0.2, 1.5], 0).is_err());
        let seq = ScoreSequence::new("d", "a", vec![0.2, 0.3, 0.4], 0).unwrap();
        let perms = sample_permutations(4, 3, 0).unwrap();
        assert!(simulate_all(std::slice::from_ref(&seq), &perms, &EfoldConfig::new(4)).is_err());
        assert!(simulate_all(
            &[seq.clone(), seq],
            &sample_permutations(3, 2, 0).unwrap(),
            &EfoldConfig::new(3)
        )
        .is_err());
        assert!(simulate_all(&[], &perms, &EfoldConfig::new(4)).is_err());
    }

    #[test]
    fn ranks_and_ties() {
        assert_eq!(
            rank_algorithms(&[("A", 0.3), ("B", 0.2)]).unwrap(),
            vec![1, 2]
        );
        assert_eq!(
            rank_algorithms(&[("B", 0.25), ("A", 0.25)]).unwrap(),
            vec![2, 1]
        );
        assert!(rank_algorithms(&[("A", 0.3)]).is_err());
    }

    #[test]
    fn kendall_cases() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(kendall_tau(&[1.0, 2.0], &[1.5, 1.5]), None);
    }

    #[test]
    fn ranking_report_agrees_when_orders_match() {
        let a = ScoreSequence::new("d", "Good", vec![0.50, 0.52, 0.51, 0.49], 0).unwrap();
        let b = ScoreSequence::new("d", "Bad", vec![0.10, 0.12, 0.11, 0.09], 0).unwrap();
        let perms = sample_permutations(4, 24, 0).unwrap();
        let rep = simulate_all(&[a, b], &perms, &EfoldConfig::new(4)).unwrap();
        let ranking = ranking_report(&rep).unwrap();
        let d = ranking.dataset("d").unwrap();
        assert_eq!(d.algorithms, vec!["Bad", "Good"]);
        assert_eq!(d.kcv_ranks, vec![2, 1]);
        assert_eq!(d.mean_efold_ranks, vec![2.0, 1.0]);
        assert_eq!(d.exact_order_fraction, 1.0);
        assert_eq!(d.kendall_tau, Some(1.0));
        assert_eq!(d.pair("Good", "Bad").unwrap().efold_agreement_fraction, 1.0);
    }
}
