//! e-fold cross-validation: k-fold evaluation that stops early once the
//! confidence interval of the running mean score settles, plus the tooling
//! to measure what that saves on top-n recommender benchmarks.
//!
//! The pipeline is
//!
//! 1. [`dataset`]: load interactions, convert to implicit feedback, k-core prune;
//! 2. [`folding`]: user-stratified k-way partition plans and fold splits;
//! 3. [`models`] + [`metrics`]: Pop / ItemKNN / external ranked lists scored by NDCG@n;
//! 4. [`efold`]: the early-stopping loop;
//! 5. [`simulator`]: replays cached fold scores under many fold orders and
//!    compares early-stopped means against full k-fold means.

pub mod cache;
pub mod dataset;
pub mod efold;
pub mod error;
pub mod folding;
pub mod metrics;
pub mod models;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use cache::{CacheRow, ScoreCache};
pub use dataset::{
    compute_stats, load_interactions, prune_kcore, to_implicit, Dataset, DatasetStats, InputFormat,
    Interaction,
};
pub use efold::{
    ci_of_mean, energy_fraction, run_efold, should_stop, CiPoint, EfoldConfig, EfoldRecord,
    EfoldResult, MeanInterval,
};
pub use error::{Error, Result};
pub use folding::{make_partition_plan, materialize_fold, FoldSplit, PartitionPlan};
pub use metrics::{evaluate_fold, ndcg_at_n, FoldScore, Ranker};
pub use models::{
    itemknn_score, itemknn_train, load_external_scores, pop_train, score_fold, Algorithm,
    ExternalScoreTable, ItemKnnModel, PopModel, TrainMatrix,
};
pub use simulator::{
    percentage_diff, rank_algorithms, ranking_report, sample_permutations, simulate_all,
    simulate_one, PermutationSet, RankingReport, ScoreSequence, SimulationReport,
};
