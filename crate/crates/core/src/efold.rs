//! Early-stopping cross-validation.
//!
//! After every fold the running mean of the fold scores and the Student-t
//! confidence interval of that mean are recomputed. With `c_n` the interval
//! width after `n` folds, folding stops as soon as
//!
//! ```text
//! |c_{n-1} - c_n| <= alpha / c_n
//! ```
//!
//! A large `alpha` favours stopping early (less compute), a small `alpha`
//! favours running more folds. The first width exists at `n = 2`, so the
//! earliest decidable fold is `n = 3`. Folds after the stop are never run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::t_critical;

pub const DEFAULT_ALPHA: f64 = 0.001;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_E_MIN: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfoldConfig {
    /// Criterion sensitivity. Scale-dependent: the default suits NDCG-like
    /// scores in `[0, 1]`.
    pub alpha: f64,
    pub confidence_level: f64,
    /// Earliest fold at which stopping is allowed.
    pub e_min: usize,
    /// Folds available, i.e. the `k` of the underlying k-fold plan.
    pub k_max: usize,
}

impl EfoldConfig {
    pub fn new(k_max: usize) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            confidence_level: DEFAULT_CONFIDENCE,
            e_min: DEFAULT_E_MIN,
            k_max,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Efold(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::Efold(format!(
                "confidence level must be in (0, 1), got {}",
                self.confidence_level
            )));
        }
        if self.e_min < 3 || self.e_min > self.k_max {
            return Err(Error::Efold(format!(
                "need 3 <= e_min <= k, got e_min={} k={}",
                self.e_min, self.k_max
            )));
        }
        Ok(())
    }
}

/// Confidence interval of a sample mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub width: f64,
}

/// Two-sided Student-t interval `mean ± t·s/√n` with `n - 1` degrees of freedom.
pub fn ci_of_mean(scores: &[f64], confidence_level: f64) -> Result<MeanInterval> {
    let n = scores.len();
    if n < 2 {
        return Err(Error::Efold(format!("CI undefined for {n} score(s)")));
    }
    let mean = mean(scores);
    let ss: f64 = scores.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    let half = t_critical(confidence_level, (n - 1) as f64) * sd / (n as f64).sqrt();
    Ok(MeanInterval {
        mean,
        lower: mean - half,
        upper: mean + half,
        width: 2.0 * half,
    })
}

/// Arithmetic mean, computed around the first value so that a constant
/// sequence yields that constant exactly.
pub fn mean(scores: &[f64]) -> f64 {
    let Some(&first) = scores.first() else {
        return f64::NAN;
    };
    let shift: f64 = scores.iter().map(|x| x - first).sum();
    first + shift / scores.len() as f64
}

/// Stopping rule on the two most recent interval widths.
///
/// A zero latest width stops immediately: the right-hand side diverges.
pub fn should_stop(widths: &[f64], alpha: f64) -> Result<bool> {
    let [.., prev, last] = widths else {
        return Err(Error::Efold(
            "stopping rule needs at least two widths".into(),
        ));
    };
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Efold(format!("alpha must be positive, got {alpha}")));
    }
    if *last == 0.0 {
        return Ok(true);
    }
    Ok((prev - last).abs() <= alpha / last)
}

/// Interval state after `folds` executed folds (`folds >= 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiPoint {
    pub folds: usize,
    pub mean: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfoldResult {
    /// Fold indices in execution order; only the executed ones.
    pub fold_order: Vec<usize>,
    pub scores: Vec<f64>,
    pub stop_fold: usize,
    pub final_mean: f64,
    pub trace: Vec<CiPoint>,
    pub stopped_early: bool,
    pub k_max: usize,
}

impl EfoldResult {
    pub fn widths(&self) -> Vec<f64> {
        self.trace.iter().map(|p| p.width).collect()
    }
}

/// Executed share of the full k-fold compute, `e / k`.
pub fn energy_fraction(result: &EfoldResult) -> f64 {
    result.stop_fold as f64 / result.k_max as f64
}

pub(crate) fn check_order(order: &[usize], k: usize) -> Result<()> {
    if order.len() != k {
        return Err(Error::Efold(format!(
            "fold order has {} entries, expected {k}",
            order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &f in order {
        if f >= k || std::mem::replace(&mut seen[f], true) {
            return Err(Error::Efold(format!(
                "fold order {order:?} is not a permutation of 0..{k}"
            )));
        }
    }
    Ok(())
}

/// Runs folds in `fold_order`, one scorer call per fold, until the stopping
/// rule fires (from fold `e_min` on) or all `k_max` folds are done.
pub fn run_efold<F>(
    mut fold_scorer: F,
    fold_order: &[usize],
    config: &EfoldConfig,
) -> Result<EfoldResult>
where
    F: FnMut(usize) -> Result<f64>,
{
    config.validate()?;
    check_order(fold_order, config.k_max)?;

    let mut scores = Vec::with_capacity(config.k_max);
    let mut trace: Vec<CiPoint> = Vec::with_capacity(config.k_max);
    let mut widths = Vec::with_capacity(config.k_max);
    for (step, &fold) in fold_order.iter().enumerate() {
        let score = fold_scorer(fold).map_err(|e| match e {
            Error::Fold { .. } => e,
            other => other.at_fold(fold),
        })?;
        if !score.is_finite() {
            return Err(Error::Efold(format!(
                "fold {fold} produced non-finite score {score}"
            )));
        }
        scores.push(score);
        let n = step + 1;
        if n < 2 {
            continue;
        }
        let ci = ci_of_mean(&scores, config.confidence_level)?;
        trace.push(CiPoint {
            folds: n,
            mean: ci.mean,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
            width: ci.width,
        });
        widths.push(ci.width);
        if n >= config.e_min && should_stop(&widths, config.alpha)? {
            break;
        }
    }

    let stop_fold = scores.len();
    Ok(EfoldResult {
        fold_order: fold_order[..stop_fold].to_vec(),
        final_mean: mean(&scores),
        scores,
        stop_fold,
        trace,
        stopped_early: stop_fold < config.k_max,
        k_max: config.k_max,
    })
}

/// Serialized form of a run, also the data behind a per-fold CI plot.
/// Interval entries are `null` for the first fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfoldRecord {
    pub algorithm: String,
    pub dataset: String,
    pub k: usize,
    pub alpha: f64,
    pub confidence_level: f64,
    pub e_min: usize,
    pub fold_order: Vec<usize>,
    pub scores: Vec<f64>,
    pub means: Vec<f64>,
    pub ci_lower: Vec<Option<f64>>,
    pub ci_upper: Vec<Option<f64>>,
    pub widths: Vec<Option<f64>>,
    pub stop_fold: usize,
    pub stopped_early: bool,
    pub final_mean: f64,
    pub energy_fraction: f64,
}

impl EfoldRecord {
    pub fn new(result: &EfoldResult, config: &EfoldConfig, dataset: &str, algorithm: &str) -> Self {
        let mut means = Vec::with_capacity(result.stop_fold);
        let mut lower = Vec::with_capacity(result.stop_fold);
        let mut upper = Vec::with_capacity(result.stop_fold);
        let mut widths = Vec::with_capacity(result.stop_fold);
        if let Some(&first) = result.scores.first() {
            means.push(first);
            lower.push(None);
            upper.push(None);
            widths.push(None);
        }
        for p in &result.trace {
            means.push(p.mean);
            lower.push(Some(p.ci_lower));
            upper.push(Some(p.ci_upper));
            widths.push(Some(p.width));
        }
        Self {
            algorithm: algorithm.to_owned(),
            dataset: dataset.to_owned(),
            k: config.k_max,
            alpha: config.alpha,
            confidence_level: config.confidence_level,
            e_min: config.e_min,
            fold_order: result.fold_order.clone(),
            scores: result.scores.clone(),
            means,
            ci_lower: lower,
            ci_upper: upper,
            widths,
            stop_fold: result.stop_fold,
            stopped_early: result.stopped_early,
            final_mean: result.final_mean,
            energy_fraction: energy_fraction(result),
        }
    }

    /// Per-fold plot rows `fold,mean,ci_lower,ci_upper,width,stopped`, with
    /// 1-based fold numbers and `stopped` set on the stopping fold only.
    pub fn write_trace_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["fold", "mean", "ci_lower", "ci_upper", "width", "stopped"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.means.len() {
            let stopped = self.stopped_early && i + 1 == self.stop_fold;
            w.write_record([
                (i + 1).to_string(),
                self.means[i].to_string(),
                opt(self.ci_lower[i]),
                opt(self.ci_upper[i]),
                opt(self.widths[i]),
                stopped.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Efold(e.to_string()))?;
        Ok(())
    }
}
