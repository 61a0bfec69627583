//! Experiment sweeps over the fraction grid, the budget, the seed-set size
//! and the amount of training data.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationStrategy, Fractions};
use crate::data::{Corpus, QuerySet, TrainingPair};
use crate::embedding::{embed_corpus, LinearEncoder};
use crate::error::{Error, Result};
use crate::evaluation::{CandidatePool, EvalReport};
use crate::rng::{sample_without_replacement, shuffle, SplitMix64};
use crate::training::{train_encoder, TrainConfig};

pub const NAIVE: &str = "naive";
pub const PER_TASK: &str = "per-task";
pub const ORACLE: &str = "oracle";

/// `0.0, 0.1, ..., 1.0`.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("fraction grid is empty".into()));
    }
    if let Some(f) = grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::InvalidFractions(format!("grid value {f} outside [0, 1]")));
    }
    Ok(())
}

fn check_increasing(name: &str, values: &[f64]) -> Result<()> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!("{name} must be non-empty and strictly increasing")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub strategy: String,
    pub mean_recall: f64,
    pub mean_ap: f64,
}

/// Rows grouped by strictly increasing axis value, one per strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    fn push(&mut self, axis_value: f64, report: &EvalReport, strategy: &str) {
        self.rows.push(SweepRow {
            axis_value,
            strategy: strategy.to_string(),
            mean_recall: report.mean_recall,
            mean_ap: report.mean_ap,
        });
    }

    pub fn rows_for<'a>(&'a self, strategy: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn recall(&self, axis_value: f64, strategy: &str) -> Option<f64> {
        self.rows_for(strategy)
            .find(|r| r.axis_value == axis_value)
            .map(|r| r.mean_recall)
    }

    /// `axis,strategy,mean_recall,mean_ap`; the header's first column is the
    /// axis label.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},strategy,mean_recall,mean_ap\n", self.axis);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.axis_value, r.strategy, r.mean_recall, r.mean_ap);
        }
        out
    }
}

fn corpus_ids(pool: &CandidatePool) -> Vec<String> {
    pool.queries()
        .first()
        .map(|q| q.lists.iter().map(|c| c.corpus_id.clone()).collect())
        .unwrap_or_default()
}

fn per_task(pool: &CandidatePool, known: &str, f: f64) -> Result<AllocationStrategy> {
    let ids = corpus_ids(pool);
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    Ok(AllocationStrategy::PerTask(Fractions::for_known(known, f, &refs)?))
}

/// Grid point with the highest score. Ties go to the fraction nearer 0.5,
/// then to the smaller fraction.
pub fn argmax_fraction(grid: &[f64], scores: &[f64]) -> usize {
    let key = |i: usize| (scores[i], -(grid[i] - 0.5).abs(), -grid[i]);
    (0..grid.len())
        .max_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
        })
        .expect("non-empty grid")
}

/// Per-task evaluation at every grid fraction, in grid order.
fn grid_reports(pool: &CandidatePool, known: &str, k: usize, grid: &[f64]) -> Result<Vec<EvalReport>> {
    check_grid(grid)?;
    grid.par_iter()
        .map(|&f| pool.evaluate(&per_task(pool, known, f)?, &format!("{PER_TASK}:{f}"), k))
        .collect()
}

/// The per-task fraction with the best mean recall and its report.
pub fn best_per_task(pool: &CandidatePool, known: &str, k: usize, grid: &[f64]) -> Result<(f64, EvalReport)> {
    let mut reports = grid_reports(pool, known, k, grid)?;
    let recalls: Vec<f64> = reports.iter().map(|r| r.mean_recall).collect();
    let i = argmax_fraction(grid, &recalls);
    Ok((grid[i], reports.swap_remove(i)))
}

/// One per-task row per grid fraction, axis `fraction`.
pub fn fraction_sweep(pool: &CandidatePool, known: &str, k: usize, grid: &[f64]) -> Result<SweepResult> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    check_increasing("fraction grid", &sorted)?;
    let reports = grid_reports(pool, known, k, &sorted)?;
    let mut out = SweepResult {
        axis: "fraction".into(),
        rows: Vec::new(),
    };
    for (f, r) in sorted.iter().zip(&reports) {
        out.push(*f, r, PER_TASK);
    }
    Ok(out)
}

/// Naive, best per-task (chosen separately at each k) and oracle at every k.
/// The pool depth must cover the largest k.
pub fn k_sweep(pool: &CandidatePool, known: &str, ks: &[usize], grid: &[f64]) -> Result<SweepResult> {
    let axis: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    check_increasing("budgets", &axis)?;
    let points: Vec<[EvalReport; 3]> = ks
        .par_iter()
        .map(|&k| {
            let naive = pool.evaluate(&AllocationStrategy::NaiveMerge, NAIVE, k)?;
            let (_, best) = best_per_task(pool, known, k, grid)?;
            let oracle = pool.evaluate(&AllocationStrategy::PerQueryOracle, ORACLE, k)?;
            Ok([naive, best, oracle])
        })
        .collect::<Result<_>>()?;
    let mut out = SweepResult {
        axis: "k".into(),
        rows: Vec::new(),
    };
    for (&x, [naive, best, oracle]) in axis.iter().zip(&points) {
        out.push(x, naive, NAIVE);
        out.push(x, best, PER_TASK);
        out.push(x, oracle, ORACLE);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrial {
    pub trial: usize,
    pub chosen_fraction: f64,
    pub heldout_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub seed_set_size: usize,
    pub trials: Vec<TuneTrial>,
    pub mean_heldout_recall: f64,
    /// Population standard deviation.
    pub std_heldout_recall: f64,
}

/// Mean and population standard deviation, shifted by the first value so a
/// constant sample has a standard deviation of exactly zero.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let x0 = values[0];
    let shift = values.iter().map(|v| v - x0).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - x0 - shift).powi(2)).sum::<f64>() / n;
    (x0 + shift, var.sqrt())
}

impl TuneReport {
    pub fn chosen_fraction_std(&self) -> f64 {
        let v: Vec<f64> = self.trials.iter().map(|t| t.chosen_fraction).collect();
        mean_std(&v).1
    }
}

/// `size,trial,chosen_fraction,heldout_recall` rows for all reports.
pub fn tune_csv(reports: &[TuneReport]) -> String {
    let mut out = String::from("size,trial,chosen_fraction,heldout_recall\n");
    for r in reports {
        for t in &r.trials {
            let _ = writeln!(out, "{},{},{},{}", r.seed_set_size, t.trial, t.chosen_fraction, t.heldout_recall);
        }
    }
    out
}

/// Picks a per-task fraction on random validation subsets and scores it on
/// the test pool.
///
/// Seed sets are drawn without replacement from `val`, sizes in the given
/// order and trials in sequence, all from one generator seeded with `seed`.
#[allow(clippy::too_many_arguments)]
pub fn seed_set_tune(
    val: &CandidatePool,
    test: &CandidatePool,
    known: &str,
    k: usize,
    sizes: &[usize],
    trials: usize,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<TuneReport>> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s > val.len() || s == 0) {
        return Err(Error::SeedSetTooLarge {
            requested: s,
            available: val.len(),
        });
    }
    check_grid(grid)?;
    let val_recalls: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&f| {
            let rows = val.run(&per_task(val, known, f)?, k)?;
            Ok(rows.into_iter().map(|r| r.recall).collect())
        })
        .collect::<Result<_>>()?;
    let test_recalls: Vec<f64> = grid_reports(test, known, k, grid)?
        .iter()
        .map(|r| r.mean_recall)
        .collect();

    let mut rng = SplitMix64::new(seed);
    let mut reports = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut rows = Vec::with_capacity(trials);
        for trial in 0..trials {
            let mut sample = sample_without_replacement(val.len(), size, &mut rng);
            // Sum in a fixed order so equal seed sets score identically.
            sample.sort_unstable();
            let scores: Vec<f64> = val_recalls
                .iter()
                .map(|per_query| sample.iter().map(|&i| per_query[i]).sum::<f64>() / size as f64)
                .collect();
            let i = argmax_fraction(grid, &scores);
            rows.push(TuneTrial {
                trial,
                chosen_fraction: grid[i],
                heldout_recall: test_recalls[i],
            });
        }
        let recalls: Vec<f64> = rows.iter().map(|t| t.heldout_recall).collect();
        let (mean, std) = mean_std(&recalls);
        reports.push(TuneReport {
            seed_set_size: size,
            trials: rows,
            mean_heldout_recall: mean,
            std_heldout_recall: std,
        });
    }
    Ok(reports)
}

/// Inputs of a training-data-size sweep.
#[derive(Debug, Clone)]
pub struct DatasizeSweep<'a> {
    pub pairs: &'a [TrainingPair],
    /// Corpus the training positives and negatives come from.
    pub train_corpus: &'a Corpus,
    /// Every corpus to retrieve from, the training corpus included.
    pub corpora: &'a [&'a Corpus],
    pub queries: &'a QuerySet,
    pub init: &'a LinearEncoder,
    pub train: TrainConfig,
    pub known: &'a str,
    pub k: usize,
    pub grid: &'a [f64],
    /// Seeds the shuffle that picks each training subset.
    pub subset_seed: u64,
}

/// Subset of `ceil(fraction * n)` pairs taken from a seeded shuffle and kept
/// in their original order, so fraction 1.0 is the full set unchanged.
pub fn training_subset(pairs: &[TrainingPair], fraction: f64, seed: u64) -> Vec<TrainingPair> {
    let n = ((fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len().max(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    shuffle(&mut order, &mut SplitMix64::new(seed));
    let mut chosen = order[..n.min(pairs.len())].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| pairs[i].clone()).collect()
}

pub fn datasize_sweep(input: &DatasizeSweep<'_>, fractions: &[f64]) -> Result<SweepResult> {
    check_increasing("training fractions", fractions)?;
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidConfig(format!("training fraction {f} outside (0, 1]")));
    }
    let mut out = SweepResult {
        axis: "train_fraction".into(),
        rows: Vec::new(),
    };
    for &fraction in fractions {
        let subset = training_subset(input.pairs, fraction, input.subset_seed);
        let (encoder, _) = train_encoder(&subset, input.train_corpus, input.init.clone(), &input.train)?;
        let matrices: Vec<_> = input.corpora.iter().map(|c| embed_corpus(&encoder, c)).collect();
        let pool = CandidatePool::build(input.queries, &matrices, &encoder, input.k)?;
        let naive = pool.evaluate(&AllocationStrategy::NaiveMerge, NAIVE, input.k)?;
        let (_, best) = best_per_task(&pool, input.known, input.k, input.grid)?;
        let oracle = pool.evaluate(&AllocationStrategy::PerQueryOracle, ORACLE, input.k)?;
        out.push(fraction, &naive, NAIVE);
        out.push(fraction, &best, PER_TASK);
        out.push(fraction, &oracle, ORACLE);
    }
    Ok(out)
}
