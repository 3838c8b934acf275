use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::{ConfusionMatrix, Evaluation};
use crate::corpus::kfold_split;
use crate::error::{Error, Result};

/// Accuracies of repeated runs (or folds) with their mean and sample standard
/// deviation. `single_run` flags a lone run, whose deviation is reported as 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub single_run: bool,
    /// Confusion matrix of the last run.
    pub confusion: Option<ConfusionMatrix>,
}

impl RunResult {
    pub fn from_accuracies(
        accuracies: Vec<f64>,
        confusion: Option<ConfusionMatrix>,
    ) -> Result<Self> {
        let n = accuracies.len();
        if n == 0 {
            return Err(Error::config("no runs to aggregate"));
        }
        let (mean, std) = mean_and_std(&accuracies);
        Ok(Self {
            accuracies,
            mean,
            std,
            single_run: n == 1,
            confusion,
        })
    }
}

/// Mean and sample (n−1) standard deviation; the deviation of one value is 0.
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Runs `experiment` with seeds `seed, seed+1, …, seed+runs−1` (in parallel)
/// and aggregates the accuracies in seed order.
pub fn run_repeated<F>(runs: usize, seed: u64, experiment: F) -> Result<RunResult>
where
    F: Fn(u64) -> Result<Evaluation> + Sync,
{
    if runs == 0 {
        return Err(Error::config("runs must be at least 1"));
    }
    let evals = (0..runs as u64)
        .into_par_iter()
        .map(|i| experiment(seed.wrapping_add(i)))
        .collect::<Result<Vec<_>>>()?;
    let confusion = evals.last().map(|e| e.confusion.clone());
    RunResult::from_accuracies(evals.iter().map(|e| e.accuracy).collect(), confusion)
}

/// Fold accuracies plus the pooled accuracy (all correct over all tested).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: RunResult,
    pub correct: usize,
    pub total: usize,
    pub pooled_accuracy: f64,
}

/// Splits `0..n` into `k` seeded folds and calls `fold(i, train, test)` for
/// each, where `train` is every index outside fold `i`. Each call should
/// build its own model.
pub fn cross_validate<F>(n: usize, k: usize, seed: u64, fold: F) -> Result<CvResult>
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Evaluation> + Sync,
{
    let folds = kfold_split(n, k, seed)?;
    let evals = (0..folds.k())
        .into_par_iter()
        .map(|i| fold(i, &folds.complement(i), folds.fold(i)))
        .collect::<Result<Vec<_>>>()?;
    let correct = evals.iter().map(|e| e.correct).sum();
    let total: usize = evals.iter().map(|e| e.total).sum();
    let confusion = evals.last().map(|e| e.confusion.clone());
    Ok(CvResult {
        folds: RunResult::from_accuracies(evals.iter().map(|e| e.accuracy).collect(), confusion)?,
        correct,
        total,
        pooled_accuracy: correct as f64 / total as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelSet;

    fn eval_with(acc_num: usize, of: usize) -> Evaluation {
        let labels = LabelSet::new(["A", "B"]).unwrap();
        let gold = vec![0; of];
        let pred: Vec<Option<usize>> = (0..of).map(|i| Some(usize::from(i >= acc_num))).collect();
        Evaluation::from_predictions(&labels, &gold, &pred).unwrap()
    }

    #[test]
    fn aggregation_examples() {
        let r = run_repeated(10, 0, |_| Ok(eval_with(1, 2))).unwrap();
        assert_eq!((r.mean, r.std), (0.5, 0.0));
        let r = run_repeated(2, 7, |s| Ok(eval_with(if s == 7 { 2 } else { 3 }, 5))).unwrap();
        assert_eq!(r.accuracies, vec![0.4, 0.6]);
        assert!((r.mean - 0.5).abs() < 1e-12);
        assert!((r.std - 0.141_421_356).abs() < 1e-8);
        let one = run_repeated(1, 0, |_| Ok(eval_with(1, 3))).unwrap();
        assert!(one.single_run);
        assert_eq!(one.std, 0.0);
    }

    #[test]
    fn leave_one_out_structure() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let cv = cross_validate(10, 10, 1, |_, train, test| {
            calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            assert_eq!((train.len(), test.len()), (9, 1));
            Ok(eval_with(1, 1))
        })
        .unwrap();
        assert_eq!(calls.into_inner(), 10);
        assert_eq!(
            (cv.folds.mean, cv.folds.std, cv.pooled_accuracy),
            (1.0, 0.0, 1.0)
        );
    }
}
