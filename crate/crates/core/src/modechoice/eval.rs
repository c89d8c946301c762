use std::collections::BTreeMap;

use serde::Serialize;

use super::gbt::GbtModel;
use crate::error::{Error, Result};

pub fn accuracy(truth: &[u32], pred: &[u32]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(truth: &[u32], pred: &[u32]) -> f64 {
    let mut per: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        let e = per.entry(t).or_default();
        e.1 += 1;
        if t == p {
            e.0 += 1;
        }
    }
    if per.is_empty() {
        return 0.0;
    }
    per.values().map(|&(hit, n)| hit as f64 / n as f64).sum::<f64>() / per.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    /// Class labels indexing the confusion matrices (rows: truth, columns: prediction).
    pub labels: Vec<u32>,
    pub confusion_counts: Vec<Vec<usize>>,
    /// Each row sums to 1 (normalized by ground truth).
    pub confusion_by_truth: Vec<Vec<f64>>,
    /// Each column sums to 1 (normalized by prediction).
    pub confusion_by_prediction: Vec<Vec<f64>>,
    pub feature_importance: Vec<f64>,
    pub true_shares: Vec<f64>,
    pub predicted_shares: Vec<f64>,
}

pub fn evaluate_predictions(truth: &[u32], pred: &[u32], feature_importance: Vec<f64>) -> Result<EvalReport> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::InvalidInput("evaluation needs equal-length, nonempty label sets".into()));
    }
    let mut labels: Vec<u32> = truth.iter().chain(pred).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let k = labels.len();
    let at = |c: u32| labels.binary_search(&c).unwrap();
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        counts[at(t)][at(p)] += 1;
    }
    let row_sums: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..k).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let n = truth.len();
    Ok(EvalReport {
        accuracy: accuracy(truth, pred),
        balanced_accuracy: balanced_accuracy(truth, pred),
        confusion_by_truth: (0..k).map(|i| (0..k).map(|j| div(counts[i][j], row_sums[i])).collect()).collect(),
        confusion_by_prediction: (0..k).map(|i| (0..k).map(|j| div(counts[i][j], col_sums[j])).collect()).collect(),
        true_shares: row_sums.iter().map(|&c| div(c, n)).collect(),
        predicted_shares: col_sums.iter().map(|&c| div(c, n)).collect(),
        confusion_counts: counts,
        labels,
        feature_importance,
    })
}

pub fn evaluate_model<R: AsRef<[f64]>>(model: &GbtModel, x: &[R], y: &[u32]) -> Result<EvalReport> {
    let pred: Vec<u32> = x.iter().map(|r| model.predict_class(r.as_ref())).collect::<Result<_>>()?;
    evaluate_predictions(y, &pred, model.feature_importance())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 1];
        let r = evaluate_predictions(&y, &y, vec![]).unwrap();
        assert_eq!(r.balanced_accuracy, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_eq!(r.confusion_by_truth[i][j], e);
                assert_eq!(r.confusion_by_prediction[i][j], e);
            }
        }
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        let y = [0, 0, 1, 1];
        assert_eq!(balanced_accuracy(&y, &[1, 1, 1, 1]), 0.5);
        assert_eq!(accuracy(&y, &[1, 1, 1, 1]), 0.5);
    }
}
