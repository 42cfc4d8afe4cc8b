//! Threshold and rank metrics for imbalanced binary classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default decision threshold on predicted probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub auroc: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
}

fn check_lengths(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::invalid(
            "metric input",
            format!("{} labels vs {} scores", labels.len(), scores.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::invalid("metric input", "no samples"));
    }
    Ok(())
}

/// Tallies predictions with `score >= threshold` counted as positive.
pub fn confusion(labels: &[bool], scores: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_lengths(labels, scores)?;
    let mut cm = ConfusionMatrix {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
        threshold,
    };
    for (&label, &score) in labels.iter().zip(scores) {
        match (label, score >= threshold) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
///
/// Computed from midranks in O(n log n).
pub fn auroc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_lengths(labels, scores)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("metric input", "NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks (1-based, doubled to stay in integers) over positives.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share the midrank (start + 1 + end) / 2
        let twice_midrank = (start + 1 + end) as u128;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        twice_rank_sum += twice_midrank * pos_in_group;
        start = end;
    }
    let n_pos = n_pos as u128;
    // U = R_pos - n_pos (n_pos + 1) / 2, doubled
    let twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg as u128) as f64)
}

/// Harmonic mean of precision and recall; 0 when either is undefined.
pub fn f1(cm: &ConfusionMatrix) -> f64 {
    if cm.tp + cm.fp == 0 || cm.tp + cm.fn_ == 0 {
        return 0.0;
    }
    let precision = cm.tp as f64 / (cm.tp + cm.fp) as f64;
    let recall = cm.tp as f64 / (cm.tp + cm.fn_) as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    2.0 * precision * recall / (precision + recall)
}

/// Mean of true-positive and true-negative rates.
pub fn balanced_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.tp + cm.fn_ == 0 || cm.tn + cm.fp == 0 {
        return Err(Error::SingleClass);
    }
    let tpr = cm.tp as f64 / (cm.tp + cm.fn_) as f64;
    let tnr = cm.tn as f64 / (cm.tn + cm.fp) as f64;
    Ok((tpr + tnr) / 2.0)
}

pub fn evaluate(labels: &[bool], scores: &[f64], threshold: f64) -> Result<MetricSet> {
    let cm = confusion(labels, scores, threshold)?;
    Ok(MetricSet {
        auroc: auroc(labels, scores)?,
        f1: f1(&cm),
        balanced_accuracy: balanced_accuracy(&cm)?,
    })
}
