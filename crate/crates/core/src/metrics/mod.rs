//! One-vs-rest ROC AUC, PPV, confusion matrices, audit precision and fold
//! aggregation, plus report serialization and ROC plots.

mod report;
mod roc;

pub use report::{evaluate, ClassMetrics, EvaluationReport, SummaryReport};
pub use roc::{roc_curve, vertical_average, write_roc_svg, AveragedRoc, RocCurve};

use std::collections::BTreeSet;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-class AUC (`None` when a class lacks positives or negatives) and
/// their unweighted mean over defined classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub per_class: Vec<Option<f64>>,
    pub macro_auc: Option<f64>,
}

/// Win and tie counts of positives against negatives.
fn pair_counts(scores: &[f64], positive: &[bool]) -> (u64, u64, u64, u64) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut wins, mut ties, mut neg_below) = (0u64, 0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut n) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if positive[order[j]] {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        wins += p * neg_below;
        ties += p * n;
        neg_below += n;
        i = j;
    }
    let n_pos = positive.iter().filter(|&&p| p).count() as u64;
    (wins, ties, n_pos, positive.len() as u64 - n_pos)
}

/// `P(positive > negative) + 0.5 P(tie)` from exact pair counts.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(Error::Argument(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("scores must be finite".into()));
    }
    let (wins, ties, p, n) = pair_counts(scores, positive);
    if p == 0 || n == 0 {
        return Ok(None);
    }
    Ok(Some((2 * wins + ties) as f64 / (2 * p * n) as f64))
}

fn check_labels(n: usize, labels: &[usize], n_classes: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    if labels.len() != n {
        return Err(Error::Argument(format!("{} rows for {} labels", n, labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Argument(format!("label {bad} outside {n_classes} classes")));
    }
    Ok(())
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// One-vs-rest AUC of every column of `scores` (`N x C`).
pub fn roc_auc_ovr(scores: ArrayView2<f64>, labels: &[usize]) -> Result<AucReport> {
    check_labels(scores.nrows(), labels, scores.ncols())?;
    let per_class = (0..scores.ncols())
        .map(|c| {
            let col: Vec<f64> = scores.column(c).to_vec();
            let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            binary_auc(&col, &pos)
        })
        .collect::<Result<Vec<_>>>()?;
    let macro_auc = mean_defined(&per_class);
    Ok(AucReport { per_class, macro_auc })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpvReport {
    /// `None` for classes that were never predicted.
    pub per_class: Vec<Option<f64>>,
    pub macro_ppv: Option<f64>,
}

/// True positives over predicted positives, per class.
pub fn ppv(predicted: &[usize], labels: &[usize], n_classes: usize) -> Result<PpvReport> {
    check_labels(predicted.len(), labels, n_classes)?;
    let cm = confusion_matrix(predicted, labels, n_classes)?;
    let per_class: Vec<Option<f64>> = (0..n_classes)
        .map(|c| {
            let predicted_c: u64 = cm.iter().map(|row| row[c]).sum();
            (predicted_c > 0).then(|| cm[c][c] as f64 / predicted_c as f64)
        })
        .collect();
    let macro_ppv = mean_defined(&per_class);
    Ok(PpvReport { per_class, macro_ppv })
}

/// Counts indexed `[true][predicted]`.
pub fn confusion_matrix(predicted: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_labels(predicted.len(), labels, n_classes)?;
    if let Some(&bad) = predicted.iter().find(|&&p| p >= n_classes) {
        return Err(Error::Argument(format!("prediction {bad} outside {n_classes} classes")));
    }
    let mut cm = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        cm[l][p] += 1;
    }
    Ok(cm)
}

/// A predicted event checked by a human reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub category: String,
    #[serde(default)]
    pub stratum: Option<String>,
    /// `true` when the reviewer confirmed the prediction.
    pub verdict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCell {
    pub category: String,
    pub stratum: Option<String>,
    pub correct: usize,
    pub total: usize,
    /// `None` for cells without samples.
    pub precision: Option<f64>,
}

/// Precision for every `(category, stratum)` cell, where categories come
/// from `categories` and strata from the samples themselves.
pub fn audit_precision(samples: &[AuditSample], categories: &[String]) -> Result<Vec<AuditCell>> {
    for (i, s) in samples.iter().enumerate() {
        if s.verdict.is_none() {
            return Err(Error::Validation(format!(
                "audit sample {i} ({}) has no verdict",
                s.category
            )));
        }
        if !categories.contains(&s.category) {
            return Err(Error::Validation(format!(
                "audit sample {i} has unknown category {:?}",
                s.category
            )));
        }
    }
    let strata: BTreeSet<Option<String>> = samples.iter().map(|s| s.stratum.clone()).collect();
    let strata: Vec<Option<String>> = if strata.is_empty() {
        vec![None]
    } else {
        strata.into_iter().collect()
    };
    let mut cells = Vec::new();
    for category in categories {
        for stratum in &strata {
            let members: Vec<&AuditSample> = samples
                .iter()
                .filter(|s| &s.category == category && &s.stratum == stratum)
                .collect();
            let correct = members.iter().filter(|s| s.verdict == Some(true)).count();
            let total = members.len();
            cells.push(AuditCell {
                category: category.clone(),
                stratum: stratum.clone(),
                correct,
                total,
                precision: (total > 0).then(|| correct as f64 / total as f64),
            });
        }
    }
    Ok(cells)
}

/// Mean and population standard deviation across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn fold_summary(values: &[f64]) -> Result<FoldSummary> {
    if values.is_empty() {
        return Err(Error::Argument("fold summary of no folds".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(FoldSummary {
        mean,
        std: var.sqrt(),
        n: values.len(),
    })
}
