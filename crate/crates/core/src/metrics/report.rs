use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{confusion_matrix, fold_summary, ppv, roc_auc_ovr, FoldSummary};
use crate::prototypes::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub code: String,
    pub support: usize,
    pub auc: Option<f64>,
    pub ppv: Option<f64>,
}

/// Metrics of one evaluated set of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_segments: usize,
    pub classes: Vec<ClassMetrics>,
    pub macro_auc: Option<f64>,
    pub macro_ppv: Option<f64>,
    /// `[true][predicted]`
    pub confusion: Vec<Vec<u64>>,
}

/// Scores each row of `probs` against `labels`; predictions are row argmaxes.
pub fn evaluate(probs: ArrayView2<f64>, labels: &[usize], codes: &[String]) -> Result<EvaluationReport> {
    if probs.ncols() != codes.len() {
        return Err(Error::Argument(format!(
            "{} score columns for {} categories",
            probs.ncols(),
            codes.len()
        )));
    }
    let auc = roc_auc_ovr(probs, labels)?;
    let predicted: Vec<usize> = probs.outer_iter().map(|r| argmax(&r.to_vec())).collect();
    let p = ppv(&predicted, labels, codes.len())?;
    let confusion = confusion_matrix(&predicted, labels, codes.len())?;
    let classes = codes
        .iter()
        .enumerate()
        .map(|(c, code)| ClassMetrics {
            code: code.clone(),
            support: labels.iter().filter(|&&l| l == c).count(),
            auc: auc.per_class[c],
            ppv: p.per_class[c],
        })
        .collect();
    Ok(EvaluationReport {
        n_segments: labels.len(),
        classes,
        macro_auc: auc.macro_auc,
        macro_ppv: p.macro_ppv,
        confusion,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl EvaluationReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Per-class table: `code,support,auc,ppv`, empty cells for undefined values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["code", "support", "auc", "ppv"])?;
        for c in &self.classes {
            w.write_record([c.code.clone(), c.support.to_string(), cell(c.auc), cell(c.ppv)])?;
        }
        w.write_record([
            "macro".to_string(),
            self.n_segments.to_string(),
            cell(self.macro_auc),
            cell(self.macro_ppv),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Per-fold reports with mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub folds: Vec<EvaluationReport>,
    pub macro_auc: Option<FoldSummary>,
    pub macro_ppv: Option<FoldSummary>,
    pub class_auc: BTreeMap<String, FoldSummary>,
    pub class_ppv: BTreeMap<String, FoldSummary>,
}

fn summarize(values: impl Iterator<Item = Option<f64>>) -> Option<FoldSummary> {
    let v: Vec<f64> = values.flatten().collect();
    fold_summary(&v).ok()
}

impl SummaryReport {
    /// Folds where a metric is undefined do not contribute to its summary.
    pub fn from_folds(folds: Vec<EvaluationReport>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Argument("summary of no folds".into()));
        }
        let codes: Vec<String> = folds[0].classes.iter().map(|c| c.code.clone()).collect();
        let mut class_auc = BTreeMap::new();
        let mut class_ppv = BTreeMap::new();
        for (i, code) in codes.iter().enumerate() {
            if let Some(s) = summarize(folds.iter().map(|f| f.classes[i].auc)) {
                class_auc.insert(code.clone(), s);
            }
            if let Some(s) = summarize(folds.iter().map(|f| f.classes[i].ppv)) {
                class_ppv.insert(code.clone(), s);
            }
        }
        Ok(SummaryReport {
            macro_auc: summarize(folds.iter().map(|f| f.macro_auc)),
            macro_ppv: summarize(folds.iter().map(|f| f.macro_ppv)),
            class_auc,
            class_ppv,
            folds,
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// One row per fold plus `mean` and `std` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["fold", "n_segments", "macro_auc", "macro_ppv"])?;
        for (k, f) in self.folds.iter().enumerate() {
            w.write_record([
                k.to_string(),
                f.n_segments.to_string(),
                cell(f.macro_auc),
                cell(f.macro_ppv),
            ])?;
        }
        let (a, p) = (self.macro_auc, self.macro_ppv);
        w.write_record([
            "mean".into(),
            String::new(),
            cell(a.map(|s| s.mean)),
            cell(p.map(|s| s.mean)),
        ])?;
        w.write_record([
            "std".into(),
            String::new(),
            cell(a.map(|s| s.std)),
            cell(p.map(|s| s.std)),
        ])?;
        w.flush()?;
        Ok(())
    }
}
