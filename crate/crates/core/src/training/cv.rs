use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    predict_prepared, prepare_segments, segments_of, train_fold, ModelCheckpoint, TrainConfig, CHECKPOINT_FILE,
};
use crate::datamodel::{make_monte_carlo_splits, DatasetManifest, FoldSplit, TaskKind};
use crate::features::FeatureSource;
use crate::metrics::{evaluate, EvaluationReport, SummaryReport};
use crate::{Error, Result};

/// Class probabilities of one evaluated segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub split: FoldSplit,
    pub checkpoint: ModelCheckpoint,
    pub report: EvaluationReport,
    pub predictions: Vec<SegmentPrediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<FoldOutcome>,
    pub summary: SummaryReport,
}

/// Scores a checkpoint on the segments of `videos`, with TTA when the
/// checkpoint's ablation uses it.
pub fn evaluate_checkpoint(
    checkpoint: &ModelCheckpoint,
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    videos: &BTreeSet<String>,
    task_kind: TaskKind,
) -> Result<(EvaluationReport, Vec<SegmentPrediction>)> {
    if checkpoint.taxonomy.task_kind != task_kind {
        return Err(Error::Taxonomy(format!(
            "checkpoint was trained for {}, evaluation asks for {}",
            checkpoint.taxonomy.task_kind, task_kind
        )));
    }
    let use_tta = checkpoint.ablation().uses_tta();
    let segments = segments_of(&manifest.segments(task_kind)?, videos);
    if segments.is_empty() {
        return Err(Error::Config("no segments to evaluate".into()));
    }
    let prepared = prepare_segments(manifest, source, &segments, &checkpoint.config.sampling, use_tta)?;
    let probs = predict_prepared(&checkpoint.model, &prepared, use_tta)?;
    let labels: Vec<usize> = segments.iter().map(|s| s.label).collect();
    let report = evaluate(probs.view(), &labels, &checkpoint.taxonomy.categories)?;
    let predictions = segments
        .iter()
        .zip(probs.outer_iter())
        .map(|(s, p)| SegmentPrediction {
            video_id: s.video_id.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            label: s.label,
            probs: p.to_vec(),
        })
        .collect();
    Ok((report, predictions))
}

fn run_one(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    task_kind: TaskKind,
    split: &FoldSplit,
    config: &TrainConfig,
) -> Result<FoldOutcome> {
    let checkpoint = train_fold(manifest, source, split, task_kind, config)?;
    if let Some(v) = split.test_video_ids.intersection(&split.train_video_ids).next() {
        return Err(Error::Validation(format!("test video {v} was used for training")));
    }
    let (report, predictions) = evaluate_checkpoint(&checkpoint, manifest, source, &split.test_video_ids, task_kind)?;
    Ok(FoldOutcome {
        split: split.clone(),
        checkpoint,
        report,
        predictions,
    })
}

/// Trains and tests one model per split using up to `jobs` threads. Results
/// are ordered by split and independent of `jobs`.
pub fn run_folds(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    task_kind: TaskKind,
    splits: &[FoldSplit],
    config: &TrainConfig,
    jobs: usize,
) -> Result<CrossValidation> {
    config.validate()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<FoldOutcome>>>> = Mutex::new((0..splits.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, splits.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= splits.len() {
                    break;
                }
                let out = run_one(manifest, source, task_kind, &splits[i], config);
                results.lock().expect("fold results lock")[i] = Some(out);
            });
        }
    });
    let mut folds = Vec::with_capacity(splits.len());
    for (split, r) in splits.iter().zip(results.into_inner().expect("fold results lock")) {
        match r.expect("every fold ran") {
            Ok(f) => folds.push(f),
            Err(e) => {
                return Err(Error::Fold {
                    fold_id: split.fold_id,
                    source: Box::new(e),
                })
            }
        }
    }
    let summary = SummaryReport::from_folds(folds.iter().map(|f| f.report.clone()).collect())?;
    Ok(CrossValidation { folds, summary })
}

/// Monte Carlo cross-validation over `n_folds` seeded video-level splits.
pub fn run_cross_validation(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    task_kind: TaskKind,
    n_folds: usize,
    config: &TrainConfig,
    jobs: usize,
) -> Result<CrossValidation> {
    let splits = make_monte_carlo_splits(manifest, n_folds, config.seed)?;
    run_folds(manifest, source, task_kind, &splits, config, jobs)
}

impl CrossValidation {
    /// Writes `fold<k>/{split.json, checkpoint.bin, train_log.jsonl,
    /// report.json, report.csv, predictions.json}` and `summary.{json,csv}`.
    pub fn save(&self, run_dir: &Path) -> Result<()> {
        for f in &self.folds {
            let dir = run_dir.join(format!("fold{}", f.split.fold_id));
            fs::create_dir_all(&dir)?;
            f.split.save(&dir.join("split.json"))?;
            f.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
            fs::write(dir.join("train_log.jsonl"), f.checkpoint.log_lines()?)?;
            f.report.write_json(&dir.join("report.json"))?;
            f.report.write_csv(&dir.join("report.csv"))?;
            fs::write(
                dir.join("predictions.json"),
                serde_json::to_string_pretty(&f.predictions)? + "\n",
            )?;
        }
        self.summary.write_json(&run_dir.join("summary.json"))?;
        self.summary.write_csv(&run_dir.join("summary.csv"))?;
        Ok(())
    }
}
