//! Mini-batch SGD on the InfoNCE loss, per-fold training with validation
//! checkpoint selection, and the Monte Carlo cross-validation runner.

mod checkpoint;
mod cv;

pub use checkpoint::{EpochRecord, ModelCheckpoint, CHECKPOINT_FILE, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use cv::{evaluate_checkpoint, run_cross_validation, run_folds, CrossValidation, FoldOutcome, SegmentPrediction};

pub use crate::model::Ablation;

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetManifest, FoldSplit, Segment, TaskKind};
use crate::encoder::EncoderConfig;
use crate::features::FeatureSource;
use crate::inference::predict_inputs;
use crate::metrics::roc_auc_ovr;
use crate::model::{Model, ModelInput};
use crate::sampling::{sample_input, tta_variants, SamplingConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub temperature: f64,
    pub encoder: EncoderConfig,
    pub sampling: SamplingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 8,
            learning_rate: 0.1,
            epochs: 20,
            seed: 0,
            ablation: Ablation::Full,
            temperature: 1.0,
            encoder: EncoderConfig::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        self.encoder.validate()?;
        self.sampling.validate()?;
        if self.sampling.max_frames > self.encoder.max_frames {
            return Err(Error::Config(format!(
                "sampling keeps up to {} frames but the encoder has {} positions",
                self.sampling.max_frames, self.encoder.max_frames
            )));
        }
        Ok(())
    }
}

/// A labeled segment with its sampled inputs loaded; `variants[0]` is the
/// offset-0 input.
#[derive(Debug, Clone)]
pub struct PreparedSegment {
    pub segment: Segment,
    pub variants: Vec<ModelInput>,
}

/// Samples and loads features for every segment, failing on the first
/// missing feature.
pub fn prepare_segments(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    segments: &[Segment],
    sampling: &SamplingConfig,
    with_tta: bool,
) -> Result<Vec<PreparedSegment>> {
    segments
        .iter()
        .map(|seg| {
            let fps = manifest.media(&seg.video_id)?.fps;
            let sampled = if with_tta {
                tta_variants(seg.start_s, seg.end_s, fps, sampling)?
            } else {
                vec![sample_input(
                    seg.start_s,
                    seg.end_s,
                    fps,
                    sampling,
                    sampling.tta_offsets_frames[0],
                )?]
            };
            let variants = sampled
                .iter()
                .map(|s| ModelInput::load(source, &seg.video_id, s))
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedSegment {
                segment: seg.clone(),
                variants,
            })
        })
        .collect()
}

/// A sampled timestamp the feature source cannot serve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingFeature {
    pub video_id: String,
    pub modality: String,
    pub timestamp: f64,
}

/// Every feature that sampling `segments` would request but `source` lacks,
/// sorted and deduplicated. Other source errors are returned as is.
pub fn find_missing_features(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    segments: &[Segment],
    sampling: &SamplingConfig,
    with_tta: bool,
) -> Result<Vec<MissingFeature>> {
    let mut missing = BTreeSet::new();
    let mut note = |r: Result<crate::features::EmbeddingSequence>| match r {
        Ok(_) => Ok(()),
        Err(Error::MissingFeature {
            video_id,
            modality,
            timestamp,
        }) => {
            missing.insert((video_id, modality, timestamp.to_bits()));
            Ok(())
        }
        Err(e) => Err(e),
    };
    for seg in segments {
        let fps = manifest.media(&seg.video_id)?.fps;
        let sampled = if with_tta {
            tta_variants(seg.start_s, seg.end_s, fps, sampling)?
        } else {
            vec![sample_input(
                seg.start_s,
                seg.end_s,
                fps,
                sampling,
                sampling.tta_offsets_frames[0],
            )?]
        };
        for s in &sampled {
            for &t in &s.rgb {
                note(source.rgb(&seg.video_id, &[t]))?;
            }
            for &pair in &s.flow {
                note(source.flow(&seg.video_id, &[pair]))?;
            }
        }
    }
    let mut out: Vec<MissingFeature> = missing
        .into_iter()
        .map(|(video_id, modality, bits)| MissingFeature {
            video_id,
            modality,
            timestamp: f64::from_bits(bits),
        })
        .collect();
    out.sort_by(|a, b| {
        (&a.video_id, &a.modality)
            .cmp(&(&b.video_id, &b.modality))
            .then(a.timestamp.total_cmp(&b.timestamp))
    });
    Ok(out)
}

pub(crate) fn segments_of(segments: &[Segment], videos: &BTreeSet<String>) -> Vec<Segment> {
    segments
        .iter()
        .filter(|s| videos.contains(&s.video_id))
        .cloned()
        .collect()
}

/// Class probabilities of every prepared segment, one row each.
pub fn predict_prepared(model: &Model, prepared: &[PreparedSegment], use_tta: bool) -> Result<Array2<f64>> {
    let c = model.bank.n_classes();
    let mut probs = Array2::zeros((prepared.len(), c));
    for (i, p) in prepared.iter().enumerate() {
        let row = predict_inputs(model, &p.variants, use_tta)?;
        probs.row_mut(i).assign(&ndarray::Array1::from(row));
    }
    Ok(probs)
}

fn macro_auc(model: &Model, prepared: &[PreparedSegment], use_tta: bool) -> Result<Option<f64>> {
    if prepared.is_empty() {
        return Ok(None);
    }
    let probs = predict_prepared(model, prepared, use_tta)?;
    let labels: Vec<usize> = prepared.iter().map(|p| p.segment.label).collect();
    Ok(roc_auc_ovr(probs.view(), &labels)?.macro_auc)
}

fn mean_loss(model: &Model, prepared: &[PreparedSegment]) -> Result<f64> {
    let batch: Vec<(&ModelInput, usize)> = prepared.iter().map(|p| (&p.variants[0], p.segment.label)).collect();
    Ok(model.loss(&batch)? / batch.len() as f64)
}

/// Strictly lower; an undefined loss never wins a tie.
fn lower(loss: Option<f64>, than: Option<f64>) -> bool {
    matches!((loss, than), (Some(a), Some(b)) if a < b)
}

/// The RNG of one fold: seeded by `seed`, on stream `fold_id`.
pub fn fold_rng(seed: u64, fold_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fold_id as u64);
    rng
}

/// Trains one model on the fold's training videos and returns the epoch
/// with the best validation macro AUC. Epochs tied on AUC are ranked by
/// validation loss; remaining ties keep the earlier epoch.
pub fn train_fold(
    manifest: &DatasetManifest,
    source: &dyn FeatureSource,
    fold: &FoldSplit,
    task_kind: TaskKind,
    config: &TrainConfig,
) -> Result<ModelCheckpoint> {
    config.validate()?;
    fold.validate(&manifest.video_ids().into_iter().collect())?;
    if source.feature_dim() != config.encoder.dim {
        return Err(Error::Config(format!(
            "features have dim {}, encoder expects {}",
            source.feature_dim(),
            config.encoder.dim
        )));
    }
    let segments = manifest.segments(task_kind)?;
    let train_segments = segments_of(&segments, &fold.train_video_ids);
    if train_segments.is_empty() {
        return Err(Error::Config(format!("fold {} has no training segments", fold.fold_id)));
    }
    let use_tta = config.ablation.uses_tta();
    let train = prepare_segments(manifest, source, &train_segments, &config.sampling, false)?;
    let val = prepare_segments(
        manifest,
        source,
        &segments_of(&segments, &fold.val_video_ids),
        &config.sampling,
        use_tta,
    )?;

    let taxonomy = task_kind.taxonomy();
    let mut rng = fold_rng(config.seed, fold.fold_id);
    let mut model = Model::init(
        &config.encoder,
        &taxonomy,
        config.ablation,
        config.temperature,
        &mut rng,
    )?;
    let initial_train_loss = mean_loss(&model, &train)?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(Model, usize, Option<f64>, Option<f64>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&ModelInput, usize)> = chunk
                .iter()
                .map(|&i| (&train[i].variants[0], train[i].segment.label))
                .collect();
            let (loss, grads) = model.batch_gradients(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            model.sgd_step(&grads, config.learning_rate);
            loss_sum += loss;
        }
        let val_auc = macro_auc(&model, &val, use_tta)?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(mean_loss(&model, &val)?)
        };
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_loss_sum: loss_sum,
            val_macro_auc: val_auc,
            val_loss,
        });
        let improves = match &best {
            None => true,
            Some((_, _, prev_auc, prev_loss)) => match (val_auc, prev_auc) {
                (Some(a), Some(b)) if a == *b => lower(val_loss, *prev_loss),
                (Some(a), Some(b)) => a > *b,
                (Some(_), None) => true,
                (None, None) => lower(val_loss, *prev_loss),
                (None, Some(_)) => false,
            },
        };
        if improves {
            best = Some((model.clone(), epoch, val_auc, val_loss));
        }
    }
    let (best_model, best_epoch, _, _) = best.expect("at least one epoch");
    Ok(ModelCheckpoint {
        model: best_model,
        taxonomy,
        config: config.clone(),
        fold_id: fold.fold_id,
        seed: config.seed,
        best_epoch,
        initial_train_loss,
        history,
    })
}
