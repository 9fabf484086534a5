//! Segment prediction with test-time augmentation, entropy-gated deep
//! ensembles, unlabeled timelines and attention explanations.

mod explain;
mod timeline;

pub use explain::{explain, write_attention_svg, Explanation};
pub use timeline::{merge_predictions, segment_timeline, Event, IntervalPrediction, TimelinePrediction};

use serde::{Deserialize, Serialize};

use crate::datamodel::Taxonomy;
use crate::features::FeatureSource;
use crate::model::{Model, ModelInput};
use crate::prototypes::argmax;
use crate::sampling::{sample_input, tta_variants};
use crate::training::ModelCheckpoint;
use crate::{Error, Result};

/// A span of one video to classify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub source_fps: f64,
}

/// Mean of the per-variant class distributions, or the first variant's
/// distribution without TTA.
pub fn predict_inputs(model: &Model, variants: &[ModelInput], use_tta: bool) -> Result<Vec<f64>> {
    let Some(first) = variants.first() else {
        return Err(Error::Argument("no sampled inputs to predict".into()));
    };
    if !use_tta {
        return Ok(model.classify(first)?.probabilities);
    }
    let dists = variants
        .iter()
        .map(|v| Ok(model.classify(v)?.probabilities))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_distribution(&dists))
}

fn mean_distribution(dists: &[Vec<f64>]) -> Vec<f64> {
    let m = dists.len() as f64;
    (0..dists[0].len())
        .map(|g| dists.iter().map(|d| d[g]).sum::<f64>() / m)
        .collect()
}

fn load_variants(
    checkpoint: &ModelCheckpoint,
    source: &dyn FeatureSource,
    span: &SegmentSpan,
    use_tta: bool,
) -> Result<Vec<ModelInput>> {
    let sampling = &checkpoint.config.sampling;
    let sampled = if use_tta {
        tta_variants(span.start_s, span.end_s, span.source_fps, sampling)?
    } else {
        vec![sample_input(
            span.start_s,
            span.end_s,
            span.source_fps,
            sampling,
            sampling.tta_offsets_frames[0],
        )?]
    };
    sampled
        .iter()
        .map(|s| ModelInput::load(source, &span.video_id, s))
        .collect()
}

/// The class distribution of every TTA variant, offset 0 first.
pub fn variant_distributions(
    checkpoint: &ModelCheckpoint,
    source: &dyn FeatureSource,
    span: &SegmentSpan,
) -> Result<Vec<Vec<f64>>> {
    load_variants(checkpoint, source, span, true)?
        .iter()
        .map(|v| Ok(checkpoint.model.classify(v)?.probabilities))
        .collect()
}

/// Class distribution of one segment. TTA is skipped when `use_tta` is
/// false or the checkpoint was trained as the no-TTA ablation.
pub fn predict_segment(
    checkpoint: &ModelCheckpoint,
    source: &dyn FeatureSource,
    span: &SegmentSpan,
    use_tta: bool,
) -> Result<Vec<f64>> {
    let use_tta = use_tta && checkpoint.ablation().uses_tta();
    let variants = load_variants(checkpoint, source, span, use_tta)?;
    predict_inputs(&checkpoint.model, &variants, use_tta)
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Half of the maximum entropy, `0.5 ln C`.
pub fn default_threshold(n_classes: usize) -> f64 {
    0.5 * (n_classes as f64).ln()
}

/// A lower bound on the entropy any prediction can reach when logits are
/// cosine similarities divided by `temperature`, so lie in
/// `[-1/temperature, 1/temperature]`: one class at the top of the range and
/// the rest at the bottom. Gates below this bound never predict. The bound
/// is attained for two classes.
pub fn entropy_floor(n_classes: usize, temperature: f64) -> f64 {
    if n_classes < 2 {
        return 0.0;
    }
    let rest = (n_classes - 1) as f64;
    let top = 1.0 / (1.0 + rest * (-2.0 / temperature).exp());
    let other = (1.0 - top) / rest;
    let mut p = vec![other; n_classes];
    p[0] = top;
    entropy(&p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub per_model: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub entropy: f64,
    /// `entropy <= threshold`; only gated predictions name a category.
    pub gated: bool,
    pub predicted: Option<usize>,
    pub code: Option<String>,
}

/// Averages per-model distributions and applies the entropy gate.
pub fn combine_distributions(per_model: Vec<Vec<f64>>, s_thresh: f64, codes: &[String]) -> Result<EnsemblePrediction> {
    if per_model.is_empty() {
        return Err(Error::Argument("an ensemble needs at least one model".into()));
    }
    if per_model.iter().any(|d| d.len() != codes.len()) {
        return Err(Error::Argument("distribution length differs from the taxonomy".into()));
    }
    let mean = mean_distribution(&per_model);
    let s = entropy(&mean);
    let gated = s <= s_thresh;
    let predicted = gated.then(|| argmax(&mean));
    Ok(EnsemblePrediction {
        code: predicted.map(|i| codes[i].clone()),
        per_model,
        mean,
        entropy: s,
        gated,
        predicted,
    })
}

/// The shared taxonomy of an ensemble.
pub fn ensemble_taxonomy(models: &[ModelCheckpoint]) -> Result<&Taxonomy> {
    let Some(first) = models.first() else {
        return Err(Error::Argument("an ensemble needs at least one model".into()));
    };
    if let Some(other) = models.iter().find(|m| m.taxonomy != first.taxonomy) {
        return Err(Error::Taxonomy(format!(
            "ensemble mixes taxonomies {} (fold {}) and {} (fold {})",
            first.taxonomy.task_kind, first.fold_id, other.taxonomy.task_kind, other.fold_id
        )));
    }
    Ok(&first.taxonomy)
}

pub fn ensemble_predict(
    models: &[ModelCheckpoint],
    source: &dyn FeatureSource,
    span: &SegmentSpan,
    s_thresh: f64,
    use_tta: bool,
) -> Result<EnsemblePrediction> {
    let taxonomy = ensemble_taxonomy(models)?;
    let per_model = models
        .iter()
        .map(|m| predict_segment(m, source, span, use_tta))
        .collect::<Result<Vec<_>>>()?;
    combine_distributions(per_model, s_thresh, &taxonomy.categories)
}
