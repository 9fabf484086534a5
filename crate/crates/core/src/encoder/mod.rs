//! Temporal model: CLS token and positional embeddings, the shared
//! self-attention encoder (or its mean-pool ablation), modality aggregation
//! and the projection head.

pub mod nn;
mod params;
mod transformer;

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

pub use params::{EncoderConfig, LayerParams, ParamTensors, ProjectionHeadParams, TemporalEncoderParams};
pub use transformer::EncoderCache;

use crate::features::EmbeddingSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    SelfAttention,
    /// Arithmetic mean of frame features; no CLS token, no positions.
    MeanPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateMode {
    Both,
    RgbOnly,
    FlowOnly,
}

/// Intermediate representations of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRepresentation {
    pub h_rgb: Array1<f64>,
    pub h_flow: Array1<f64>,
    pub h_agg: Array1<f64>,
    pub h_video: Array1<f64>,
}

fn check_sequence(seq: &EmbeddingSequence, params: &TemporalEncoderParams) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Argument("cannot encode an empty sequence".into()));
    }
    if seq.dim() != params.config.dim {
        return Err(Error::Argument(format!(
            "frame features have dim {}, encoder expects {}",
            seq.dim(),
            params.config.dim
        )));
    }
    if seq.len() > params.config.max_frames {
        return Err(Error::Length {
            len: seq.len(),
            max: params.config.max_frames,
        });
    }
    Ok(())
}

/// Summarizes one modality's frame sequence into a `D`-vector.
pub fn encode_modality(
    seq: &EmbeddingSequence,
    params: &TemporalEncoderParams,
    mode: EncodeMode,
) -> Result<Array1<f64>> {
    encode_with_cache(seq, params, mode).map(|(h, _)| h)
}

pub(crate) fn encode_with_cache(
    seq: &EmbeddingSequence,
    params: &TemporalEncoderParams,
    mode: EncodeMode,
) -> Result<(Array1<f64>, Option<EncoderCache>)> {
    check_sequence(seq, params)?;
    Ok(match mode {
        EncodeMode::MeanPool => (mean_pool(seq.vectors.view()), None),
        EncodeMode::SelfAttention => {
            let (h, cache) = transformer::forward(params, seq.vectors.view());
            (h, Some(cache))
        }
    })
}

/// Column means summed in sorted order, so any permutation of the frames
/// gives a bit-identical result.
fn mean_pool(x: ndarray::ArrayView2<f64>) -> Array1<f64> {
    let t = x.nrows() as f64;
    Array1::from_iter(x.columns().into_iter().map(|col| {
        let mut v = col.to_vec();
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>() / t
    }))
}

/// Gradient of the encoder parameters given `dL/dh_cls`. Mean pooling has
/// no parameters, so `cache == None` contributes nothing.
pub(crate) fn encode_backward(
    params: &TemporalEncoderParams,
    cache: Option<&EncoderCache>,
    dh: &Array1<f64>,
    grads: &mut TemporalEncoderParams,
) {
    if let Some(cache) = cache {
        transformer::backward(params, cache, dh, grads);
    }
}

/// `h_agg = h_rgb + h_flow`, or one modality alone under an ablation.
pub fn aggregate(h_rgb: &Array1<f64>, h_flow: &Array1<f64>, mode: AggregateMode) -> Result<Array1<f64>> {
    match mode {
        AggregateMode::Both => {
            if h_rgb.len() != h_flow.len() {
                return Err(Error::Argument(format!(
                    "cannot sum representations of dim {} and {}",
                    h_rgb.len(),
                    h_flow.len()
                )));
            }
            Ok(h_rgb + h_flow)
        }
        AggregateMode::RgbOnly => Ok(h_rgb.clone()),
        AggregateMode::FlowOnly => Ok(h_flow.clone()),
    }
}

/// Projection head forward pass, returning the hidden pre-activation too.
pub(crate) fn project_with_hidden(
    h_agg: &Array1<f64>,
    head: &ProjectionHeadParams,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if h_agg.len() != head.input_dim() {
        return Err(Error::Argument(format!(
            "projection head expects dim {}, got {}",
            head.input_dim(),
            h_agg.len()
        )));
    }
    let hidden = h_agg.dot(&head.w1) + &head.b1;
    let out = hidden.mapv(|v| v.max(0.0)).dot(&head.w2) + &head.b2;
    Ok((out, hidden))
}

/// `h_video = ReLU(h_agg W1 + b1) W2 + b2`.
pub fn project(h_agg: &Array1<f64>, head: &ProjectionHeadParams) -> Result<Array1<f64>> {
    project_with_hidden(h_agg, head).map(|(out, _)| out)
}

/// Accumulates head gradients and returns `dL/dh_agg`.
pub(crate) fn project_backward(
    head: &ProjectionHeadParams,
    h_agg: &Array1<f64>,
    hidden: &Array1<f64>,
    dout: &Array1<f64>,
    grads: &mut ProjectionHeadParams,
) -> Array1<f64> {
    let relu = hidden.mapv(|v| v.max(0.0));
    grads.w2 += &outer(&relu, dout);
    grads.b2 += dout;
    let drelu = head.w2.dot(dout);
    let dhidden = &drelu * &hidden.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    grads.w1 += &outer(h_agg, &dhidden);
    grads.b1 += &dhidden;
    head.w1.dot(&dhidden)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> ndarray::Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

/// CLS-to-frame attention of the final layer, averaged over heads, with the
/// CLS self-attention mass removed and the rest renormalized to sum to 1.
pub fn extract_temporal_attention(
    seq: &EmbeddingSequence,
    params: &TemporalEncoderParams,
    mode: EncodeMode,
) -> Result<Vec<f64>> {
    if mode == EncodeMode::MeanPool {
        return Err(Error::UnsupportedMode(
            "temporal attention requires the self-attention encoder".into(),
        ));
    }
    let (_, cache) = encode_with_cache(seq, params, mode)?;
    let cache = cache.expect("self-attention cache");
    Ok(attention_from_cache(&cache))
}

pub(crate) fn attention_from_cache(cache: &EncoderCache) -> Vec<f64> {
    let t = cache.n_frames();
    let heads = cache.n_heads();
    let mut w = vec![0.0; t];
    for h in 0..heads {
        let p = cache.final_attention(h);
        for (j, wj) in w.iter_mut().enumerate() {
            *wj += p[[0, j + 1]] / heads as f64;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}
