//! Frozen per-frame feature extraction.
//!
//! Everything downstream consumes [`EmbeddingSequence`]s through the
//! [`FeatureSource`] trait. Two sources ship with the crate: a precomputed
//! [`FeatureStore`] (the default for real data, filled by external
//! preprocessing) and [`FrameFeatureSource`], which decodes frames through a
//! pluggable [`FrameReader`] and embeds them with a [`FrameExtractor`] such as
//! the seeded [`MockExtractor`]. Flow frames are rendered to colour-wheel
//! images and go through the same extractor as RGB frames.

mod flow;
mod frame;
mod store;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use flow::{compute_flow, compute_flow_with, render_flow, BlockMatchConfig, FlowField};
pub use frame::{
    extract_features, ExternalExtractor, Frame, FrameExtractor, FrameFeatureSource, FrameReader, FrameSequence,
    MockExtractor,
};
pub use store::{FeatureStore, StoredFeatures, STORE_MAGIC, STORE_VERSION};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Flow,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Flow => "flow",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Modality::Rgb),
            "flow" => Ok(Modality::Flow),
            _ => Err(Error::Argument(format!("unknown modality {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Precomputed,
    Mock,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureExtractorConfig {
    pub input_size: usize,
    pub patch_size: usize,
    pub feature_dim: usize,
    pub backend: Backend,
}

impl Default for FeatureExtractorConfig {
    fn default() -> Self {
        FeatureExtractorConfig {
            input_size: 224,
            patch_size: 16,
            feature_dim: 384,
            backend: Backend::Precomputed,
        }
    }
}

impl FeatureExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.input_size == 0 || !self.input_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "input size {} must be a positive multiple of patch size {}",
                self.input_size, self.patch_size
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// `T x D` frame features with their timestamps. For flow, each timestamp
/// is the start of the frame pair the row was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub modality: Modality,
    pub vectors: Array2<f64>,
    pub timestamps: Vec<f64>,
}

impl EmbeddingSequence {
    pub fn new(modality: Modality, vectors: Array2<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if vectors.nrows() != timestamps.len() {
            return Err(Error::Argument(format!(
                "{} rows but {} timestamps",
                vectors.nrows(),
                timestamps.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("embedding contains non-finite values".into()));
        }
        Ok(EmbeddingSequence {
            modality,
            vectors,
            timestamps,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Anything that can produce frame features for sampled timestamps.
pub trait FeatureSource: Sync {
    fn feature_dim(&self) -> usize;

    fn rgb(&self, video_id: &str, timestamps: &[f64]) -> Result<EmbeddingSequence>;

    /// Flow features for `(t, t + span)` frame pairs.
    fn flow(&self, video_id: &str, pairs: &[(f64, f64)]) -> Result<EmbeddingSequence>;
}
