//! Dual-modality (RGB + optical flow) video segment classification.
//!
//! Frame features from a frozen backbone are summarized per modality by a
//! shared temporal transformer encoder, summed, projected, and scored against
//! learnable category prototypes with cosine similarity. Training minimizes
//! InfoNCE against the prototypes with plain SGD. Inference supports
//! test-time augmentation over temporally offset samplings, entropy-gated
//! ensembles over unlabeled timelines and CLS-attention explanations.
//!
//! Module map:
//!
//! - [`datamodel`]: taxonomies, annotation manifests, rater aggregation,
//!   Monte Carlo splits, synthetic datasets
//! - [`sampling`]: RGB/flow timestamp sampling and TTA variants
//! - [`features`]: feature store, mock extractor, block-matching flow, flow rendering
//! - [`encoder`]: temporal transformer, aggregation and projection head
//! - [`prototypes`]: cosine scoring, softmax classification, InfoNCE
//! - [`model`]: the full trainable model with analytic gradients
//! - [`training`]: SGD fold training and cross-validation
//! - [`inference`]: TTA prediction, ensembles, timelines, explanations
//! - [`metrics`]: one-vs-rest ROC AUC, PPV, audit precision, fold summaries
//! - [`cli`]: the `roboformer` command line

pub mod cli;
pub mod datamodel;
pub mod encoder;
pub mod error;
pub mod features;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod prototypes;
pub mod sampling;
pub mod training;

pub use error::{Error, Result};
