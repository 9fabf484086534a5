//! Label taxonomies, annotation manifests, rater aggregation, video-level
//! Monte Carlo splits and the synthetic dataset generator.

mod labels;
mod manifest;
mod splits;
mod synthetic;
mod taxonomy;

pub use labels::{aggregate_skill_labels, inter_rater_reliability, passes_reliability_gate, RELIABILITY_GATE};
pub use manifest::{
    load_manifest, load_manifest_with_media, media_index_path, parse_records, AnnotationRecord, DatasetManifest,
    MediaDescriptor, Segment, MANIFEST_HEADER, MEDIA_INDEX_FILE,
};
pub use splits::{make_monte_carlo_splits, make_splits_with_counts, split_counts, FoldSplit};
pub use synthetic::{
    generate_synthetic_dataset, generate_synthetic_with_truth, SegmentTruth, SeparabilityMode, SyntheticSpec,
};
pub use taxonomy::{TaskKind, Taxonomy};
