//! Generates a small synthetic dataset, saves it and reads it back.
//!
//! ```text
//! cargo run --example synthetic_dataset
//! ```

use roboformer::datamodel::{generate_synthetic_with_truth, load_manifest, SeparabilityMode, SyntheticSpec};
use roboformer::features::FeatureStore;

fn main() -> roboformer::Result<()> {
    let spec = SyntheticSpec {
        n_classes: 4,
        n_videos: 12,
        feature_dim: 16,
        mode: SeparabilityMode::Dual,
        ..SyntheticSpec::default()
    };
    let (manifest, store, truth) = generate_synthetic_with_truth(&spec, 7)?;
    let task = spec.task_kind()?;
    println!("task {task}, classes {:?}", task.taxonomy().categories);
    println!(
        "{} videos, {} labeled segments",
        manifest.video_ids().len(),
        truth.len()
    );
    for s in truth.iter().take(4) {
        println!(
            "  {} [{:.2}, {:.2}] -> class {}",
            s.video_id, s.start_s, s.end_s, s.label
        );
    }

    let dir = tempfile_dir();
    manifest.save(&dir.join("manifest.csv"), &dir.join("media.json"))?;
    store.save(&dir.join("features"))?;
    let back = load_manifest(&dir.join("manifest.csv"))?;
    let features = FeatureStore::load(&dir.join("features"))?;
    assert_eq!(back, manifest);
    println!(
        "round trip ok: {} feature streams of dim {}",
        features.keys().count(),
        features.dim()
    );
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("roboformer-synthetic-example");
    std::fs::create_dir_all(&dir).expect("create temp dir");
    dir
}
