//! Trains every ablation setting on the same folds of a dataset where RGB
//! and flow each carry half of the class.

use roboformer::datamodel::{generate_synthetic_dataset, make_monte_carlo_splits, SeparabilityMode, SyntheticSpec};
use roboformer::encoder::EncoderConfig;
use roboformer::model::Ablation;
use roboformer::sampling::SamplingConfig;
use roboformer::training::{run_folds, TrainConfig};

fn main() -> roboformer::Result<()> {
    let spec = SyntheticSpec {
        n_classes: 4,
        n_videos: 20,
        feature_dim: 32,
        mode: SeparabilityMode::Dual,
        ..SyntheticSpec::default()
    };
    let (manifest, store) = generate_synthetic_dataset(&spec, 3)?;
    let splits = make_monte_carlo_splits(&manifest, 2, 3)?;
    let base = TrainConfig {
        encoder: EncoderConfig::small(32, 4, 16, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        epochs: 6,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };

    let mut full = None;
    for ablation in Ablation::ALL {
        let config = TrainConfig {
            ablation,
            ..base.clone()
        };
        let cv = run_folds(&manifest, &store, spec.task_kind()?, &splits, &config, 1)?;
        let auc = cv.summary.macro_auc.map(|s| s.mean).unwrap_or(f64::NAN);
        let full_auc = *full.get_or_insert(auc);
        println!(
            "{:<8} macro AUC {auc:.3}  delta {:+.3}",
            ablation.as_str(),
            auc - full_auc
        );
    }
    Ok(())
}
