//! Trains one fold on synthetic data and prints the training curve.

use roboformer::datamodel::{generate_synthetic_dataset, make_splits_with_counts, SyntheticSpec};
use roboformer::encoder::EncoderConfig;
use roboformer::sampling::SamplingConfig;
use roboformer::training::{train_fold, TrainConfig};

fn main() -> roboformer::Result<()> {
    let spec = SyntheticSpec {
        n_videos: 20,
        feature_dim: 32,
        ..SyntheticSpec::default()
    };
    let (manifest, store) = generate_synthetic_dataset(&spec, 1)?;
    let split = &make_splits_with_counts(&manifest.video_ids(), 1, 14, 3, 3)?[0];

    let config = TrainConfig {
        encoder: EncoderConfig::small(32, 4, 16, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        epochs: 8,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let ck = train_fold(&manifest, &store, split, spec.task_kind()?, &config)?;
    println!("initial loss {:.4}", ck.initial_train_loss);
    for r in &ck.history {
        let auc = r.val_macro_auc.map_or("-".into(), |a| format!("{a:.3}"));
        println!("epoch {:>2}: train loss {:.4}, val AUC {auc}", r.epoch, r.train_loss);
    }
    println!("kept epoch {}", ck.best_epoch);
    Ok(())
}
