//! Monte Carlo cross-validation with per-fold reports and a ROC plot.
//!
//! Pass an output directory to keep the run; otherwise a temp dir is used.

use std::path::PathBuf;

use roboformer::datamodel::{generate_synthetic_dataset, SyntheticSpec};
use roboformer::encoder::EncoderConfig;
use roboformer::metrics::{roc_curve, vertical_average, write_roc_svg};
use roboformer::sampling::SamplingConfig;
use roboformer::training::{run_cross_validation, TrainConfig};

fn main() -> roboformer::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("roboformer-cv-example"));
    let spec = SyntheticSpec {
        n_classes: 3,
        n_videos: 20,
        feature_dim: 32,
        ..SyntheticSpec::default()
    };
    let (manifest, store) = generate_synthetic_dataset(&spec, 2)?;
    let config = TrainConfig {
        encoder: EncoderConfig::small(32, 4, 16, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        epochs: 5,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let cv = run_cross_validation(&manifest, &store, spec.task_kind()?, 3, &config, 1)?;
    for f in &cv.folds {
        println!(
            "fold {}: {} test videos, macro AUC {:?}",
            f.split.fold_id,
            f.split.test_video_ids.len(),
            f.report.macro_auc
        );
    }
    if let Some(s) = &cv.summary.macro_auc {
        println!("macro AUC {:.3} ± {:.3} over {} folds", s.mean, s.std, s.n);
    }

    cv.save(&out)?;
    // one averaged curve for the first class
    let curves: Vec<_> = cv
        .folds
        .iter()
        .filter_map(|f| {
            let scores: Vec<f64> = f.predictions.iter().map(|p| p.probs[0]).collect();
            let pos: Vec<bool> = f.predictions.iter().map(|p| p.label == 0).collect();
            roc_curve(&scores, &pos).ok().flatten()
        })
        .collect();
    let code = cv.folds[0].checkpoint.taxonomy.categories[0].clone();
    write_roc_svg(
        &out.join("roc.svg"),
        "class 0",
        &[(code, vertical_average(&curves, 101)?)],
    )?;
    println!("run written to {}", out.display());
    Ok(())
}
