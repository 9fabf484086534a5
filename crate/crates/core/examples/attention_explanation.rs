//! Which frame of a segment the CLS token attends to, on data where one
//! half-second window carries the class.

use roboformer::datamodel::{generate_synthetic_with_truth, make_splits_with_counts, SeparabilityMode, SyntheticSpec};
use roboformer::encoder::EncoderConfig;
use roboformer::inference::{explain, write_attention_svg, SegmentSpan};
use roboformer::sampling::SamplingConfig;
use roboformer::training::{train_fold, TrainConfig};

fn main() -> roboformer::Result<()> {
    let spec = SyntheticSpec {
        n_videos: 20,
        feature_dim: 32,
        mode: SeparabilityMode::Planted,
        noise: 0.25,
        ..SyntheticSpec::default()
    };
    let (manifest, store, truth) = generate_synthetic_with_truth(&spec, 5)?;
    let split = &make_splits_with_counts(&manifest.video_ids(), 1, 16, 2, 2)?[0];
    let mut encoder = EncoderConfig::small(32, 4, 16, 16);
    // a single layer keeps the final attention close to the input frames
    encoder.n_layers = 1;
    let config = TrainConfig {
        encoder,
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        epochs: 20,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let ck = train_fold(&manifest, &store, split, spec.task_kind()?, &config)?;

    for seg in truth
        .iter()
        .filter(|s| split.test_video_ids.contains(&s.video_id))
        .take(4)
    {
        let span = SegmentSpan {
            video_id: seg.video_id.clone(),
            start_s: seg.start_s,
            end_s: seg.end_s,
            source_fps: spec.source_fps,
        };
        let e = explain(&ck, &store, &span)?;
        println!(
            "{} [{:.2}, {:.2}]: predicted {}, peak {:.2} s, planted {:.2} s",
            seg.video_id,
            seg.start_s,
            seg.end_s,
            e.predicted,
            e.peak_s(),
            seg.planted_s.unwrap_or(f64::NAN)
        );
        let out = std::env::temp_dir().join("attention.svg");
        write_attention_svg(&out, &e)?;
    }
    Ok(())
}
