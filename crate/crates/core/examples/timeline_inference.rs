//! Annotates a whole unlabeled video with an entropy-gated ensemble, then
//! sweeps the gate.

use roboformer::datamodel::{generate_synthetic_dataset, make_monte_carlo_splits, SyntheticSpec};
use roboformer::encoder::EncoderConfig;
use roboformer::inference::{default_threshold, entropy_floor, segment_timeline};
use roboformer::sampling::SamplingConfig;
use roboformer::training::{run_folds, TrainConfig};

fn main() -> roboformer::Result<()> {
    let spec = SyntheticSpec {
        n_videos: 16,
        feature_dim: 32,
        gap_s: 0.0,
        ..SyntheticSpec::default()
    };
    let (manifest, store) = generate_synthetic_dataset(&spec, 4)?;
    let splits = make_monte_carlo_splits(&manifest, 3, 4)?;
    let config = TrainConfig {
        encoder: EncoderConfig::small(32, 4, 16, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        epochs: 10,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let cv = run_folds(&manifest, &store, spec.task_kind()?, &splits, &config, 1)?;
    let models: Vec<_> = cv.folds.into_iter().map(|f| f.checkpoint).collect();

    let video = splits[0].test_video_ids.iter().next().expect("a test video");
    let media = manifest.media(video)?;
    // cosine logits at temperature 1 cannot get below this entropy with two
    // classes, and half of ln 2 is already under it, so gate higher
    let floor = entropy_floor(2, config.temperature);
    println!("default gate {:.3}, entropy floor {floor:.3}", default_threshold(2));
    let timeline = segment_timeline(&models, &store, video, media, floor + 0.2, true)?;
    for i in timeline.intervals.iter().take(6) {
        println!(
            "[{:>4.1}, {:>4.1}) entropy {:.3} -> {}",
            i.start_s,
            i.end_s,
            i.prediction.entropy,
            i.prediction.code.as_deref().unwrap_or("abstain")
        );
    }
    for e in &timeline.events {
        println!("event {} [{:.0}, {:.0}) s", e.label, e.start_s, e.end_s);
    }
    for t in [0.69, 0.55, 0.5, 0.45, 0.4, 0.0] {
        let swept = timeline.with_threshold(t)?;
        println!(
            "threshold {t:.2}: {} of {} intervals predicted",
            swept.n_predicted(),
            swept.intervals.len()
        );
    }
    let out = std::env::temp_dir().join(format!("{video}.timeline.svg"));
    timeline.write_svg(&out)?;
    println!("plot written to {}", out.display());
    Ok(())
}
