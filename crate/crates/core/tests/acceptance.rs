//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when a criterion fails that is not listed in `KNOWN_RED`.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use roboformer::datamodel::{
    generate_synthetic_dataset, generate_synthetic_with_truth, make_monte_carlo_splits, make_splits_with_counts,
    DatasetManifest, FoldSplit, SeparabilityMode, SyntheticSpec, TaskKind,
};
use roboformer::encoder::{
    aggregate, encode_modality, extract_temporal_attention, AggregateMode, EncodeMode, EncoderConfig, ParamTensors,
    TemporalEncoderParams,
};
use roboformer::features::{EmbeddingSequence, FeatureStore, Modality};
use roboformer::inference::{
    entropy, explain, merge_predictions, predict_segment, segment_timeline, variant_distributions, Event, SegmentSpan,
};
use roboformer::metrics::binary_auc;
use roboformer::model::{Ablation, Model, ModelInput};
use roboformer::prototypes::{classify, infonce_loss, PrototypeBank};
use roboformer::sampling::SamplingConfig;
use roboformer::training::{run_folds, train_fold, ModelCheckpoint, TrainConfig};

/// Criteria that are known not to hold; see the README for the analysis.
const KNOWN_RED: &[usize] = &[9];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_array2(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| gaussian(rng))
}

fn random_array1(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| gaussian(rng))
}

fn random_sequence(rng: &mut ChaCha8Rng, modality: Modality, t: usize, d: usize) -> EmbeddingSequence {
    let ts = (0..t).map(|k| k as f64 * 0.5).collect();
    EmbeddingSequence::new(modality, random_array2(rng, t, d), ts).unwrap()
}

fn codes(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("g{i}")).collect()
}

fn desk_config(learning_rate: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate,
        epochs,
        encoder: EncoderConfig::small(32, 4, 16, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn mean_macro_auc(
    manifest: &DatasetManifest,
    store: &FeatureStore,
    task: TaskKind,
    splits: &[FoldSplit],
    config: &TrainConfig,
) -> (f64, Vec<f64>) {
    let cv = run_folds(manifest, store, task, splits, config, 1).unwrap();
    let per_fold: Vec<f64> = cv.folds.iter().map(|f| f.report.macro_auc.unwrap()).collect();
    (cv.summary.macro_auc.unwrap().mean, per_fold)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

// 1: aggregation, loss and entropy against scalar oracles.
fn equation_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut agg_ok = true;
    for _ in 0..100 {
        let d = rng.random_range(1..=16);
        let (a, b) = (random_array1(&mut rng, d), random_array1(&mut rng, d));
        let sum = aggregate(&a, &b, AggregateMode::Both).unwrap();
        agg_ok &= sum.iter().zip(a.iter().zip(&b)).all(|(s, (x, y))| *s == x + y);
    }

    let mut worst_loss = 0.0f64;
    for _ in 0..100 {
        let b = rng.random_range(1..=4);
        let c = rng.random_range(2..=6);
        let e = rng.random_range(2..=8);
        let protos = random_array2(&mut rng, c, e);
        let bank = PrototypeBank::new(codes(c), protos.clone(), 1.0).unwrap();
        let batch: Vec<(Array1<f64>, usize)> = (0..b)
            .map(|_| (random_array1(&mut rng, e), rng.random_range(0..c)))
            .collect();
        let mut oracle = 0.0;
        for (h, label) in &batch {
            let cos: Vec<f64> = (0..c)
                .map(|j| {
                    let p = protos.row(j);
                    let (mut dot, mut nh, mut np) = (0.0, 0.0, 0.0);
                    for k in 0..e {
                        dot += h[k] * p[k];
                        nh += h[k] * h[k];
                        np += p[k] * p[k];
                    }
                    dot / (nh.sqrt() * np.sqrt())
                })
                .collect();
            let denom: f64 = cos.iter().map(|s| s.exp()).sum();
            oracle -= (cos[*label].exp() / denom).ln();
        }
        let got = infonce_loss(&batch, &bank).unwrap();
        worst_loss = worst_loss.max((got - oracle).abs() / oracle.abs());
    }

    let mut worst_entropy = 0.0f64;
    let mut bounded = true;
    for _ in 0..1000 {
        let c = rng.random_range(2..=8);
        let mut raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
        if rng.random_bool(0.3) {
            raw[rng.random_range(0..c)] = 0.0;
        }
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mut oracle = 0.0;
        for &x in &p {
            if x > 0.0 {
                oracle -= x * x.ln();
            }
        }
        let s = entropy(&p);
        worst_entropy = worst_entropy.max((s - oracle).abs());
        bounded &= s >= 0.0 && s <= (c as f64).ln() + 1e-12;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        agg_ok && worst_loss < 1e-10 && worst_entropy < 1e-12 && bounded && secs < 10.0,
        format!(
            "aggregation exact={agg_ok}, loss max rel err {worst_loss:.1e}, entropy max abs err {worst_entropy:.1e}, bounded={bounded}, {secs:.1} s"
        ),
    )
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let d = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / na.max(nn).max(1e-5)
}

// 2: analytic gradients against central differences.
fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let step = 1e-5;
    let mut worst = (0.0f64, String::new());
    for _ in 0..20 {
        let (d, heads) = *[(8, 2), (12, 3), (16, 4)].choose(&mut rng).unwrap();
        let e = rng.random_range(2..=8);
        let t_max = 6;
        let c = *[2usize, 3, 4, 6].choose(&mut rng).unwrap();
        let config = EncoderConfig::small(d, heads, e, t_max);
        let taxonomy = TaskKind::with_category_count(c).unwrap().taxonomy();
        let mut model = Model::init(&config, &taxonomy, Ablation::Full, 1.0, &mut rng).unwrap();
        // move away from the symmetric initial point (unit gains, zero biases)
        for (_, t) in model.tensors_mut() {
            for v in t.iter_mut() {
                *v += 0.1 * gaussian(&mut rng);
            }
        }
        let b = rng.random_range(1..=4);
        let inputs: Vec<(ModelInput, usize)> = (0..b)
            .map(|_| {
                let t = rng.random_range(1..=t_max);
                let input = ModelInput {
                    rgb: random_sequence(&mut rng, Modality::Rgb, t, d),
                    flow: random_sequence(&mut rng, Modality::Flow, t, d),
                };
                (input, rng.random_range(0..c))
            })
            .collect();
        let batch: Vec<(&ModelInput, usize)> = inputs.iter().map(|(x, c)| (x, *c)).collect();
        let (_, grads) = model.batch_gradients(&batch).unwrap();
        let analytic_all: Vec<(String, Vec<f64>)> = grads.tensors().into_iter().map(|(n, t)| (n, t.to_vec())).collect();
        for (k, (name, analytic)) in analytic_all.iter().enumerate() {
            let mut coords: Vec<usize> = (0..analytic.len()).collect();
            coords.shuffle(&mut rng);
            coords.truncate(8);
            let mut a = Vec::new();
            let mut n = Vec::new();
            for &i in &coords {
                let orig = model.tensors()[k].1[i];
                model.tensors_mut()[k].1[i] = orig + step;
                let plus = model.loss(&batch).unwrap();
                model.tensors_mut()[k].1[i] = orig - step;
                let minus = model.loss(&batch).unwrap();
                model.tensors_mut()[k].1[i] = orig;
                a.push(analytic[i]);
                n.push((plus - minus) / (2.0 * step));
            }
            let err = relative_error(&a, &n);
            if err > worst.0 {
                worst = (err, name.clone());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst.0 < 1e-4 && secs < 60.0,
        format!("20 instances, max rel err {:.1e} ({}), {secs:.1} s", worst.0, worst.1),
    )
}

// 3: the retraction example.
fn merge_example() -> Outcome {
    let ev = |s: f64, e: f64| Event {
        label: "r".into(),
        start_s: s,
        end_s: e,
    };
    let out = merge_predictions(&[ev(10.0, 11.0), ev(11.0, 12.0), ev(15.0, 16.0)]).unwrap();
    let text: Vec<String> = out.iter().map(|e| format!("{}-{} s", e.start_s, e.end_s)).collect();
    outcome(
        out == vec![ev(10.0, 12.0), ev(15.0, 16.0)],
        format!("events [{}]", text.join(", ")),
    )
}

// 4: content-mode learning with 60/8/8 splits and a 10-fold summary.
fn synthetic_learning() -> Outcome {
    let start = Instant::now();
    let spec = SyntheticSpec {
        n_classes: 4,
        n_videos: 76,
        ..SyntheticSpec::default()
    };
    let (m, store) = generate_synthetic_dataset(&spec, 4).unwrap();
    let task = spec.task_kind().unwrap();
    let splits = make_splits_with_counts(&m.video_ids(), 10, 8, 8, 4).unwrap();
    let sizes = (
        splits[0].train_video_ids.len(),
        splits[0].val_video_ids.len(),
        splits[0].test_video_ids.len(),
    );
    let config = desk_config(0.01, 10);
    let first = Instant::now();
    let (_, per_fold_first) = mean_macro_auc(&m, &store, task, &splits[..1], &config);
    let first_secs = first.elapsed().as_secs_f64();
    let cv = run_folds(&m, &store, task, &splits, &config, 1).unwrap();
    let summary = cv.summary.macro_auc.unwrap();
    let per_fold: Vec<f64> = cv.folds.iter().map(|f| f.report.macro_auc.unwrap()).collect();
    let min = per_fold.iter().cloned().fold(f64::INFINITY, f64::min);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        sizes == (60, 8, 8) && per_fold_first[0] >= 0.95 && first_secs < 600.0 && min >= 0.95,
        format!(
            "C=4 {}/{}/{} videos: fold 0 AUC {:.3} in {first_secs:.1} s; 10 folds {:.3} ± {:.3} (min {min:.3}), {secs:.1} s",
            sizes.0, sizes.1, sizes.2, per_fold_first[0], summary.mean, summary.std
        ),
    )
}

// 5: ablation ordering on order-only and split-modality data.
fn ablation_analogue() -> Outcome {
    let start = Instant::now();
    let order_spec = SyntheticSpec {
        n_classes: 2,
        n_videos: 76,
        segments_per_video: 8,
        mode: SeparabilityMode::Order,
        noise: 0.25,
        ..SyntheticSpec::default()
    };
    let (m, store) = generate_synthetic_dataset(&order_spec, 5).unwrap();
    let splits = make_splits_with_counts(&m.video_ids(), 5, 8, 8, 5).unwrap();
    let task = order_spec.task_kind().unwrap();
    let order_config = desk_config(0.02, 40);
    let (full, full_folds) = mean_macro_auc(&m, &store, task, &splits, &order_config);
    let no_sa_config = TrainConfig {
        ablation: Ablation::NoSa,
        ..order_config
    };
    let (no_sa, no_sa_folds) = mean_macro_auc(&m, &store, task, &splits, &no_sa_config);

    let dual_spec = SyntheticSpec {
        n_classes: 4,
        n_videos: 76,
        mode: SeparabilityMode::Dual,
        ..SyntheticSpec::default()
    };
    let (m, store) = generate_synthetic_dataset(&dual_spec, 5).unwrap();
    let splits = make_splits_with_counts(&m.video_ids(), 5, 8, 8, 5).unwrap();
    let task = dual_spec.task_kind().unwrap();
    let dual = |ablation| {
        let config = TrainConfig {
            ablation,
            ..desk_config(0.01, 10)
        };
        mean_macro_auc(&m, &store, task, &splits, &config).0
    };
    let (dual_full, no_rgb, no_flow) = (dual(Ablation::Full), dual(Ablation::NoRgb), dual(Ablation::NoFlow));
    let secs = start.elapsed().as_secs_f64();
    let pass =
        full >= 0.90 && (0.40..=0.60).contains(&no_sa) && dual_full - no_rgb >= 0.02 && dual_full - no_flow >= 0.02;
    outcome(
        pass,
        format!(
            "order: full {full:.3} [{}], no_sa {no_sa:.3} [{}]; dual: full {dual_full:.3}, no_rgb {no_rgb:.3}, no_flow {no_flow:.3}; {secs:.1} s",
            fmt_list(&full_folds),
            fmt_list(&no_sa_folds)
        ),
    )
}

// 6: AUC against brute-force pair counting.
fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut undefined = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=200);
        let levels = rng.random_range(1..=10);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let (mut wins, mut ties, mut p, mut q) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..n {
            if positive[i] {
                p += 1;
            } else {
                q += 1;
            }
            for j in 0..n {
                if positive[i] && !positive[j] {
                    if scores[i] > scores[j] {
                        wins += 1;
                    } else if scores[i] == scores[j] {
                        ties += 1;
                    }
                }
            }
        }
        let brute = (p > 0 && q > 0).then(|| (wins as f64 + 0.5 * ties as f64) / (p * q) as f64);
        undefined += usize::from(brute.is_none());
        if binary_auc(&scores, &positive).unwrap() != brute {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("200 instances with ties ({undefined} single-class), {mismatches} mismatches"),
    )
}

// 7: disjoint, reproducible Monte Carlo folds.
fn split_integrity() -> Outcome {
    let spec = SyntheticSpec {
        n_videos: 78,
        segments_per_video: 2,
        feature_dim: 4,
        ..SyntheticSpec::default()
    };
    let (m, _) = generate_synthetic_dataset(&spec, 7).unwrap();
    let splits = make_monte_carlo_splits(&m, 10, 7).unwrap();
    let all: BTreeSet<String> = m.video_ids().into_iter().collect();
    let disjoint = splits.iter().all(|f| {
        f.train_video_ids.is_disjoint(&f.val_video_ids)
            && f.train_video_ids.is_disjoint(&f.test_video_ids)
            && f.val_video_ids.is_disjoint(&f.test_video_ids)
            && f.train_video_ids.len() + f.val_video_ids.len() + f.test_video_ids.len() == all.len()
    });
    let (m2, _) = generate_synthetic_dataset(&spec, 7).unwrap();
    let again = make_monte_carlo_splits(&m2, 10, 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = serde_json::to_vec(&splits).unwrap() == serde_json::to_vec(&again).unwrap();
    for (a, b) in splits.iter().zip(&again) {
        let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        identical &= std::fs::read(pa).unwrap() == std::fs::read(pb).unwrap();
    }
    let f = &splits[0];
    outcome(
        splits.len() == 10 && disjoint && identical,
        format!(
            "10 folds of 78 videos ({}/{}/{}), disjoint={disjoint}, byte-identical={identical}",
            f.train_video_ids.len(),
            f.val_video_ids.len(),
            f.test_video_ids.len()
        ),
    )
}

fn untrained_checkpoint(task: TaskKind, config: TrainConfig, seed: u64) -> ModelCheckpoint {
    let taxonomy = task.taxonomy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = Model::init(
        &config.encoder,
        &taxonomy,
        config.ablation,
        config.temperature,
        &mut rng,
    )
    .unwrap();
    ModelCheckpoint {
        model,
        taxonomy,
        config,
        fold_id: 0,
        seed,
        best_epoch: 0,
        initial_train_loss: 0.0,
        history: Vec::new(),
    }
}

// 8: permutation, TTA, gating and scale invariances.
fn invariance_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = TemporalEncoderParams::init(&EncoderConfig::small(8, 2, 4, 16), &mut rng).unwrap();
    let mut perm_ok = true;
    for _ in 0..200 {
        let t = rng.random_range(1..=16);
        let seq = random_sequence(&mut rng, Modality::Rgb, t, 8);
        let mut idx: Vec<usize> = (0..t).collect();
        idx.shuffle(&mut rng);
        let permuted = EmbeddingSequence::new(
            Modality::Rgb,
            seq.vectors.select(ndarray::Axis(0), &idx),
            seq.timestamps.clone(),
        )
        .unwrap();
        perm_ok &= encode_modality(&seq, &params, EncodeMode::MeanPool).unwrap()
            == encode_modality(&permuted, &params, EncodeMode::MeanPool).unwrap();
    }

    let spec = SyntheticSpec {
        n_videos: 4,
        feature_dim: 16,
        ..SyntheticSpec::default()
    };
    let (m, store) = generate_synthetic_dataset(&spec, 8).unwrap();
    let config = TrainConfig {
        encoder: EncoderConfig::small(16, 2, 8, 16),
        sampling: SamplingConfig {
            max_frames: 16,
            ..SamplingConfig::default()
        },
        ..TrainConfig::default()
    };
    let ck = untrained_checkpoint(TaskKind::Skill, config.clone(), 8);
    let mut tta_err = 0.0f64;
    let mut multi = 0;
    for seg in m.segments(TaskKind::Skill).unwrap() {
        let span = SegmentSpan {
            video_id: seg.video_id.clone(),
            start_s: seg.start_s,
            end_s: seg.end_s,
            source_fps: m.media(&seg.video_id).unwrap().fps,
        };
        let variants = variant_distributions(&ck, &store, &span).unwrap();
        multi += usize::from(variants.len() > 1);
        let mut hand = vec![0.0; variants[0].len()];
        for v in &variants {
            for (h, x) in hand.iter_mut().zip(v) {
                *h += x;
            }
        }
        let got = predict_segment(&ck, &store, &span, true).unwrap();
        for (h, g) in hand.iter().zip(&got) {
            tta_err = tta_err.max((h / variants.len() as f64 - g).abs());
        }
    }

    let ensemble = vec![ck.clone(), untrained_checkpoint(TaskKind::Skill, config, 9)];
    let video = m.video_ids()[0].clone();
    let timeline = segment_timeline(&ensemble, &store, &video, m.media(&video).unwrap(), 2f64.ln(), true).unwrap();
    let mut counts = Vec::new();
    for k in (0..=50).rev() {
        let s = 2f64.ln() * k as f64 / 50.0;
        counts.push(timeline.with_threshold(s).unwrap().n_predicted());
    }
    let gate_ok = counts.windows(2).all(|w| w[1] <= w[0]);

    let mut scale_ok = true;
    for _ in 0..1000 {
        let (c, e) = (rng.random_range(2..=6), rng.random_range(2..=8));
        let bank = PrototypeBank::new(codes(c), random_array2(&mut rng, c, e), 1.0).unwrap();
        let h = random_array1(&mut rng, e);
        let base = classify(h.view(), &bank).unwrap().predicted;
        for alpha in [1e-3, 0.5, 7.0, 1e4] {
            scale_ok &= classify((&h * alpha).view(), &bank).unwrap().predicted == base;
        }
    }
    outcome(
        perm_ok && tta_err <= 1e-15 && multi > 0 && gate_ok && scale_ok,
        format!(
            "mean-pool permutation exact={perm_ok}; TTA max err {tta_err:.1e} ({multi} multi-variant segments); predictions {} -> {} as threshold falls, monotone={gate_ok}; argmax scale invariant={scale_ok}",
            counts[0],
            counts[counts.len() - 1]
        ),
    )
}

/// Seeds (out of 10) whose trained model puts its peak attention on the
/// planted frame for at least half of the held-out segments.
fn planted_hits(n_layers: usize) -> (usize, Vec<String>, bool) {
    let mut seeds_hit = 0;
    let mut rates = Vec::new();
    let mut contract = true;
    for seed in 0..10u64 {
        let spec = SyntheticSpec {
            n_videos: 40,
            mode: SeparabilityMode::Planted,
            noise: 0.25,
            ..SyntheticSpec::default()
        };
        let (m, store, truth) = generate_synthetic_with_truth(&spec, seed).unwrap();
        let split = make_splits_with_counts(&m.video_ids(), 1, 4, 4, seed)
            .unwrap()
            .remove(0);
        let mut config = desk_config(0.01, 20);
        config.seed = seed;
        config.encoder.n_layers = n_layers;
        let ck = train_fold(&m, &store, &split, spec.task_kind().unwrap(), &config).unwrap();
        let (mut hits, mut n) = (0, 0);
        for t in truth.iter().filter(|t| split.test_video_ids.contains(&t.video_id)) {
            let span = SegmentSpan {
                video_id: t.video_id.clone(),
                start_s: t.start_s,
                end_s: t.end_s,
                source_fps: spec.source_fps,
            };
            let e = explain(&ck, &store, &span).unwrap();
            contract &= e.weights.iter().all(|w| *w >= 0.0) && (e.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-6;
            n += 1;
            hits += usize::from((e.peak_s() - t.planted_s.unwrap()).abs() < 0.25);
        }
        seeds_hit += usize::from(2 * hits >= n);
        rates.push(format!("{hits}/{n}"));
    }
    (seeds_hit, rates, contract)
}

// 9: attention weights form a distribution and find the planted frame.
fn explanation_contract() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_sum = 0.0f64;
    let mut nonneg = true;
    for _ in 0..200 {
        let (d, heads) = *[(8, 2), (16, 4)].choose(&mut rng).unwrap();
        let params = TemporalEncoderParams::init(&EncoderConfig::small(d, heads, 4, 16), &mut rng).unwrap();
        let t = rng.random_range(1..=16);
        let w = extract_temporal_attention(
            &random_sequence(&mut rng, Modality::Rgb, t, d),
            &params,
            EncodeMode::SelfAttention,
        )
        .unwrap();
        nonneg &= w.iter().all(|x| *x >= 0.0);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let (seeds_hit, rates, trained_contract) = planted_hits(EncoderConfig::default().n_layers);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        nonneg && worst_sum <= 1e-6 && trained_contract && seeds_hit >= 8,
        format!(
            "weights nonneg={nonneg}, max |sum-1| {worst_sum:.1e}; planted frame is the peak in {seeds_hit}/10 seeds (held-out hits {}); {secs:.1} s",
            rates.join(" ")
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "equation fidelity", equation_fidelity),
        (2, "gradient suite", gradient_suite),
        (3, "merge worked example", merge_example),
        (4, "end-to-end synthetic learning", synthetic_learning),
        (5, "ablation ordering", ablation_analogue),
        (6, "AUC oracle equivalence", auc_oracle),
        (7, "split integrity", split_integrity),
        (8, "invariance suite", invariance_suite),
        (9, "explanation contract", explanation_contract),
    ];
    let filter: Option<BTreeSet<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !f.contains(&id)) {
            continue;
        }
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && KNOWN_RED.contains(&id) {
            " (known red)"
        } else {
            ""
        };
        println!("criterion {id} {name}: {status}{note} - {}", o.detail);
        if !o.pass && !KNOWN_RED.contains(&id) {
            unexpected.push(id);
        }
    }
    if filter.as_ref().is_none_or(|f| f.contains(&9)) {
        let (seeds_hit, rates, _) = planted_hits(1);
        println!(
            "info: with a single encoder layer the planted frame is the peak in {seeds_hit}/10 seeds (held-out hits {})",
            rates.join(" ")
        );
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
