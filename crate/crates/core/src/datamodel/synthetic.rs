use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{AnnotationRecord, DatasetManifest, MediaDescriptor};
use super::taxonomy::TaskKind;
use crate::features::{FeatureStore, Modality, StoredFeatures};
use crate::{Error, Result};

/// How class identity is encoded in the synthetic frame features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparabilityMode {
    /// Each class shifts the frame-feature mean, independently per modality.
    Content,
    /// Every segment is a run of shared "token" vectors whose share of the
    /// segment is exchangeable across classes; classes differ only in the
    /// order the tokens appear. A common pad token opens and closes every
    /// segment so edge effects of frame sampling carry no class signal.
    Order,
    /// Content signal split across modalities: RGB encodes `c % 2`, flow
    /// encodes `c / 2`. Neither modality alone identifies the class.
    Dual,
    /// Frames are pure noise except one half-second window per segment that
    /// carries a marker plus a class-dependent direction.
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_videos: usize,
    pub segments_per_video: usize,
    pub min_segment_s: f64,
    pub max_segment_s: f64,
    /// Unlabeled background between consecutive segments.
    pub gap_s: f64,
    pub feature_dim: usize,
    pub mode: SeparabilityMode,
    pub signal: f64,
    pub noise: f64,
    pub source_fps: f64,
    pub n_surgeons: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_classes: 2,
            n_videos: 20,
            segments_per_video: 4,
            min_segment_s: 3.0,
            max_segment_s: 5.0,
            gap_s: 1.0,
            feature_dim: 32,
            mode: SeparabilityMode::Content,
            signal: 1.0,
            noise: 0.5,
            source_fps: 30.0,
            n_surgeons: 5,
        }
    }
}

impl SyntheticSpec {
    pub fn task_kind(&self) -> Result<TaskKind> {
        TaskKind::with_category_count(self.n_classes).ok_or_else(|| {
            Error::Argument(format!(
                "no taxonomy has {} categories (use 2, 3, 4 or 6)",
                self.n_classes
            ))
        })
    }

    fn validate(&self) -> Result<()> {
        if self.feature_dim < 2 {
            return Err(Error::Argument("synthetic feature_dim must be at least 2".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Argument("synthetic data needs at least 2 classes".into()));
        }
        self.task_kind()?;
        if self.n_videos == 0 || self.segments_per_video == 0 {
            return Err(Error::Argument("need at least one video and one segment".into()));
        }
        if !(self.min_segment_s > 0.0 && self.max_segment_s >= self.min_segment_s) || self.gap_s < 0.0 {
            return Err(Error::Argument("invalid segment length range".into()));
        }
        if !(self.source_fps > 0.0 && self.source_fps.is_finite()) {
            return Err(Error::Argument("source_fps must be positive".into()));
        }
        if self.mode == SeparabilityMode::Order && self.n_classes > 6 {
            return Err(Error::Argument("order mode supports at most 6 classes".into()));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(dim, |_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    let v = gaussian_vec(rng, dim, 1.0);
    let n = v.dot(&v).sqrt();
    v / n
}

/// Lexicographic permutations of `0..k`.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for i in 0..k {
            if !prefix.contains(&i) {
                prefix.push(i);
                rec(prefix, k, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), k, &mut out);
    out
}

/// Class-dependent generators for one modality.
struct ModalitySignal {
    class_means: Vec<Array1<f64>>,
    tokens: Vec<Array1<f64>>,
    marker: Array1<f64>,
}

impl ModalitySignal {
    fn new(rng: &mut ChaCha8Rng, spec: &SyntheticSpec, n_groups: usize) -> Self {
        let d = spec.feature_dim;
        // class tokens plus the pad
        let n_tokens = if spec.n_classes == 2 { 3 } else { 4 };
        ModalitySignal {
            class_means: (0..n_groups).map(|_| unit_vec(rng, d) * spec.signal).collect(),
            tokens: (0..n_tokens).map(|_| unit_vec(rng, d) * spec.signal).collect(),
            marker: unit_vec(rng, d) * (2.0 * spec.signal),
        }
    }
}

/// Per-segment latent draws shared by every frame of the segment.
enum SegmentPlan {
    Mean(usize),
    Tokens { order: Vec<usize>, bounds: Vec<f64> },
    Planted { window: (f64, f64), group: usize },
}

fn plan_segment(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    modality: Modality,
    class: usize,
    start: f64,
    planted_slot: f64,
) -> SegmentPlan {
    match spec.mode {
        SeparabilityMode::Content => SegmentPlan::Mean(class),
        SeparabilityMode::Dual => SegmentPlan::Mean(match modality {
            Modality::Rgb => class % 2,
            Modality::Flow => class / 2,
        }),
        SeparabilityMode::Order => {
            let k = if spec.n_classes == 2 { 2 } else { 3 };
            let perms = permutations(k);
            let mut order = vec![k];
            order.extend(&perms[class % perms.len()]);
            order.push(k);
            // exchangeable shares bounded away from zero
            let raw: Vec<f64> = (0..order.len()).map(|_| 0.5 + rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mut acc = 0.0;
            let bounds = raw
                .iter()
                .map(|r| {
                    acc += r / total;
                    acc
                })
                .collect();
            SegmentPlan::Tokens { order, bounds }
        }
        SeparabilityMode::Planted => {
            let centre = start + planted_slot;
            SegmentPlan::Planted {
                window: (centre - 0.25, centre + 0.25),
                group: class,
            }
        }
    }
}

fn frame_signal(
    plan: &SegmentPlan,
    signal: &ModalitySignal,
    planted_dirs: &[Array1<f64>],
    t: f64,
    start: f64,
    end: f64,
) -> Option<Array1<f64>> {
    match plan {
        SegmentPlan::Mean(g) => Some(signal.class_means[*g].clone()),
        SegmentPlan::Tokens { order, bounds } => {
            let u = ((t - start) / (end - start)).clamp(0.0, 1.0);
            let slot = bounds.iter().position(|&b| u < b).unwrap_or(bounds.len() - 1);
            Some(signal.tokens[order[slot]].clone())
        }
        SegmentPlan::Planted { window, group } => {
            if t >= window.0 - 1e-9 && t < window.1 - 1e-9 {
                Some(&signal.marker + &planted_dirs[*group])
            } else {
                None
            }
        }
    }
}

/// Builds a labeled synthetic dataset plus per-frame features for both
/// modalities at every source frame of every video.
///
/// Videos are laid out as `gap, segment, gap, segment, ...`. Segment
/// classes are balanced round-robin over all segments and then shuffled.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<(DatasetManifest, FeatureStore)> {
    generate_synthetic_with_truth(spec, seed).map(|(m, s, _)| (m, s))
}

/// Generation-time facts about one synthetic segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTruth {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: usize,
    /// Time of the single discriminative frame in planted mode.
    pub planted_s: Option<f64>,
}

/// As [`generate_synthetic_dataset`], also returning per-segment truth.
pub fn generate_synthetic_with_truth(
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<(DatasetManifest, FeatureStore, Vec<SegmentTruth>)> {
    spec.validate()?;
    let task_kind = spec.task_kind()?;
    let taxonomy = task_kind.taxonomy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.feature_dim;

    let n_groups = match spec.mode {
        SeparabilityMode::Dual => spec.n_classes.div_ceil(2).max(2),
        _ => spec.n_classes,
    };
    let rgb_signal = ModalitySignal::new(&mut rng, spec, n_groups);
    let flow_signal = ModalitySignal::new(&mut rng, spec, n_groups);
    let planted_rgb: Vec<Array1<f64>> = (0..spec.n_classes)
        .map(|_| unit_vec(&mut rng, d) * spec.signal)
        .collect();
    let planted_flow: Vec<Array1<f64>> = (0..spec.n_classes)
        .map(|_| unit_vec(&mut rng, d) * spec.signal)
        .collect();

    let total_segments = spec.n_videos * spec.segments_per_video;
    let mut classes: Vec<usize> = (0..total_segments).map(|i| i % spec.n_classes).collect();
    rand::seq::SliceRandom::shuffle(classes.as_mut_slice(), &mut rng);

    let fps = spec.source_fps;
    let mut records = Vec::new();
    let mut media = BTreeMap::new();
    let mut store = FeatureStore::new(d);
    let mut truth = Vec::new();

    for v in 0..spec.n_videos {
        let video_id = format!("video{v:03}");
        let surgeon_id = format!("surgeon{:02}", v % spec.n_surgeons.max(1));
        // segment layout, aligned to whole source frames
        let mut cursor = spec.gap_s;
        let mut segments = Vec::new();
        for s in 0..spec.segments_per_video {
            let len = spec.min_segment_s + rng.random::<f64>() * (spec.max_segment_s - spec.min_segment_s);
            let start = (cursor * fps).round() / fps;
            let end = ((cursor + len) * fps).round() / fps;
            let class = classes[v * spec.segments_per_video + s];
            let n_slots = ((end - start) * 2.0).floor() as usize;
            let slot = if n_slots >= 2 {
                rng.random_range(1..n_slots) as f64 * 0.5
            } else {
                0.0
            };
            segments.push((start, end, class, slot));
            cursor = end + spec.gap_s;
        }
        let duration = ((cursor * fps).round() / fps).max(1.0);
        let n_frames = (duration * fps).floor() as usize + 1;
        let timestamps: Vec<f64> = (0..n_frames).map(|k| k as f64 / fps).collect();

        for (modality, signal, planted) in [
            (Modality::Rgb, &rgb_signal, &planted_rgb),
            (Modality::Flow, &flow_signal, &planted_flow),
        ] {
            let plans: Vec<SegmentPlan> = segments
                .iter()
                .map(|&(start, _, class, slot)| plan_segment(&mut rng, spec, modality, class, start, slot))
                .collect();
            let mut rows = Array2::<f32>::zeros((n_frames, d));
            let mut seg_idx = 0;
            for (i, &t) in timestamps.iter().enumerate() {
                while seg_idx < segments.len() && t > segments[seg_idx].1 + 1e-9 {
                    seg_idx += 1;
                }
                let noise = gaussian_vec(&mut rng, d, spec.noise);
                let mut value = noise;
                if let Some(&(start, end, _, _)) = segments.get(seg_idx) {
                    if t >= start - 1e-9 {
                        if let Some(sig) = frame_signal(&plans[seg_idx], signal, planted, t, start, end) {
                            value += &sig;
                        }
                    }
                }
                rows.row_mut(i)
                    .iter_mut()
                    .zip(value.iter())
                    .for_each(|(o, &x)| *o = x as f32);
            }
            store.insert(&video_id, modality, StoredFeatures::new(timestamps.clone(), rows)?)?;
        }

        for &(start, end, class, slot) in &segments {
            truth.push(SegmentTruth {
                video_id: video_id.clone(),
                start_s: start,
                end_s: end,
                label: class,
                planted_s: (spec.mode == SeparabilityMode::Planted).then_some(start + slot),
            });
            records.push(AnnotationRecord {
                video_id: video_id.clone(),
                surgeon_id: surgeon_id.clone(),
                start_s: start,
                end_s: end,
                label: taxonomy.code(class).to_string(),
                rater_id: "rater0".into(),
                task_kind,
            });
        }
        media.insert(
            video_id.clone(),
            MediaDescriptor {
                fps,
                duration_s: duration,
                path: format!("synthetic://{video_id}"),
            },
        );
    }
    Ok((DatasetManifest::new(records, media)?, store, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSource;
    use crate::sampling::{sample_input, SamplingConfig};

    /// Mean-pooled RGB+flow features per segment with their labels.
    fn pooled(spec: &SyntheticSpec, seed: u64) -> (Vec<Array1<f64>>, Vec<usize>) {
        let (manifest, store) = generate_synthetic_dataset(spec, seed).unwrap();
        let config = SamplingConfig::default();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for seg in manifest.segments(spec.task_kind().unwrap()).unwrap() {
            let input = sample_input(seg.start_s, seg.end_s, spec.source_fps, &config, 0).unwrap();
            let rgb = store.rgb(&seg.video_id, &input.rgb).unwrap();
            let flow = store.flow(&seg.video_id, &input.flow).unwrap();
            let mut x = rgb.vectors.mean_axis(ndarray::Axis(0)).unwrap().to_vec();
            x.extend(flow.vectors.mean_axis(ndarray::Axis(0)).unwrap());
            xs.push(Array1::from(x));
            ys.push(seg.label);
        }
        (xs, ys)
    }

    /// Nearest-class-mean oracle: fit on even-indexed, score on odd-indexed segments.
    fn nearest_mean_accuracy(xs: &[Array1<f64>], ys: &[usize], c: usize) -> f64 {
        let dim = xs[0].len();
        let mut means = vec![Array1::<f64>::zeros(dim); c];
        let mut counts = vec![0usize; c];
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            if i % 2 == 0 {
                means[y] += x;
                counts[y] += 1;
            }
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            *m /= n.max(1) as f64;
        }
        let mut correct = 0;
        let mut total = 0;
        for (i, (x, &y)) in xs.iter().zip(ys).enumerate() {
            if i % 2 == 1 {
                let pred = (0..c)
                    .min_by(|&a, &b| {
                        let da = (x - &means[a]).mapv(|v| v * v).sum();
                        let db = (x - &means[b]).mapv(|v| v * v).sum();
                        da.total_cmp(&db)
                    })
                    .unwrap();
                correct += usize::from(pred == y);
                total += 1;
            }
        }
        correct as f64 / total as f64
    }

    #[test]
    fn content_mode_is_linearly_separable() {
        let spec = SyntheticSpec {
            n_videos: 20,
            ..Default::default()
        };
        let (xs, ys) = pooled(&spec, 1);
        assert_eq!(nearest_mean_accuracy(&xs, &ys, 2), 1.0);
    }

    #[test]
    fn order_mode_defeats_mean_pooling() {
        let spec = SyntheticSpec {
            n_videos: 50,
            mode: SeparabilityMode::Order,
            ..Default::default()
        };
        let (xs, ys) = pooled(&spec, 2);
        assert_eq!(xs.len(), 200);
        let acc = nearest_mean_accuracy(&xs, &ys, 2);
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticSpec {
            n_videos: 3,
            ..Default::default()
        };
        let (m1, s1) = generate_synthetic_dataset(&spec, 9).unwrap();
        let (m2, s2) = generate_synthetic_dataset(&spec, 9).unwrap();
        assert_eq!(m1, m2);
        for key in s1.keys() {
            let a = &s1.get(&key.0, key.1).unwrap().rows;
            let b = &s2.get(&key.0, key.1).unwrap().rows;
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        s1.save(dir1.path()).unwrap();
        s2.save(dir2.path()).unwrap();
        for key in s1.keys() {
            let name = format!("{}.{}.rffs", key.0, key.1);
            assert_eq!(
                std::fs::read(dir1.path().join(&name)).unwrap(),
                std::fs::read(dir2.path().join(&name)).unwrap()
            );
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            SyntheticSpec {
                feature_dim: 1,
                ..Default::default()
            },
            SyntheticSpec {
                n_classes: 1,
                ..Default::default()
            },
            SyntheticSpec {
                n_classes: 5,
                ..Default::default()
            },
        ] {
            assert!(matches!(generate_synthetic_dataset(&spec, 0), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn labels_follow_taxonomy() {
        let spec = SyntheticSpec {
            n_classes: 4,
            n_videos: 4,
            ..Default::default()
        };
        let (m, _) = generate_synthetic_dataset(&spec, 0).unwrap();
        assert!(m.records.iter().all(|r| r.task_kind == TaskKind::SuturingGesture));
        assert_eq!(m.records.len(), 16);
    }
}
