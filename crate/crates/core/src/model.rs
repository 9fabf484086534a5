//! The full trainable model: shared temporal encoder, projection head and
//! prototype bank, with forward passes under every ablation setting and
//! analytic gradients of the InfoNCE loss.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Taxonomy;
use crate::encoder::{
    aggregate, encode_backward, encode_with_cache, project_backward, project_with_hidden, AggregateMode, EncodeMode,
    EncoderCache, EncoderConfig, ParamTensors, ProjectionHeadParams, TemporalEncoderParams, VideoRepresentation,
};
use crate::features::{EmbeddingSequence, FeatureSource};
use crate::prototypes::{classify, infonce_item_backward, infonce_loss, ClassificationResult, PrototypeBank};
use crate::sampling::SampledInput;
use crate::{Error, Result};

/// Training and inference settings compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// Training as `Full`; inference uses the offset-0 input only.
    NoTta,
    NoRgb,
    NoFlow,
    /// Frame features are mean-pooled instead of self-attended.
    NoSa,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Full,
        Ablation::NoTta,
        Ablation::NoRgb,
        Ablation::NoFlow,
        Ablation::NoSa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoTta => "no_tta",
            Ablation::NoRgb => "no_rgb",
            Ablation::NoFlow => "no_flow",
            Ablation::NoSa => "no_sa",
        }
    }

    pub fn encode_mode(self) -> EncodeMode {
        match self {
            Ablation::NoSa => EncodeMode::MeanPool,
            _ => EncodeMode::SelfAttention,
        }
    }

    pub fn aggregate_mode(self) -> AggregateMode {
        match self {
            Ablation::NoRgb => AggregateMode::FlowOnly,
            Ablation::NoFlow => AggregateMode::RgbOnly,
            _ => AggregateMode::Both,
        }
    }

    pub fn uses_tta(self) -> bool {
        self != Ablation::NoTta
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown ablation {s:?}")))
    }
}

/// Frame features of both modalities for one sampled segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub rgb: EmbeddingSequence,
    pub flow: EmbeddingSequence,
}

impl ModelInput {
    pub fn load(source: &dyn FeatureSource, video_id: &str, sampled: &SampledInput) -> Result<Self> {
        Ok(ModelInput {
            rgb: source.rgb(video_id, &sampled.rgb)?,
            flow: source.flow(video_id, &sampled.flow)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: TemporalEncoderParams,
    pub head: ProjectionHeadParams,
    pub bank: PrototypeBank,
    pub ablation: Ablation,
}

struct Forward {
    rgb: Option<(Option<EncoderCache>, Array1<f64>)>,
    flow: Option<(Option<EncoderCache>, Array1<f64>)>,
    h_agg: Array1<f64>,
    hidden: Array1<f64>,
    h_video: Array1<f64>,
}

impl Model {
    pub fn init<R: Rng>(
        config: &EncoderConfig,
        taxonomy: &Taxonomy,
        ablation: Ablation,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let encoder = TemporalEncoderParams::init(config, rng)?;
        let head = ProjectionHeadParams::init(config, rng);
        let mut bank = PrototypeBank::init(taxonomy, config.proj_dim, rng)?;
        bank = PrototypeBank::new(bank.codes, bank.prototypes, temperature)?;
        Ok(Model {
            encoder,
            head,
            bank,
            ablation,
        })
    }

    /// A gradient buffer with the same shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        Model {
            encoder: self.encoder.zeros_like(),
            head: self.head.zeros_like(),
            bank: PrototypeBank {
                codes: self.bank.codes.clone(),
                prototypes: Array2::zeros(self.bank.prototypes.raw_dim()),
                temperature: self.bank.temperature,
            },
            ablation: self.ablation,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.encoder.config
    }

    fn forward(&self, input: &ModelInput, both_streams: bool) -> Result<Forward> {
        let mode = self.ablation.encode_mode();
        let agg = self.ablation.aggregate_mode();
        let need_rgb = both_streams || agg != AggregateMode::FlowOnly;
        let need_flow = both_streams || agg != AggregateMode::RgbOnly;
        let encode = |seq: &EmbeddingSequence| encode_with_cache(seq, &self.encoder, mode).map(|(h, c)| (c, h));
        let rgb = if need_rgb { Some(encode(&input.rgb)?) } else { None };
        let flow = if need_flow { Some(encode(&input.flow)?) } else { None };
        let h_agg = match (&rgb, &flow) {
            (Some((_, r)), Some((_, f))) => aggregate(r, f, agg)?,
            (Some((_, r)), None) => r.clone(),
            (None, Some((_, f))) => f.clone(),
            (None, None) => unreachable!("at least one stream is encoded"),
        };
        let (h_video, hidden) = project_with_hidden(&h_agg, &self.head)?;
        Ok(Forward {
            rgb,
            flow,
            h_agg,
            hidden,
            h_video,
        })
    }

    /// Every intermediate representation, encoding both streams regardless
    /// of the ablation.
    pub fn represent(&self, input: &ModelInput) -> Result<VideoRepresentation> {
        let fw = self.forward(input, true)?;
        Ok(VideoRepresentation {
            h_rgb: fw.rgb.expect("both streams").1,
            h_flow: fw.flow.expect("both streams").1,
            h_agg: fw.h_agg,
            h_video: fw.h_video,
        })
    }

    pub fn classify(&self, input: &ModelInput) -> Result<ClassificationResult> {
        let fw = self.forward(input, false)?;
        classify(fw.h_video.view(), &self.bank)
    }

    /// Summed InfoNCE loss of a batch.
    pub fn loss(&self, batch: &[(&ModelInput, usize)]) -> Result<f64> {
        let items = batch
            .iter()
            .map(|(input, c)| Ok((self.forward(input, false)?.h_video, *c)))
            .collect::<Result<Vec<_>>>()?;
        infonce_loss(&items, &self.bank)
    }

    /// Loss of one labeled input; its gradient is added into `grads`.
    pub fn accumulate_gradients(&self, input: &ModelInput, label: usize, grads: &mut Model) -> Result<f64> {
        let fw = self.forward(input, false)?;
        let (loss, dh_video) = infonce_item_backward(fw.h_video.view(), label, &self.bank, &mut grads.bank.prototypes)?;
        let dh_agg = project_backward(&self.head, &fw.h_agg, &fw.hidden, &dh_video, &mut grads.head);
        // h_agg is the identity of each used stream, so both receive dh_agg
        for (cache, _) in [&fw.rgb, &fw.flow].into_iter().flatten() {
            encode_backward(&self.encoder, cache.as_ref(), &dh_agg, &mut grads.encoder);
        }
        Ok(loss)
    }

    /// Summed loss and gradient of a batch.
    pub fn batch_gradients(&self, batch: &[(&ModelInput, usize)]) -> Result<(f64, Model)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let mut grads = self.zeros_like();
        let mut loss = 0.0;
        for (input, c) in batch {
            loss += self.accumulate_gradients(input, *c, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// `theta <- theta - lr * grad` for every trainable tensor.
    pub fn sgd_step(&mut self, grads: &Model, lr: f64) {
        for ((_, p), (_, g)) in self.tensors_mut().into_iter().zip(grads.tensors()) {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= lr * gi;
            }
        }
    }
}

impl ParamTensors for Model {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.encoder.tensors();
        out.extend(self.head.tensors());
        out.push((
            "prototypes".into(),
            self.bank.prototypes.as_slice().expect("contiguous parameter"),
        ));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = self.encoder.tensors_mut();
        out.extend(self.head.tensors_mut());
        out.push((
            "prototypes".into(),
            self.bank.prototypes.as_slice_mut().expect("contiguous parameter"),
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskKind;
    use crate::features::Modality;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn seq(modality: Modality, t: usize, d: usize, rng: &mut ChaCha8Rng) -> EmbeddingSequence {
        let v = Array2::from_shape_fn((t, d), |_| StandardNormal.sample(rng));
        EmbeddingSequence::new(modality, v, (0..t).map(|i| i as f64).collect()).unwrap()
    }

    fn setup(ablation: Ablation, seed: u64) -> (Model, Vec<(ModelInput, usize)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EncoderConfig::small(8, 2, 6, 6);
        let model = Model::init(&cfg, &TaskKind::Subphase.taxonomy(), ablation, 1.0, &mut rng).unwrap();
        let batch = (0..3)
            .map(|i| {
                let t = 2 + i;
                let input = ModelInput {
                    rgb: seq(Modality::Rgb, t, 8, &mut rng),
                    flow: seq(Modality::Flow, t, 8, &mut rng),
                };
                (input, i % 3)
            })
            .collect();
        (model, batch)
    }

    #[test]
    fn sgd_step_is_exact() {
        let (mut model, batch) = setup(Ablation::Full, 0);
        let refs: Vec<_> = batch.iter().map(|(x, c)| (x, *c)).collect();
        let (_, grads) = model.batch_gradients(&refs).unwrap();
        let before = model.clone();
        model.sgd_step(&grads, 0.1);
        for ((_, a), ((_, b), (_, g))) in model
            .tensors()
            .into_iter()
            .zip(before.tensors().into_iter().zip(grads.tensors()))
        {
            for i in 0..a.len() {
                assert_eq!(a[i], b[i] - 0.1 * g[i]);
            }
        }
    }

    #[test]
    fn ablations_route_streams() {
        for ablation in Ablation::ALL {
            let (model, batch) = setup(ablation, 1);
            let rep = model.represent(&batch[0].0).unwrap();
            let expect = match ablation {
                Ablation::NoRgb => rep.h_flow.clone(),
                Ablation::NoFlow => rep.h_rgb.clone(),
                _ => &rep.h_rgb + &rep.h_flow,
            };
            assert_eq!(rep.h_agg, expect);
            let a = model.classify(&batch[0].0).unwrap();
            let b = crate::prototypes::classify(rep.h_video.view(), &model.bank).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn batch_loss_matches_accumulated() {
        let (model, batch) = setup(Ablation::NoSa, 2);
        let refs: Vec<_> = batch.iter().map(|(x, c)| (x, *c)).collect();
        let (loss, grads) = model.batch_gradients(&refs).unwrap();
        assert!((loss - model.loss(&refs).unwrap()).abs() < 1e-12);
        // mean pooling has no encoder parameters in the graph
        assert!(grads.encoder.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 0.0)));
    }

    fn relative_error(a: &[f64], n: &[f64]) -> f64 {
        let d = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / na.max(nn).max(1e-5)
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, ablation) in [(3, Ablation::Full), (4, Ablation::NoRgb), (5, Ablation::NoSa)] {
            let (model, batch) = setup(ablation, seed);
            let refs: Vec<_> = batch.iter().map(|(x, c)| (x, *c)).collect();
            let (_, grads) = model.batch_gradients(&refs).unwrap();
            let names: Vec<String> = model.tensors().into_iter().map(|(n, _)| n).collect();
            let step = 1e-5;
            for (k, name) in names.iter().enumerate() {
                let analytic = grads.tensors()[k].1.to_vec();
                let numeric: Vec<f64> = (0..analytic.len())
                    .map(|i| {
                        let mut plus = model.clone();
                        plus.tensors_mut()[k].1[i] += step;
                        let mut minus = model.clone();
                        minus.tensors_mut()[k].1[i] -= step;
                        (plus.loss(&refs).unwrap() - minus.loss(&refs).unwrap()) / (2.0 * step)
                    })
                    .collect();
                let err = relative_error(&analytic, &numeric);
                assert!(err < 1e-4, "{ablation} {name}: {err}");
            }
        }
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.as_str().parse::<Ablation>().unwrap(), a);
        }
        assert!("none".parse::<Ablation>().is_err());
    }
}
