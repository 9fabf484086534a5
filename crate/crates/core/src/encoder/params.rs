use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Shapes of the temporal encoder and projection head.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Frame feature dimension `D`.
    pub dim: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    pub n_layers: usize,
    /// Length of the positional embedding table.
    pub max_frames: usize,
    /// Hidden width of the projection head.
    pub proj_hidden: usize,
    /// Video representation dimension `E`.
    pub proj_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 384,
            n_heads: 6,
            ff_dim: 4 * 384,
            n_layers: 4,
            max_frames: 64,
            proj_hidden: 384,
            proj_dim: 256,
        }
    }
}

impl EncoderConfig {
    /// A desk-scale configuration with `ff_dim = 4D` and `proj_hidden = D`.
    pub fn small(dim: usize, n_heads: usize, proj_dim: usize, max_frames: usize) -> Self {
        EncoderConfig {
            dim,
            n_heads,
            ff_dim: 4 * dim,
            n_layers: 4,
            max_frames,
            proj_hidden: dim,
            proj_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.n_heads == 0 || !self.dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of n_heads {}",
                self.dim, self.n_heads
            )));
        }
        if self.ff_dim == 0 || self.n_layers == 0 || self.max_frames == 0 {
            return Err(Error::Config("ff_dim, n_layers and max_frames must be positive".into()));
        }
        if self.proj_hidden == 0 || self.proj_dim == 0 {
            return Err(Error::Config("projection dims must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }
}

/// Named views over every trainable tensor, in a fixed order.
pub trait ParamTensors {
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub(crate) fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous parameter")
}

pub(crate) fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous parameter")
}

pub(crate) fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous parameter")
}

pub(crate) fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous parameter")
}

fn uniform_fan_in<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound))
}

fn normal<R: Rng>(rng: &mut R, shape: (usize, usize), std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    Array2::from_shape_fn(shape, |_| dist.sample(rng))
}

/// One pre-norm encoder layer. Matrices map row vectors: `y = x W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_gamma: Array1<f64>,
    pub ln1_beta: Array1<f64>,
    pub w_q: Array2<f64>,
    pub b_q: Array1<f64>,
    pub w_k: Array2<f64>,
    pub b_k: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_gamma: Array1<f64>,
    pub ln2_beta: Array1<f64>,
    pub w_ff1: Array2<f64>,
    pub b_ff1: Array1<f64>,
    pub w_ff2: Array2<f64>,
    pub b_ff2: Array1<f64>,
}

impl LayerParams {
    fn zeros(config: &EncoderConfig) -> Self {
        let (d, f) = (config.dim, config.ff_dim);
        LayerParams {
            ln1_gamma: Array1::zeros(d),
            ln1_beta: Array1::zeros(d),
            w_q: Array2::zeros((d, d)),
            b_q: Array1::zeros(d),
            w_k: Array2::zeros((d, d)),
            b_k: Array1::zeros(d),
            w_v: Array2::zeros((d, d)),
            b_v: Array1::zeros(d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln2_gamma: Array1::zeros(d),
            ln2_beta: Array1::zeros(d),
            w_ff1: Array2::zeros((d, f)),
            b_ff1: Array1::zeros(f),
            w_ff2: Array2::zeros((f, d)),
            b_ff2: Array1::zeros(d),
        }
    }

    fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Self {
        let (d, f) = (config.dim, config.ff_dim);
        LayerParams {
            ln1_gamma: Array1::ones(d),
            ln1_beta: Array1::zeros(d),
            w_q: uniform_fan_in(rng, d, d),
            b_q: Array1::zeros(d),
            w_k: uniform_fan_in(rng, d, d),
            b_k: Array1::zeros(d),
            w_v: uniform_fan_in(rng, d, d),
            b_v: Array1::zeros(d),
            w_o: uniform_fan_in(rng, d, d),
            b_o: Array1::zeros(d),
            ln2_gamma: Array1::ones(d),
            ln2_beta: Array1::zeros(d),
            w_ff1: uniform_fan_in(rng, d, f),
            b_ff1: Array1::zeros(f),
            w_ff2: uniform_fan_in(rng, f, d),
            b_ff2: Array1::zeros(d),
        }
    }

    fn named(&self, prefix: &str) -> Vec<(String, &[f64])> {
        vec![
            (format!("{prefix}.ln1_gamma"), slice1(&self.ln1_gamma)),
            (format!("{prefix}.ln1_beta"), slice1(&self.ln1_beta)),
            (format!("{prefix}.w_q"), slice2(&self.w_q)),
            (format!("{prefix}.b_q"), slice1(&self.b_q)),
            (format!("{prefix}.w_k"), slice2(&self.w_k)),
            (format!("{prefix}.b_k"), slice1(&self.b_k)),
            (format!("{prefix}.w_v"), slice2(&self.w_v)),
            (format!("{prefix}.b_v"), slice1(&self.b_v)),
            (format!("{prefix}.w_o"), slice2(&self.w_o)),
            (format!("{prefix}.b_o"), slice1(&self.b_o)),
            (format!("{prefix}.ln2_gamma"), slice1(&self.ln2_gamma)),
            (format!("{prefix}.ln2_beta"), slice1(&self.ln2_beta)),
            (format!("{prefix}.w_ff1"), slice2(&self.w_ff1)),
            (format!("{prefix}.b_ff1"), slice1(&self.b_ff1)),
            (format!("{prefix}.w_ff2"), slice2(&self.w_ff2)),
            (format!("{prefix}.b_ff2"), slice1(&self.b_ff2)),
        ]
    }

    fn named_mut(&mut self, prefix: &str) -> Vec<(String, &mut [f64])> {
        vec![
            (format!("{prefix}.ln1_gamma"), slice1_mut(&mut self.ln1_gamma)),
            (format!("{prefix}.ln1_beta"), slice1_mut(&mut self.ln1_beta)),
            (format!("{prefix}.w_q"), slice2_mut(&mut self.w_q)),
            (format!("{prefix}.b_q"), slice1_mut(&mut self.b_q)),
            (format!("{prefix}.w_k"), slice2_mut(&mut self.w_k)),
            (format!("{prefix}.b_k"), slice1_mut(&mut self.b_k)),
            (format!("{prefix}.w_v"), slice2_mut(&mut self.w_v)),
            (format!("{prefix}.b_v"), slice1_mut(&mut self.b_v)),
            (format!("{prefix}.w_o"), slice2_mut(&mut self.w_o)),
            (format!("{prefix}.b_o"), slice1_mut(&mut self.b_o)),
            (format!("{prefix}.ln2_gamma"), slice1_mut(&mut self.ln2_gamma)),
            (format!("{prefix}.ln2_beta"), slice1_mut(&mut self.ln2_beta)),
            (format!("{prefix}.w_ff1"), slice2_mut(&mut self.w_ff1)),
            (format!("{prefix}.b_ff1"), slice1_mut(&mut self.b_ff1)),
            (format!("{prefix}.w_ff2"), slice2_mut(&mut self.w_ff2)),
            (format!("{prefix}.b_ff2"), slice1_mut(&mut self.b_ff2)),
        ]
    }
}

/// CLS embedding, temporal positional embeddings and the encoder stack.
/// One instance serves both modalities.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalEncoderParams {
    pub config: EncoderConfig,
    pub cls: Array1<f64>,
    /// `max_frames x D`
    pub positions: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub final_gamma: Array1<f64>,
    pub final_beta: Array1<f64>,
}

impl TemporalEncoderParams {
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        Ok(TemporalEncoderParams {
            config: config.clone(),
            cls: normal(rng, (1, d), 0.02).row(0).to_owned(),
            positions: normal(rng, (config.max_frames, d), 0.02),
            layers: (0..config.n_layers).map(|_| LayerParams::init(config, rng)).collect(),
            final_gamma: Array1::ones(d),
            final_beta: Array1::zeros(d),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// All-zero tensors, used as gradient buffers and load targets.
    pub fn zeros(config: &EncoderConfig) -> Self {
        TemporalEncoderParams {
            config: config.clone(),
            cls: Array1::zeros(config.dim),
            positions: Array2::zeros((config.max_frames, config.dim)),
            layers: (0..config.n_layers).map(|_| LayerParams::zeros(config)).collect(),
            final_gamma: Array1::zeros(config.dim),
            final_beta: Array1::zeros(config.dim),
        }
    }
}

impl ParamTensors for TemporalEncoderParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![
            ("encoder.cls".to_string(), slice1(&self.cls)),
            ("encoder.positions".to_string(), slice2(&self.positions)),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.named(&format!("encoder.layer{i}")));
        }
        out.push(("encoder.final_gamma".into(), slice1(&self.final_gamma)));
        out.push(("encoder.final_beta".into(), slice1(&self.final_beta)));
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = vec![
            ("encoder.cls".to_string(), slice1_mut(&mut self.cls)),
            ("encoder.positions".to_string(), slice2_mut(&mut self.positions)),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.extend(layer.named_mut(&format!("encoder.layer{i}")));
        }
        out.push(("encoder.final_gamma".into(), slice1_mut(&mut self.final_gamma)));
        out.push(("encoder.final_beta".into(), slice1_mut(&mut self.final_beta)));
        out
    }
}

/// Two affine layers, `D -> hidden -> E`, with a ReLU after the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl ProjectionHeadParams {
    pub fn init<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Self {
        ProjectionHeadParams {
            w1: uniform_fan_in(rng, config.dim, config.proj_hidden),
            b1: Array1::zeros(config.proj_hidden),
            w2: uniform_fan_in(rng, config.proj_hidden, config.proj_dim),
            b2: Array1::zeros(config.proj_dim),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        ProjectionHeadParams {
            w1: Array2::zeros((input, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, output)),
            b2: Array1::zeros(output),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w1.nrows(), self.w1.ncols(), self.w2.ncols())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }
}

impl ParamTensors for ProjectionHeadParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("head.w1".into(), slice2(&self.w1)),
            ("head.b1".into(), slice1(&self.b1)),
            ("head.w2".into(), slice2(&self.w2)),
            ("head.b2".into(), slice1(&self.b2)),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("head.w1".into(), slice2_mut(&mut self.w1)),
            ("head.b1".into(), slice1_mut(&mut self.b1)),
            ("head.w2".into(), slice2_mut(&mut self.w2)),
            ("head.b2".into(), slice1_mut(&mut self.b2)),
        ]
    }
}
