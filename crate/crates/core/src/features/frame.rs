use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::flow::{compute_flow, render_flow};
use super::{EmbeddingSequence, FeatureExtractorConfig, FeatureSource, Modality};
use crate::{Error, Result};

/// An RGB image, interleaved `f32` channels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height * 3 {
            return Err(Error::Argument(format!(
                "frame {width}x{height} needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Frame { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Frame {
            width,
            height,
            data: rgb.iter().copied().cycle().take(width * height * 3).collect(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Luma (BT.601 weights), row-major `height x width`.
    pub fn grayscale(&self) -> Array2<f32> {
        Array2::from_shape_fn((self.height, self.width), |(y, x)| {
            let [r, g, b] = self.pixel(x, y);
            0.299 * r + 0.587 * g + 0.114 * b
        })
    }

    pub fn scaled(&self, alpha: f32) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }
}

/// Decodes video frames. Implementations wrap whatever decoder the
/// deployment has; the crate itself ships no codec.
pub trait FrameReader: Sync {
    fn frame_at(&self, video_id: &str, t: f64) -> Result<Frame>;
}

/// A frozen per-frame embedding network.
pub trait FrameExtractor: Sync {
    fn feature_dim(&self) -> usize;
    fn extract(&self, frame: &Frame) -> Result<Vec<f64>>;
}

/// Sampled frames of one modality. Flow frames are rendered flow images.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub modality: Modality,
    pub timestamps: Vec<f64>,
    pub frames: Vec<Frame>,
}

/// Embeds every frame of `frames`; one `D`-vector per frame.
pub fn extract_features(frames: &FrameSequence, extractor: &dyn FrameExtractor) -> Result<EmbeddingSequence> {
    if frames.frames.len() != frames.timestamps.len() {
        return Err(Error::Argument("frame and timestamp counts differ".into()));
    }
    let d = extractor.feature_dim();
    let mut out = Array2::zeros((frames.frames.len(), d));
    for (i, frame) in frames.frames.iter().enumerate() {
        let v = extractor.extract(frame)?;
        out.row_mut(i).iter_mut().zip(v).for_each(|(o, x)| *o = x);
    }
    EmbeddingSequence::new(frames.modality, out, frames.timestamps.clone())
}

/// Seeded random linear projection of patch-averaged grayscale.
///
/// The frame is bilinearly resized to `input_size`, converted to luma,
/// averaged over `patch_size` squares and multiplied by a fixed Gaussian
/// matrix. Every step is linear, so `extract(a * X) == a * extract(X)` up
/// to float rounding.
#[derive(Debug, Clone)]
pub struct MockExtractor {
    config: FeatureExtractorConfig,
    /// `D x n_patches`
    projection: Array2<f64>,
}

impl MockExtractor {
    pub fn new(config: FeatureExtractorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let grid = config.input_size / config.patch_size;
        let n = grid * grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (n as f64).sqrt();
        let projection = Array2::from_shape_fn((config.feature_dim, n), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Ok(MockExtractor { config, projection })
    }

    fn patch_means(&self, frame: &Frame) -> Vec<f64> {
        let size = self.config.input_size;
        let patch = self.config.patch_size;
        let grid = size / patch;
        let gray = frame.grayscale();
        let mut sums = vec![0.0f64; grid * grid];
        let sx = frame.width as f64 / size as f64;
        let sy = frame.height as f64 / size as f64;
        for y in 0..size {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (frame.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(frame.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..size {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (frame.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(frame.width - 1);
                let wx = fx - x0 as f64;
                let top = gray[[y0, x0]] as f64 * (1.0 - wx) + gray[[y0, x1]] as f64 * wx;
                let bottom = gray[[y1, x0]] as f64 * (1.0 - wx) + gray[[y1, x1]] as f64 * wx;
                sums[(y / patch) * grid + x / patch] += top * (1.0 - wy) + bottom * wy;
            }
        }
        let area = (patch * patch) as f64;
        sums.iter().map(|s| s / area).collect()
    }
}

impl FrameExtractor for MockExtractor {
    fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    fn extract(&self, frame: &Frame) -> Result<Vec<f64>> {
        let patches = ndarray::Array1::from(self.patch_means(frame));
        Ok(self.projection.dot(&patches).to_vec())
    }
}

/// Placeholder for a backbone served outside this process. Always reports
/// the backend as unavailable; deployments precompute features instead.
#[derive(Debug, Clone)]
pub struct ExternalExtractor {
    pub feature_dim: usize,
    pub endpoint: Option<String>,
}

impl FrameExtractor for ExternalExtractor {
    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn extract(&self, _frame: &Frame) -> Result<Vec<f64>> {
        Err(Error::Backend(match &self.endpoint {
            Some(e) => format!("external extractor at {e} is unavailable"),
            None => "no external extractor configured".into(),
        }))
    }
}

/// Features computed on the fly from decoded frames. Flow pairs go through
/// block matching and colour-wheel rendering before the extractor.
pub struct FrameFeatureSource<R, E> {
    pub reader: R,
    pub extractor: E,
}

impl<R: FrameReader, E: FrameExtractor> FeatureSource for FrameFeatureSource<R, E> {
    fn feature_dim(&self) -> usize {
        self.extractor.feature_dim()
    }

    fn rgb(&self, video_id: &str, timestamps: &[f64]) -> Result<EmbeddingSequence> {
        let frames = timestamps
            .iter()
            .map(|&t| self.reader.frame_at(video_id, t))
            .collect::<Result<Vec<_>>>()?;
        extract_features(
            &FrameSequence {
                modality: Modality::Rgb,
                timestamps: timestamps.to_vec(),
                frames,
            },
            &self.extractor,
        )
    }

    fn flow(&self, video_id: &str, pairs: &[(f64, f64)]) -> Result<EmbeddingSequence> {
        let frames = pairs
            .iter()
            .map(|&(a, b)| {
                let fa = self.reader.frame_at(video_id, a)?;
                let fb = self.reader.frame_at(video_id, b)?;
                Ok(render_flow(&compute_flow(&fa, &fb)?))
            })
            .collect::<Result<Vec<_>>>()?;
        extract_features(
            &FrameSequence {
                modality: Modality::Flow,
                timestamps: pairs.iter().map(|p| p.0).collect(),
                frames,
            },
            &self.extractor,
        )
    }
}
