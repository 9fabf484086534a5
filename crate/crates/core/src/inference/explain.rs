use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SegmentSpan;
use crate::encoder::{extract_temporal_attention, AggregateMode, EncodeMode};
use crate::model::ModelInput;
use crate::sampling::sample_input;
use crate::training::ModelCheckpoint;
use crate::{Error, Result};

/// Per-frame attention of one segment with the model's prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Modality whose frames the weights refer to.
    pub modality: String,
    pub timestamps: Vec<f64>,
    pub weights: Vec<f64>,
    pub predicted: String,
    pub probabilities: Vec<f64>,
}

impl Explanation {
    /// Timestamp of the most attended frame.
    pub fn peak_s(&self) -> f64 {
        self.timestamps[crate::prototypes::argmax(&self.weights)]
    }
}

/// Final-layer CLS attention over the sampled frames of a segment. RGB frames
/// are explained unless the model only sees flow.
pub fn explain(
    checkpoint: &ModelCheckpoint,
    source: &dyn crate::features::FeatureSource,
    span: &SegmentSpan,
) -> Result<Explanation> {
    let ablation = checkpoint.ablation();
    if ablation.encode_mode() == EncodeMode::MeanPool {
        return Err(Error::UnsupportedMode(format!(
            "the {ablation} model has no temporal attention to explain"
        )));
    }
    let sampling = &checkpoint.config.sampling;
    let sampled = sample_input(
        span.start_s,
        span.end_s,
        span.source_fps,
        sampling,
        sampling.tta_offsets_frames[0],
    )?;
    let input = ModelInput::load(source, &span.video_id, &sampled)?;
    let (modality, seq, timestamps) = if ablation.aggregate_mode() == AggregateMode::FlowOnly {
        (
            "flow",
            &input.flow,
            sampled.flow.iter().map(|&(a, b)| 0.5 * (a + b)).collect(),
        )
    } else {
        ("rgb", &input.rgb, sampled.rgb.clone())
    };
    let weights = extract_temporal_attention(seq, &checkpoint.model.encoder, EncodeMode::SelfAttention)?;
    let result = checkpoint.model.classify(&input)?;
    Ok(Explanation {
        video_id: span.video_id.clone(),
        start_s: span.start_s,
        end_s: span.end_s,
        modality: modality.into(),
        timestamps,
        weights,
        predicted: result.code,
        probabilities: result.probabilities,
    })
}

/// A strip of per-frame cells shaded by attention weight.
pub fn write_attention_svg(path: &Path, explanation: &Explanation) -> Result<()> {
    let n = explanation.weights.len().max(1);
    let cell = (600.0 / n as f64).clamp(4.0, 40.0);
    let (pad, height) = (20.0, 60.0);
    let width = 2.0 * pad + cell * n as f64;
    let peak = explanation
        .weights
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{h}" viewBox="0 0 {width} {h}">"#,
        h = height + 60.0
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="16" font-size="12" font-family="sans-serif">{} {:.2}-{:.2} s: {}</text>"#,
        explanation.video_id, explanation.start_s, explanation.end_s, explanation.predicted
    );
    for (k, (w, t)) in explanation.weights.iter().zip(&explanation.timestamps).enumerate() {
        let x = pad + cell * k as f64;
        let _ = writeln!(
            svg,
            r##"<rect x="{x:.2}" y="30" width="{cell:.2}" height="{height}" fill="#d62728" fill-opacity="{:.4}" stroke="#ccc"><title>t={t:.3} s w={w:.4}</title></rect>"##,
            w / peak
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{pad}" y="{}" font-size="11" font-family="sans-serif">{} frames, peak at {:.2} s</text>"#,
        height + 50.0,
        explanation.modality,
        explanation.peak_s()
    );
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}
