//! Timestamp sampling for segments: RGB frames at a fixed rate, the flow
//! frame pairs that overlap them, and temporally offset TTA variants.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub sample_fps: f64,
    pub flow_span_s: f64,
    /// Start offsets in source-video frames, one TTA variant each.
    pub tta_offsets_frames: Vec<u32>,
    pub max_frames: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            sample_fps: 2.0,
            flow_span_s: 0.5,
            tta_offsets_frames: vec![0, 3, 6],
            max_frames: 64,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_fps > 0.0 && self.sample_fps.is_finite()) {
            return Err(Error::Config("sample_fps must be positive".into()));
        }
        if !(self.flow_span_s > 0.0 && self.flow_span_s.is_finite()) {
            return Err(Error::Config("flow_span_s must be positive".into()));
        }
        if self.tta_offsets_frames.is_empty() || self.tta_offsets_frames.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "TTA offsets must be non-empty and strictly increasing".into(),
            ));
        }
        if self.max_frames == 0 {
            return Err(Error::Config("max_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Snaps `t` to the nearest source frame (ties to the earlier frame),
/// keeping the result inside `[lo, hi]` when the nearest frame falls outside.
fn snap(t: f64, source_fps: f64, lo: f64, hi: f64) -> f64 {
    let x = t * source_fps;
    let mut frame = (x - 0.5).ceil();
    // float noise around exact frame positions
    if (x - x.round()).abs() < 1e-9 {
        frame = x.round();
    }
    let mut snapped = frame / source_fps;
    if snapped > hi + TIME_EPS {
        snapped = (frame - 1.0) / source_fps;
    }
    if snapped < lo - TIME_EPS {
        snapped = (frame + 1.0) / source_fps;
    }
    snapped
}

fn check_segment(start_s: f64, end_s: f64, source_fps: f64) -> Result<()> {
    if !(start_s.is_finite() && end_s.is_finite()) || end_s <= start_s {
        return Err(Error::DegenerateSegment(format!(
            "segment [{start_s}, {end_s}] has no duration"
        )));
    }
    if !(source_fps > 0.0 && source_fps.is_finite()) {
        return Err(Error::Argument(format!("source fps {source_fps} must be positive")));
    }
    Ok(())
}

/// RGB timestamps `start + offset/source_fps + k/sample_fps` for `k = 0, 1, ...`
/// up to `end_s`, snapped to source frames and truncated to the first
/// `max_frames`.
pub fn sample_rgb_timestamps(
    start_s: f64,
    end_s: f64,
    source_fps: f64,
    config: &SamplingConfig,
    offset_frames: u32,
) -> Result<Vec<f64>> {
    check_segment(start_s, end_s, source_fps)?;
    let offset_s = offset_frames as f64 / source_fps;
    if offset_s >= end_s - start_s {
        return Err(Error::DegenerateSegment(format!(
            "offset of {offset_frames} frames exceeds segment [{start_s}, {end_s}]"
        )));
    }
    let first = start_s + offset_s;
    let mut out: Vec<f64> = Vec::new();
    for k in 0.. {
        if out.len() == config.max_frames {
            break;
        }
        let t = first + k as f64 / config.sample_fps;
        if t > end_s + TIME_EPS {
            break;
        }
        let s = snap(t, source_fps, start_s, end_s);
        if s < start_s - TIME_EPS || s > end_s + TIME_EPS {
            continue;
        }
        if out.last().is_none_or(|&last| s > last) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::DegenerateSegment(format!(
            "segment [{start_s}, {end_s}] is shorter than one sample"
        )));
    }
    Ok(out)
}

/// One flow pair `(t, min(t + flow_span_s, end_s))` per RGB timestamp;
/// zero-span pairs are dropped.
pub fn pair_flow_timestamps(rgb_timestamps: &[f64], config: &SamplingConfig, end_s: f64) -> Result<Vec<(f64, f64)>> {
    if rgb_timestamps.is_empty() {
        return Err(Error::Argument("no RGB timestamps to pair".into()));
    }
    let pairs: Vec<(f64, f64)> = rgb_timestamps
        .iter()
        .map(|&t| (t, (t + config.flow_span_s).min(end_s)))
        .filter(|(a, b)| b - a > TIME_EPS)
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateSegment(format!(
            "every flow pair ending at {end_s} has zero span"
        )));
    }
    Ok(pairs)
}

/// Sampled RGB timestamps and flow pairs for one start offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledInput {
    pub offset_frames: u32,
    pub rgb: Vec<f64>,
    pub flow: Vec<(f64, f64)>,
}

pub fn sample_input(
    start_s: f64,
    end_s: f64,
    source_fps: f64,
    config: &SamplingConfig,
    offset_frames: u32,
) -> Result<SampledInput> {
    let rgb = sample_rgb_timestamps(start_s, end_s, source_fps, config, offset_frames)?;
    let flow = pair_flow_timestamps(&rgb, config, end_s)?;
    Ok(SampledInput {
        offset_frames,
        rgb,
        flow,
    })
}

/// The TTA inputs of a segment, one per configured offset.
///
/// A non-zero offset is kept only when the shifted start still leaves a full
/// flow span inside the segment (`offset/source_fps + flow_span_s <= duration`);
/// otherwise it falls back to the first offset and is deduplicated away.
pub fn tta_variants(start_s: f64, end_s: f64, source_fps: f64, config: &SamplingConfig) -> Result<Vec<SampledInput>> {
    check_segment(start_s, end_s, source_fps)?;
    let duration = end_s - start_s;
    let base = config.tta_offsets_frames[0];
    let mut variants = vec![sample_input(start_s, end_s, source_fps, config, base)?];
    for &offset in &config.tta_offsets_frames[1..] {
        let offset_s = offset as f64 / source_fps;
        if offset_s + config.flow_span_s > duration + TIME_EPS {
            continue;
        }
        match sample_input(start_s, end_s, source_fps, config, offset) {
            Ok(v) if !variants.iter().any(|u| u.rgb == v.rgb) => variants.push(v),
            Ok(_) | Err(Error::DegenerateSegment(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(variants)
}
