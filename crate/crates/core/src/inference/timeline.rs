use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{combine_distributions, ensemble_taxonomy, predict_segment, EnsemblePrediction, SegmentSpan};
use crate::datamodel::MediaDescriptor;
use crate::features::FeatureSource;
use crate::training::ModelCheckpoint;
use crate::{Error, Result};

/// Same-category predictions closer than this are one event.
pub const MERGE_GAP_S: f64 = 2.0;

/// A labeled time span: a predicted interval or a merged event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrediction {
    pub start_s: f64,
    pub end_s: f64,
    pub prediction: EnsemblePrediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelinePrediction {
    pub video_id: String,
    pub codes: Vec<String>,
    pub threshold: f64,
    pub intervals: Vec<IntervalPrediction>,
    pub events: Vec<Event>,
}

/// Joins each prediction to the previous event when both carry the same
/// label and the gap between them is under two seconds.
pub fn merge_predictions(predictions: &[Event]) -> Result<Vec<Event>> {
    if let Some(w) = predictions.windows(2).find(|w| w[1].start_s < w[0].start_s) {
        return Err(Error::Argument(format!(
            "predictions are not sorted by start ({} after {})",
            w[1].start_s, w[0].start_s
        )));
    }
    let mut events: Vec<Event> = Vec::new();
    for p in predictions {
        match events.last_mut() {
            Some(last) if last.label == p.label && p.start_s - last.end_s < MERGE_GAP_S => {
                last.end_s = last.end_s.max(p.end_s);
            }
            _ => events.push(p.clone()),
        }
    }
    Ok(events)
}

fn events_of(intervals: &[IntervalPrediction]) -> Result<Vec<Event>> {
    let predicted: Vec<Event> = intervals
        .iter()
        .filter_map(|iv| {
            iv.prediction.code.as_ref().map(|code| Event {
                label: code.clone(),
                start_s: iv.start_s,
                end_s: iv.end_s,
            })
        })
        .collect();
    merge_predictions(&predicted)
}

/// Ensemble predictions on consecutive one-second intervals covering
/// `[0, floor(duration))`, with merged events.
pub fn segment_timeline(
    models: &[ModelCheckpoint],
    source: &dyn FeatureSource,
    video_id: &str,
    media: &MediaDescriptor,
    s_thresh: f64,
    use_tta: bool,
) -> Result<TimelinePrediction> {
    let taxonomy = ensemble_taxonomy(models)?;
    if media.duration_s < 1.0 {
        return Err(Error::Argument(format!(
            "video {video_id} is shorter than one second ({} s)",
            media.duration_s
        )));
    }
    let n = media.duration_s.floor() as usize;
    let mut intervals = Vec::with_capacity(n);
    for k in 0..n {
        let span = SegmentSpan {
            video_id: video_id.to_string(),
            start_s: k as f64,
            end_s: (k + 1) as f64,
            source_fps: media.fps,
        };
        let per_model = models
            .iter()
            .map(|m| predict_segment(m, source, &span, use_tta))
            .collect::<Result<Vec<_>>>()?;
        intervals.push(IntervalPrediction {
            start_s: span.start_s,
            end_s: span.end_s,
            prediction: combine_distributions(per_model, s_thresh, &taxonomy.categories)?,
        });
    }
    let events = events_of(&intervals)?;
    Ok(TimelinePrediction {
        video_id: video_id.to_string(),
        codes: taxonomy.categories.clone(),
        threshold: s_thresh,
        intervals,
        events,
    })
}

#[derive(Serialize)]
struct IntervalRow<'a> {
    start_s: f64,
    end_s: f64,
    probs: &'a [f64],
    entropy: f64,
    predicted: Option<&'a str>,
}

#[derive(Serialize)]
struct TimelineJson<'a> {
    video_id: &'a str,
    threshold: f64,
    intervals: Vec<IntervalRow<'a>>,
    events: &'a [Event],
}

impl TimelinePrediction {
    /// The same per-interval distributions gated at another threshold.
    pub fn with_threshold(&self, s_thresh: f64) -> Result<TimelinePrediction> {
        let intervals = self
            .intervals
            .iter()
            .map(|iv| {
                Ok(IntervalPrediction {
                    start_s: iv.start_s,
                    end_s: iv.end_s,
                    prediction: combine_distributions(iv.prediction.per_model.clone(), s_thresh, &self.codes)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let events = events_of(&intervals)?;
        Ok(TimelinePrediction {
            video_id: self.video_id.clone(),
            codes: self.codes.clone(),
            threshold: s_thresh,
            intervals,
            events,
        })
    }

    pub fn n_predicted(&self) -> usize {
        self.intervals.iter().filter(|iv| iv.prediction.gated).count()
    }

    pub fn to_json(&self) -> Result<String> {
        let view = TimelineJson {
            video_id: &self.video_id,
            threshold: self.threshold,
            intervals: self
                .intervals
                .iter()
                .map(|iv| IntervalRow {
                    start_s: iv.start_s,
                    end_s: iv.end_s,
                    probs: &iv.prediction.mean,
                    entropy: iv.prediction.entropy,
                    predicted: iv.prediction.code.as_deref(),
                })
                .collect(),
            events: &self.events,
        };
        Ok(serde_json::to_string_pretty(&view)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Intervals colored by predicted category (grey when abstaining), with
    /// merged events below and the entropy trace on top.
    pub fn write_svg(&self, path: &Path) -> Result<()> {
        const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let end = self.intervals.last().map_or(1.0, |iv| iv.end_s);
        let (pad, width) = (40.0, 800.0);
        let x = |t: f64| pad + width * t / end;
        let s_max = (self.codes.len() as f64).ln().max(f64::MIN_POSITIVE);
        let color = |code: &str| {
            let k = self.codes.iter().position(|c| c == code).unwrap_or(0);
            PALETTE[k % PALETTE.len()]
        };
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="220" viewBox="0 0 {w} 220">"#,
            w = width + 2.0 * pad + 100.0
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{pad}" y="16" font-size="12" font-family="sans-serif">{} (threshold {:.3} nats)</text>"#,
            self.video_id, self.threshold
        );
        let trace: Vec<String> = self
            .intervals
            .iter()
            .map(|iv| {
                let t = 0.5 * (iv.start_s + iv.end_s);
                format!("{:.2},{:.2}", x(t), 100.0 - 70.0 * iv.prediction.entropy / s_max)
            })
            .collect();
        let _ = writeln!(
            svg,
            r##"<line x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#999" stroke-dasharray="4 4"/>"##,
            x(0.0),
            x(end),
            y = 100.0 - 70.0 * self.threshold.min(s_max) / s_max
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="black" stroke-width="1"/>"#,
            trace.join(" ")
        );
        for iv in &self.intervals {
            let fill = iv.prediction.code.as_deref().map_or("#cccccc", color);
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="110" width="{:.2}" height="30" fill="{fill}"/>"#,
                x(iv.start_s),
                x(iv.end_s) - x(iv.start_s)
            );
        }
        for ev in &self.events {
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="150" width="{:.2}" height="14" fill="{}"/>"#,
                x(ev.start_s),
                (x(ev.end_s) - x(ev.start_s)).max(1.0),
                color(&ev.label)
            );
        }
        for (k, code) in self.codes.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif" fill="{}">{code}</text>"#,
                x(end) + 12.0,
                40.0 + 16.0 * k as f64,
                color(code)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{pad}" y="190" font-size="11" font-family="sans-serif">entropy (top), gated intervals (middle), merged events (bottom); 0 to {end} s</text>"#
        );
        svg.push_str("</svg>\n");
        fs::write(path, svg)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(label: &str, start: f64, end: f64) -> Event {
        Event {
            label: label.into(),
            start_s: start,
            end_s: end,
        }
    }

    #[test]
    fn retraction_example() {
        let out = merge_predictions(&[ev("r", 10.0, 11.0), ev("r", 11.0, 12.0), ev("r", 15.0, 16.0)]).unwrap();
        assert_eq!(out, vec![ev("r", 10.0, 12.0), ev("r", 15.0, 16.0)]);
    }

    #[test]
    fn one_second_gap_merges() {
        let out = merge_predictions(&[ev("r", 10.0, 11.0), ev("r", 12.0, 13.0)]).unwrap();
        assert_eq!(out, vec![ev("r", 10.0, 13.0)]);
    }

    #[test]
    fn alternating_categories_do_not_merge() {
        let input: Vec<Event> = (0..6)
            .map(|k| ev(if k % 2 == 0 { "c" } else { "h" }, k as f64, k as f64 + 1.0))
            .collect();
        assert_eq!(merge_predictions(&input).unwrap(), input);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        assert!(matches!(
            merge_predictions(&[ev("r", 5.0, 6.0), ev("r", 1.0, 2.0)]),
            Err(Error::Argument(_))
        ));
    }

    fn arb_intervals() -> impl Strategy<Value = Vec<Event>> {
        prop::collection::vec((0u8..3, 0u8..3), 0..40).prop_map(|steps| {
            let mut t = 0.0;
            steps
                .into_iter()
                .map(|(label, skip)| {
                    t += skip as f64;
                    let e = ev(["c", "h", "r"][label as usize], t, t + 1.0);
                    t += 1.0;
                    e
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn merging_is_idempotent(input in arb_intervals()) {
            let once = merge_predictions(&input).unwrap();
            prop_assert_eq!(merge_predictions(&once).unwrap(), once);
        }

        #[test]
        fn merging_is_batch_independent(input in arb_intervals(), cut in 0usize..40) {
            let cut = cut.min(input.len());
            let mut pieces = merge_predictions(&input[..cut]).unwrap();
            pieces.extend(merge_predictions(&input[cut..]).unwrap());
            prop_assert_eq!(merge_predictions(&pieces).unwrap(), merge_predictions(&input).unwrap());
        }
    }
}
