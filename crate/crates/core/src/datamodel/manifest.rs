use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::aggregate_skill_labels;
use super::taxonomy::{TaskKind, Taxonomy};
use crate::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] = [
    "video_id",
    "surgeon_id",
    "start_s",
    "end_s",
    "label",
    "rater_id",
    "task_kind",
];

/// Default media index file name, looked up next to the manifest CSV.
pub const MEDIA_INDEX_FILE: &str = "media.json";

/// One rater's label for one time span of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub video_id: String,
    pub surgeon_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: String,
    pub rater_id: String,
    pub task_kind: TaskKind,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) || self.start_s < 0.0 {
            return Err(Error::Validation(format!(
                "record {}@[{}, {}]: times must be finite and start_s >= 0",
                self.video_id, self.start_s, self.end_s
            )));
        }
        if self.end_s <= self.start_s {
            return Err(Error::Validation(format!(
                "record {}@[{}, {}]: end_s must exceed start_s",
                self.video_id, self.start_s, self.end_s
            )));
        }
        self.task_kind.taxonomy().require_index(&self.label)?;
        Ok(())
    }

    fn span_key(&self) -> (String, u64, u64) {
        (self.video_id.clone(), self.start_s.to_bits(), self.end_s.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaDescriptor {
    pub fps: f64,
    pub duration_s: f64,
    pub path: String,
}

/// A labeled span ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: usize,
}

/// Annotation records plus the media they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: Vec<AnnotationRecord>,
    pub media_index: BTreeMap<String, MediaDescriptor>,
}

impl DatasetManifest {
    /// Validates every invariant and sorts records by `(video_id, start_s)`.
    pub fn new(mut records: Vec<AnnotationRecord>, media_index: BTreeMap<String, MediaDescriptor>) -> Result<Self> {
        for (video_id, media) in &media_index {
            if !(media.fps > 0.0 && media.fps.is_finite()) || !(media.duration_s > 0.0 && media.duration_s.is_finite())
            {
                return Err(Error::Validation(format!(
                    "media {video_id}: fps and duration_s must be positive"
                )));
            }
        }
        for r in &records {
            r.validate()?;
            let media = media_index
                .get(&r.video_id)
                .ok_or_else(|| Error::Validation(format!("video {} missing from media index", r.video_id)))?;
            if r.end_s > media.duration_s {
                return Err(Error::Validation(format!(
                    "record {}@[{}, {}] extends past media duration {}",
                    r.video_id, r.start_s, r.end_s, media.duration_s
                )));
            }
        }
        records.sort_by(|a, b| {
            a.video_id
                .cmp(&b.video_id)
                .then(a.start_s.total_cmp(&b.start_s))
                .then(a.end_s.total_cmp(&b.end_s))
                .then(a.rater_id.cmp(&b.rater_id))
        });
        Ok(DatasetManifest { records, media_index })
    }

    /// Videos referenced by at least one record, in sorted order.
    pub fn video_ids(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.iter().map(|r| &r.video_id).collect();
        set.into_iter().cloned().collect()
    }

    pub fn media(&self, video_id: &str) -> Result<&MediaDescriptor> {
        self.media_index
            .get(video_id)
            .ok_or_else(|| Error::Validation(format!("video {video_id} missing from media index")))
    }

    /// Labeled segments of one task.
    ///
    /// Skill spans rated by several raters take the worst score. Other task
    /// kinds carry no adjudication rule, so raters must agree on a span.
    pub fn segments(&self, task_kind: TaskKind) -> Result<Vec<Segment>> {
        let taxonomy = Taxonomy::for_task(task_kind);
        let mut grouped: BTreeMap<(String, u64, u64), Vec<&AnnotationRecord>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.task_kind == task_kind) {
            grouped.entry(r.span_key()).or_default().push(r);
        }
        let mut segments = Vec::with_capacity(grouped.len());
        for group in grouped.into_values() {
            let first = group[0];
            let label = if task_kind == TaskKind::Skill {
                let owned: Vec<AnnotationRecord> = group.iter().map(|r| (*r).clone()).collect();
                aggregate_skill_labels(&owned)?
            } else {
                if let Some(other) = group.iter().find(|r| r.label != first.label) {
                    return Err(Error::Validation(format!(
                        "raters disagree on {}@[{}, {}]: {:?} vs {:?}",
                        first.video_id, first.start_s, first.end_s, first.label, other.label
                    )));
                }
                first.label.clone()
            };
            segments.push(Segment {
                video_id: first.video_id.clone(),
                start_s: first.start_s,
                end_s: first.end_s,
                label: taxonomy.require_index(&label)?,
            });
        }
        segments.sort_by(|a, b| a.video_id.cmp(&b.video_id).then(a.start_s.total_cmp(&b.start_s)));
        Ok(segments)
    }

    /// Writes the CSV manifest and its media index.
    pub fn save(&self, csv_path: &Path, media_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.video_id.as_str(),
                r.surgeon_id.as_str(),
                &r.start_s.to_string(),
                &r.end_s.to_string(),
                r.label.as_str(),
                r.rater_id.as_str(),
                r.task_kind.as_str(),
            ])?;
        }
        w.flush()?;
        fs::write(media_path, serde_json::to_string_pretty(&self.media_index)?)?;
        Ok(())
    }
}

/// Path of the media index that accompanies a manifest CSV.
pub fn media_index_path(csv_path: &Path) -> PathBuf {
    csv_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(MEDIA_INDEX_FILE)
}

/// Loads a manifest CSV with the `media.json` index stored beside it.
pub fn load_manifest(csv_path: &Path) -> Result<DatasetManifest> {
    load_manifest_with_media(csv_path, &media_index_path(csv_path))
}

pub fn load_manifest_with_media(csv_path: &Path, media_path: &Path) -> Result<DatasetManifest> {
    let media_text = fs::read_to_string(media_path)?;
    let media_index: BTreeMap<String, MediaDescriptor> =
        serde_json::from_str(&media_text).map_err(|e| Error::Format {
            path: media_path.to_path_buf(),
            message: e.to_string(),
        })?;
    let records = parse_records(&fs::read(csv_path)?)?;
    DatasetManifest::new(records, media_index)
}

/// Parses manifest CSV bytes. Errors name the 1-based line number.
pub fn parse_records(bytes: &[u8]) -> Result<Vec<AnnotationRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let header = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", MANIFEST_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parse_err = |message: String| Error::Parse { line, message };
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_err(format!(
                "expected {} fields, found {}",
                MANIFEST_HEADER.len(),
                row.len()
            )));
        }
        let time = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("{} is not a number: {:?}", MANIFEST_HEADER[i], &row[i])))
        };
        let task_kind: TaskKind = row[6]
            .parse()
            .map_err(|_| parse_err(format!("unknown task_kind {:?}", &row[6])))?;
        records.push(AnnotationRecord {
            video_id: row[0].to_string(),
            surgeon_id: row[1].to_string(),
            start_s: time(2)?,
            end_s: time(3)?,
            label: row[4].to_string(),
            rater_id: row[5].to_string(),
            task_kind,
        });
    }
    Ok(records)
}
