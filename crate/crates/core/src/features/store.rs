use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSequence, FeatureSource, Modality};
use crate::{Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"RFFS";
pub const STORE_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Timestamp lookup key with microsecond resolution.
fn time_key(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

/// Feature rows of one `(video, modality)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredFeatures {
    pub timestamps: Vec<f64>,
    /// `T x D`, row-major.
    pub rows: Array2<f32>,
    index: HashMap<i64, usize>,
}

impl StoredFeatures {
    pub fn new(timestamps: Vec<f64>, rows: Array2<f32>) -> Result<Self> {
        if timestamps.len() != rows.nrows() {
            return Err(Error::Argument(format!(
                "{} timestamps for {} feature rows",
                timestamps.len(),
                rows.nrows()
            )));
        }
        let index = timestamps.iter().enumerate().map(|(i, &t)| (time_key(t), i)).collect();
        Ok(StoredFeatures {
            timestamps,
            rows,
            index,
        })
    }

    pub fn row_of(&self, t: f64) -> Option<usize> {
        self.index.get(&time_key(t)).copied()
    }
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    t: f64,
    row: usize,
}

#[derive(Serialize, Deserialize)]
struct SidecarIndex {
    video_id: String,
    modality: Modality,
    rows: Vec<IndexEntry>,
}

/// Precomputed frame features for a set of videos, both modalities.
///
/// On disk every `(video_id, modality)` pair is a binary `.rffs` file
/// (little-endian `"RFFS"`, version, `T`, `D`, then `T*D` row-major `f32`)
/// plus a `.json` sidecar mapping timestamps to row indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    entries: BTreeMap<(String, Modality), StoredFeatures>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, video_id: &str, modality: Modality, features: StoredFeatures) -> Result<()> {
        if features.rows.ncols() != self.dim {
            return Err(Error::Argument(format!(
                "feature dim {} does not match store dim {}",
                features.rows.ncols(),
                self.dim
            )));
        }
        self.entries.insert((video_id.to_string(), modality), features);
        Ok(())
    }

    pub fn get(&self, video_id: &str, modality: Modality) -> Option<&StoredFeatures> {
        self.entries.get(&(video_id.to_string(), modality))
    }

    pub fn keys(&self) -> impl Iterator<Item = &(String, Modality)> {
        self.entries.keys()
    }

    fn lookup(&self, video_id: &str, modality: Modality, timestamps: &[f64]) -> Result<EmbeddingSequence> {
        let missing = |t: f64| Error::MissingFeature {
            video_id: video_id.to_string(),
            modality: modality.to_string(),
            timestamp: t,
        };
        let stored = self
            .get(video_id, modality)
            .ok_or_else(|| missing(timestamps.first().copied().unwrap_or(0.0)))?;
        let mut out = Array2::zeros((timestamps.len(), self.dim));
        for (i, &t) in timestamps.iter().enumerate() {
            let row = stored.row_of(t).ok_or_else(|| missing(t))?;
            out.row_mut(i)
                .iter_mut()
                .zip(stored.rows.row(row))
                .for_each(|(o, &v)| *o = v as f64);
        }
        EmbeddingSequence::new(modality, out, timestamps.to_vec())
    }

    fn file_path(dir: &Path, video_id: &str, modality: Modality, ext: &str) -> PathBuf {
        dir.join(format!("{video_id}.{modality}.{ext}"))
    }

    /// Writes every entry under `dir`. Single writer.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for ((video_id, modality), f) in &self.entries {
            let (t, d) = f.rows.dim();
            let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * t * d);
            bytes.extend_from_slice(STORE_MAGIC);
            bytes.extend_from_slice(&STORE_VERSION.to_le_bytes());
            bytes.extend_from_slice(&(t as u32).to_le_bytes());
            bytes.extend_from_slice(&(d as u32).to_le_bytes());
            for v in f.rows.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::File::create(Self::file_path(dir, video_id, *modality, "rffs"))?.write_all(&bytes)?;
            let sidecar = SidecarIndex {
                video_id: video_id.clone(),
                modality: *modality,
                rows: f
                    .timestamps
                    .iter()
                    .enumerate()
                    .map(|(row, &t)| IndexEntry { t, row })
                    .collect(),
            };
            fs::write(
                Self::file_path(dir, video_id, *modality, "json"),
                serde_json::to_string(&sidecar)?,
            )?;
        }
        Ok(())
    }

    /// Loads every `.rffs` file in `dir` together with its sidecar.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "rffs"))
            .collect();
        paths.sort();
        let mut store: Option<FeatureStore> = None;
        for path in paths {
            let (rows, sidecar) = read_pair(&path)?;
            let mut timestamps = vec![f64::NAN; rows.nrows()];
            for e in &sidecar.rows {
                if e.row >= rows.nrows() {
                    return Err(Error::Format {
                        path: path.clone(),
                        message: format!("sidecar row {} out of range", e.row),
                    });
                }
                timestamps[e.row] = e.t;
            }
            if timestamps.iter().any(|t| t.is_nan()) {
                return Err(Error::Format {
                    path: path.clone(),
                    message: "sidecar does not index every row".into(),
                });
            }
            let store = store.get_or_insert_with(|| FeatureStore::new(rows.ncols()));
            store.insert(
                &sidecar.video_id,
                sidecar.modality,
                StoredFeatures::new(timestamps, rows)?,
            )?;
        }
        store.ok_or_else(|| Error::Format {
            path: dir.to_path_buf(),
            message: "no .rffs feature files found".into(),
        })
    }
}

fn read_pair(path: &Path) -> Result<(Array2<f32>, SidecarIndex)> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != STORE_MAGIC {
        return Err(bad("missing RFFS header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != STORE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (t, d) = (word(8) as usize, word(12) as usize);
    if bytes.len() != HEADER_LEN + 4 * t * d {
        return Err(bad(format!("expected {t}x{d} floats, file has {} bytes", bytes.len())));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let rows = Array2::from_shape_vec((t, d), values).map_err(|e| bad(e.to_string()))?;
    let sidecar_path = path.with_extension("json");
    let sidecar: SidecarIndex =
        serde_json::from_str(&fs::read_to_string(&sidecar_path)?).map_err(|e| Error::Format {
            path: sidecar_path,
            message: e.to_string(),
        })?;
    Ok((rows, sidecar))
}

impl FeatureSource for FeatureStore {
    fn feature_dim(&self) -> usize {
        self.dim
    }

    fn rgb(&self, video_id: &str, timestamps: &[f64]) -> Result<EmbeddingSequence> {
        self.lookup(video_id, Modality::Rgb, timestamps)
    }

    fn flow(&self, video_id: &str, pairs: &[(f64, f64)]) -> Result<EmbeddingSequence> {
        let starts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        self.lookup(video_id, Modality::Flow, &starts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_store() -> FeatureStore {
        let mut store = FeatureStore::new(3);
        let ts = vec![0.0, 0.5, 1.0];
        let rows = Array2::from_shape_fn((3, 3), |(i, j)| (i * 3 + j) as f32 * 0.25 - 1.0);
        store
            .insert(
                "v1",
                Modality::Rgb,
                StoredFeatures::new(ts.clone(), rows.clone()).unwrap(),
            )
            .unwrap();
        store
            .insert("v1", Modality::Flow, StoredFeatures::new(ts, rows).unwrap())
            .unwrap();
        store
    }

    #[test]
    fn lookup_returns_rows_in_requested_order() {
        let store = sample_store();
        let seq = store.rgb("v1", &[1.0, 0.0]).unwrap();
        assert_eq!(seq.vectors.row(0).to_vec(), vec![0.5, 0.75, 1.0]);
        assert_eq!(seq.vectors.row(1).to_vec(), vec![-1.0, -0.75, -0.5]);
        let flow = store.flow("v1", &[(0.5, 1.0)]).unwrap();
        assert_eq!(flow.timestamps, vec![0.5]);
    }

    #[test]
    fn missing_timestamp_names_video_and_time() {
        let store = sample_store();
        match store.rgb("v1", &[0.0, 2.5]) {
            Err(Error::MissingFeature {
                video_id, timestamp, ..
            }) => {
                assert_eq!(video_id, "v1");
                assert_eq!(timestamp, 2.5);
            }
            other => panic!("expected missing feature, got {other:?}"),
        }
        assert!(matches!(store.rgb("v9", &[0.0]), Err(Error::MissingFeature { .. })));
    }

    #[test]
    fn corrupt_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        sample_store().save(dir.path()).unwrap();
        let path = dir.path().join("v1.rgb.rffs");
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(FeatureStore::load(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn header_layout_is_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        sample_store().save(dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("v1.flow.rffs")).unwrap();
        assert_eq!(&bytes[..4], b"RFFS");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        assert_eq!(bytes.len(), 16 + 9 * 4);
    }

    proptest! {
        #[test]
        fn save_load_is_bit_identical(
            values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..40),
            dim in 1usize..5,
        ) {
            let t = values.len() / dim;
            prop_assume!(t >= 1);
            let rows = Array2::from_shape_vec((t, dim), values[..t * dim].to_vec()).unwrap();
            let ts: Vec<f64> = (0..t).map(|i| i as f64 / 30.0).collect();
            let mut store = FeatureStore::new(dim);
            store.insert("clip", Modality::Rgb, StoredFeatures::new(ts, rows).unwrap()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            store.save(dir.path()).unwrap();
            let loaded = FeatureStore::load(dir.path()).unwrap();
            let a = &store.get("clip", Modality::Rgb).unwrap().rows;
            let b = &loaded.get("clip", Modality::Rgb).unwrap().rows;
            prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
            prop_assert_eq!(&store.get("clip", Modality::Rgb).unwrap().timestamps,
                            &loaded.get("clip", Modality::Rgb).unwrap().timestamps);
        }
    }
}
