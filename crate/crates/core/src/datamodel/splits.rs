use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::DatasetManifest;
use crate::{Error, Result};

pub const TEST_FRACTION: f64 = 0.10;
pub const VAL_FRACTION: f64 = 0.10;
pub const MIN_VIDEOS: usize = 10;

/// Video-level train/validation/test partition of one Monte Carlo fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub seed: u64,
    pub train_video_ids: BTreeSet<String>,
    pub val_video_ids: BTreeSet<String>,
    pub test_video_ids: BTreeSet<String>,
}

impl FoldSplit {
    /// Checks pairwise disjointness and that the sets cover `videos` exactly.
    pub fn validate(&self, videos: &BTreeSet<String>) -> Result<()> {
        let sets = [
            ("train", &self.train_video_ids),
            ("val", &self.val_video_ids),
            ("test", &self.test_video_ids),
        ];
        for i in 0..3 {
            for j in i + 1..3 {
                if let Some(v) = sets[i].1.intersection(sets[j].1).next() {
                    return Err(Error::Validation(format!(
                        "fold {}: video {v} in both {} and {}",
                        self.fold_id, sets[i].0, sets[j].0
                    )));
                }
            }
        }
        let union: BTreeSet<String> = sets.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
        if &union != videos {
            return Err(Error::Validation(format!(
                "fold {}: split sets do not cover the manifest's videos",
                self.fold_id
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// `(n_test, n_val)` for `n_videos` under the 10% / 10%-of-remainder rule,
/// each rounded and floored at one.
pub fn split_counts(n_videos: usize) -> (usize, usize) {
    let n_test = ((TEST_FRACTION * n_videos as f64).round() as usize).max(1);
    let n_val = ((VAL_FRACTION * n_videos.saturating_sub(n_test) as f64).round() as usize).max(1);
    (n_test, n_val)
}

/// Independent seeded video-level splits, one per fold.
pub fn make_monte_carlo_splits(manifest: &DatasetManifest, n_folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let videos = manifest.video_ids();
    if videos.len() < MIN_VIDEOS {
        return Err(Error::Config(format!(
            "Monte Carlo splits need at least {MIN_VIDEOS} videos, manifest has {}",
            videos.len()
        )));
    }
    let (n_test, n_val) = split_counts(videos.len());
    make_splits_with_counts(&videos, n_folds, n_test, n_val, seed)
}

/// Seeded splits with explicit test and validation sizes.
///
/// Fold `k` draws from a ChaCha stream keyed by `(seed, k)`, so folds are
/// independent of each other and of `n_folds`.
pub fn make_splits_with_counts(
    video_ids: &[String],
    n_folds: usize,
    n_test: usize,
    n_val: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if n_folds == 0 {
        return Err(Error::Config("n_folds must be at least 1".into()));
    }
    let mut videos: Vec<String> = video_ids.to_vec();
    videos.sort();
    videos.dedup();
    if n_test == 0 || n_val == 0 || n_test + n_val >= videos.len() {
        return Err(Error::Config(format!(
            "{} videos cannot populate test ({n_test}), validation ({n_val}) and train sets",
            videos.len()
        )));
    }
    let all: BTreeSet<String> = videos.iter().cloned().collect();
    (0..n_folds)
        .map(|fold_id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(fold_id as u64);
            let mut order = videos.clone();
            order.shuffle(&mut rng);
            let split = FoldSplit {
                fold_id,
                seed,
                test_video_ids: order[..n_test].iter().cloned().collect(),
                val_video_ids: order[n_test..n_test + n_val].iter().cloned().collect(),
                train_video_ids: order[n_test + n_val..].iter().cloned().collect(),
            };
            split.validate(&all)?;
            Ok(split)
        })
        .collect()
}
