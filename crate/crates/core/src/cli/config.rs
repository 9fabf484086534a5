use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datamodel::TaskKind;
use crate::features::FeatureExtractorConfig;
use crate::training::TrainConfig;
use crate::{Error, Result};

/// Everything a run needs, stored as one JSON file. Command-line flags
/// override the corresponding fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub extractor: FeatureExtractorConfig,
    pub manifest: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Required when the manifest holds labels for more than one task.
    pub task: Option<TaskKind>,
    pub n_folds: usize,
    /// Entropy gate in nats; `None` means half the maximum entropy.
    pub threshold: Option<f64>,
    pub jobs: usize,
    pub use_tta: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            extractor: FeatureExtractorConfig::default(),
            manifest: None,
            features: None,
            out: None,
            task: None,
            n_folds: 10,
            threshold: None,
            jobs: 1,
            use_tta: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.extractor.validate()?;
        if self.n_folds == 0 {
            return Err(Error::Config("n_folds must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if let Some(t) = self.threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!(
                    "threshold must be a finite non-negative number, got {t}"
                )));
            }
        }
        Ok(())
    }

    /// The path stored under `name`, which must exist.
    pub fn existing(path: Option<&PathBuf>, name: &str) -> Result<PathBuf> {
        let p = path.ok_or_else(|| Error::Config(format!("--{name} is required")))?;
        if !p.exists() {
            return Err(Error::Config(format!("{name} path {} does not exist", p.display())));
        }
        Ok(p.clone())
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }
}
