//! Versioned binary checkpoints.
//!
//! Layout (little-endian): magic `RFCK`, version `u32`, header length `u64`,
//! the JSON header, then every tensor as `f64` values in the order listed in
//! the header.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::datamodel::Taxonomy;
use crate::encoder::{EncoderConfig, ParamTensors, ProjectionHeadParams, TemporalEncoderParams};
use crate::model::{Ablation, Model};
use crate::prototypes::PrototypeBank;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-segment loss over the epoch.
    pub train_loss: f64,
    /// Sum of the batch losses used for the gradients.
    pub train_loss_sum: f64,
    pub val_macro_auc: Option<f64>,
    /// Mean per-segment validation loss on the base sampling.
    #[serde(default)]
    pub val_loss: Option<f64>,
}

/// Trained parameters with everything needed to reuse them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub taxonomy: Taxonomy,
    pub config: TrainConfig,
    pub fold_id: usize,
    pub seed: u64,
    pub best_epoch: usize,
    /// Mean training loss before the first update.
    pub initial_train_loss: f64,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: EncoderConfig,
    taxonomy: Taxonomy,
    seed: u64,
    fold_id: usize,
    ablation: Ablation,
    temperature: f64,
    config: TrainConfig,
    best_epoch: usize,
    initial_train_loss: f64,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

impl ModelCheckpoint {
    pub fn ablation(&self) -> Ablation {
        self.model.ablation
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.model.tensors();
        let header = Header {
            dims: self.model.config().clone(),
            taxonomy: self.taxonomy.clone(),
            seed: self.seed,
            fold_id: self.fold_id,
            ablation: self.model.ablation,
            temperature: self.model.bank.temperature,
            config: self.config.clone(),
            best_epoch: self.best_epoch,
            initial_train_loss: self.initial_train_loss,
            history: self.history.clone(),
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    len: t.len(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 8 * self.model.num_params());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in tensors {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(format_error(path, "not a checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(format_error(path, format!("unsupported checkpoint version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = 16usize
            .checked_add(header_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| format_error(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body]).map_err(|e| format_error(path, e.to_string()))?;
        header.dims.validate()?;

        let mut model = Model {
            encoder: TemporalEncoderParams::zeros(&header.dims),
            head: ProjectionHeadParams::zeros(header.dims.dim, header.dims.proj_hidden, header.dims.proj_dim),
            bank: PrototypeBank {
                codes: header.taxonomy.categories.clone(),
                prototypes: Array2::zeros((header.taxonomy.len(), header.dims.proj_dim)),
                temperature: header.temperature,
            },
            ablation: header.ablation,
        };
        let mut offset = body;
        {
            let tensors = model.tensors_mut();
            if tensors.len() != header.tensors.len() {
                return Err(format_error(path, "tensor count does not match dimensions"));
            }
            for ((name, dst), entry) in tensors.into_iter().zip(&header.tensors) {
                if name != entry.name || dst.len() != entry.len {
                    return Err(format_error(
                        path,
                        format!("tensor {} has unexpected shape", entry.name),
                    ));
                }
                let end = offset + 8 * dst.len();
                if end > bytes.len() {
                    return Err(format_error(path, "truncated tensor data"));
                }
                for (v, chunk) in dst.iter_mut().zip(bytes[offset..end].chunks_exact(8)) {
                    *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
                }
                offset = end;
            }
        }
        if offset != bytes.len() {
            return Err(format_error(path, "trailing bytes after tensors"));
        }
        Ok(ModelCheckpoint {
            model,
            taxonomy: header.taxonomy,
            config: header.config,
            fold_id: header.fold_id,
            seed: header.seed,
            best_epoch: header.best_epoch,
            initial_train_loss: header.initial_train_loss,
            history: header.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?, path)
    }

    /// Training log as JSON lines: `{epoch, train_loss, train_loss_sum,
    /// val_macro_auc, val_loss}`.
    pub fn log_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(&serde_json::json!({
                "epoch": r.epoch,
                "train_loss": r.train_loss,
                "train_loss_sum": r.train_loss_sum,
                "val_macro_auc": r.val_macro_auc,
                "val_loss": r.val_loss,
            }))?);
            out.push('\n');
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::TaskKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn checkpoint() -> ModelCheckpoint {
        let config = TrainConfig {
            encoder: EncoderConfig::small(8, 2, 4, 8),
            ablation: Ablation::NoFlow,
            ..TrainConfig::default()
        };
        let taxonomy = TaskKind::SuturingGesture.taxonomy();
        let model = Model::init(
            &config.encoder,
            &taxonomy,
            config.ablation,
            0.5,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        ModelCheckpoint {
            model,
            taxonomy,
            config,
            fold_id: 3,
            seed: 9,
            best_epoch: 1,
            initial_train_loss: 1.25,
            history: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                train_loss_sum: 2.4,
                val_macro_auc: None,
                val_loss: Some(0.7),
            }],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        let ck = checkpoint();
        ck.save(&path).unwrap();
        let back = ModelCheckpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), ck.to_bytes().unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let ck = checkpoint();
        let bytes = ck.to_bytes().unwrap();
        let p = Path::new("x");
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 1], p),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bad, p),
            Err(Error::Format { .. })
        ));
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(matches!(ModelCheckpoint::from_bytes(&v2, p), Err(Error::Format { .. })));
    }

    #[test]
    fn log_is_json_lines() {
        let text = checkpoint().log_lines().unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["epoch"], 1);
        assert!(v["val_macro_auc"].is_null());
    }
}
