//! The `roboformer` command line: `split | train | evaluate | ablate | infer
//! | explain | synth`.
//!
//! Every command reads an optional JSON [`RunConfig`] (`--config`) and
//! applies flag overrides on top. `--features` falls back to the
//! `ROBOFLOW_CACHE` environment variable.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other runtime failure |
//! | 2 | invalid configuration, arguments or input data |
//! | 3 | missing features (the missing items are listed on stderr) |
//! | 4 | no checkpoints found |
//! | 5 | taxonomy mismatch |
//! | 6 | unsupported mode for the checkpoint |

mod commands;
mod config;

pub use config::RunConfig;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::datamodel::{SeparabilityMode, TaskKind};
use crate::model::Ablation;
use crate::training::MissingFeature;
use crate::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_MISSING_FEATURES: u8 = 3;
pub const EXIT_NO_CHECKPOINTS: u8 = 4;
pub const EXIT_TAXONOMY: u8 = 5;
pub const EXIT_UNSUPPORTED: u8 = 6;

/// Failures a command can end with.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{} missing feature(s)", .0.len())]
    MissingFeatures(Vec<MissingFeature>),
    #[error("no checkpoints found under {0}")]
    NoCheckpoints(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::MissingFeatures(_) => EXIT_MISSING_FEATURES,
            CliError::NoCheckpoints(_) => EXIT_NO_CHECKPOINTS,
            CliError::Core(e) => match e.root() {
                Error::Config(_)
                | Error::Validation(_)
                | Error::Argument(_)
                | Error::Parse { .. }
                | Error::DegenerateSegment(_)
                | Error::Length { .. }
                | Error::Format { .. } => EXIT_CONFIG,
                Error::MissingFeature { .. } => EXIT_MISSING_FEATURES,
                Error::Taxonomy(_) => EXIT_TAXONOMY,
                Error::UnsupportedMode(_) => EXIT_UNSUPPORTED,
                _ => EXIT_RUNTIME,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "roboformer",
    version,
    about = "Train, evaluate and apply dual-modality video segment classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Annotation manifest CSV (with `media.json` beside it).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Feature store directory.
    #[arg(long, global = true, env = "ROBOFLOW_CACHE")]
    pub features: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Entropy gate in nats.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub no_tta: bool,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
    #[arg(long, global = true)]
    pub task: Option<TaskKind>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub ablation: Option<Ablation>,
}

fn parse_mode(s: &str) -> Result<SeparabilityMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode {s:?} (content, order, dual, planted)"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write seeded video-level Monte Carlo folds as fold<k>.json.
    Split {
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per fold and test it on the fold's held-out videos.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory of fold<k>.json files; generated from the seed if absent.
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Re-score saved checkpoints on their test videos.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Run directory holding fold<k>/checkpoint.bin and split.json.
        #[arg(long)]
        models: PathBuf,
    },
    /// Train every ablation setting on the same folds and tabulate deltas.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        splits: Option<PathBuf>,
    },
    /// Entropy-gated ensemble timeline over 1 s intervals of unlabeled video.
    Infer {
        #[command(flatten)]
        common: Common,
        /// Checkpoint files or run directories.
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        /// Video to annotate; every video in the media index if absent.
        #[arg(long)]
        video: Option<String>,
    },
    /// Per-frame attention of one segment.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video: String,
        #[arg(long)]
        start: f64,
        #[arg(long)]
        end: f64,
    },
    /// Generate a synthetic dataset: manifest, media index and features.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        videos: usize,
        #[arg(long, default_value_t = 4)]
        segments_per_video: usize,
        #[arg(long, default_value_t = 3.0)]
        min_segment: f64,
        #[arg(long, default_value_t = 5.0)]
        max_segment: f64,
        #[arg(long, default_value_t = 1.0)]
        gap: f64,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value = "content", value_parser = parse_mode)]
        mode: SeparabilityMode,
        #[arg(long, default_value_t = 1.0)]
        signal: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
    },
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::MissingFeatures(list) = &e {
                for m in list {
                    eprintln!("  missing {} {} at t={}", m.video_id, m.modality, m.timestamp);
                }
            }
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}
