//! Config-driven experiment pipeline: preprocess, train, generate,
//! evaluate, analyze. Every stage is a pure function of the corpus bytes,
//! the config and its seed; outputs carry the config hash and seed.

mod baselines;
mod config;
mod experiment;
mod preprocess;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use baselines::{run_baselines, BaselineSummary};
pub use config::*;
pub use experiment::{
    analyze_metrics, cell_ids, read_metrics_csv, run_experiment, wilcoxon_options, ExperimentSummary, MetricRow,
};
pub use baselines::{BaselineRow, OrderingCheck};
pub use preprocess::{read_labels, run_preprocess, run_train, train_model_on, ModelInfo, PreprocessSummary, TrainSummary};
pub use report::render_report;

use crate::genre_clf::ClassifierError;
use crate::metrics::MetricError;
use crate::prompting::PromptError;
use crate::score::SegmentError;
use crate::seqmodel::ModelError;
use crate::song::{parse_song, Song, SongError};
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: SongError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    /// Config problems are usage errors, bad inputs are data errors,
    /// anything else is internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Io { .. } | PipelineError::Data(_) | PipelineError::Parse { .. } => 2,
            PipelineError::Model(ModelError::Io(_) | ModelError::Format(_)) => 2,
            PipelineError::Classifier(ClassifierError::InsufficientClassData(_) | ClassifierError::Format(_)) => 2,
            PipelineError::Prompt(PromptError::InsufficientCorpus { .. }) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

/// Replaces a directory's contents so stale files never leak into a rerun.
pub(crate) fn fresh_dir(path: &Path) -> Result<(), PipelineError> {
    if path.exists() {
        fs::remove_dir_all(path).map_err(|e| PipelineError::io(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, &text)
}

/// Token files of a directory, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// File stem used as the song name.
pub fn song_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Parses every token file of a directory; any failure is an error.
pub fn load_corpus(dir: &Path) -> Result<Vec<(String, Song)>, PipelineError> {
    corpus_files(dir)?
        .into_iter()
        .map(|path| {
            let text = read_file(&path)?;
            let song = parse_song(&text).map_err(|source| PipelineError::Parse { path: path.clone(), source })?;
            Ok((song_name(&path), song))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct Provenance {
    pub config_hash: String,
    pub rng_seed: u64,
}

impl Provenance {
    pub fn of(cfg: &PipelineConfig) -> Self {
        Provenance { config_hash: cfg.config_hash(), rng_seed: cfg.rng_seed }
    }
}

pub(crate) fn model_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join("models").join(format!("{name}.json"))
}

pub(crate) fn corpus_path(cfg: &PipelineConfig, variant: &str) -> PathBuf {
    cfg.output_dir.join("corpus").join(variant)
}
