//! Dataset ingestion, experiment configuration, the train/evaluate loop, the
//! training-set degradation study, and report emission.

mod benchmark;
mod config;
mod degradation;
mod experiment;
mod manifest;
mod model;
mod report;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use benchmark::{BenchmarkGeometry, WishartBenchmark};
pub use config::{ExperimentConfig, KPolicy, SplitRule, SyntheticPolicy};
pub use degradation::{binomial, class_combinations, degradation_study, CombinationResult, DegradationPoint, DegradationReport};
pub use experiment::{run_experiment, split_dataset, DatasetSplit, RepetitionSeeds};
pub use manifest::{load_dataset, Dataset, DatasetManifest, EntryKind, FeatureMode, GridSpec, ManifestEntry};
pub use model::{train_pipeline, TrainedPipeline, PIPELINE_FORMAT, PIPELINE_VERSION};
pub use report::{accuracy_string, ModelMeta, Report, RepetitionResult, Selection, StageTiming, REPORT_SCHEMA, REPORT_VERSION};

/// Pipeline stage that produced an error inside a repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Split,
    Validation,
    Synthesis,
    Projection,
    Embedding,
    Training,
    Evaluation,
    Baseline,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Split => "split",
            Stage::Validation => "validation",
            Stage::Synthesis => "synthesis",
            Stage::Projection => "projection",
            Stage::Embedding => "embedding",
            Stage::Training => "training",
            Stage::Evaluation => "evaluation",
            Stage::Baseline => "baseline",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("cannot parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{} yields {got}x{got} descriptors, earlier entries gave {expected}x{expected}", path.display())]
    DimensionInconsistency { path: PathBuf, expected: usize, got: usize },
    #[error("cannot exclude {excluded} of {classes} classes")]
    ExclusionExceedsClasses { excluded: usize, classes: usize },
    #[error("repetition {repetition}, {stage} stage: {message}")]
    Stage {
        repetition: usize,
        stage: Stage,
        message: String,
    },
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Errors caused by the configuration rather than by the data.
    pub fn is_config_error(&self) -> bool {
        matches!(self, PipelineError::Config(_) | PipelineError::ExclusionExceedsClasses { .. })
    }

    pub(crate) fn stage(repetition: usize, stage: Stage, err: impl fmt::Display) -> Self {
        PipelineError::Stage {
            repetition,
            stage,
            message: err.to_string(),
        }
    }
}
