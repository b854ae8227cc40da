use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, KPolicy, SyntheticPolicy};
use super::experiment::RepetitionSeeds;
use super::PipelineError;
use crate::embed::{BuildStats, ExponentMode, QueryCost};

pub const REPORT_SCHEMA: &str = "spd-rp-report";
pub const REPORT_VERSION: u32 = 1;

/// Shortest decimal string that parses back to the same `f64`.
pub fn accuracy_string(value: f64) -> String {
    format!("{value:?}")
}

pub(crate) fn parse_accuracy(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Sample mean and standard deviation (`n − 1` normalization, 0 for one value).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub sigma: f64,
    pub k_policy: KPolicy,
    pub synthetic_policy: SyntheticPolicy,
    /// Validation accuracy of the chosen candidate, when candidates were compared.
    pub validation_accuracy: Option<String>,
    pub candidates_tried: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub sigma: f64,
    pub k: usize,
    pub t: usize,
    /// Size of the hyperplane-construction set, synthetic points included.
    pub p: usize,
    pub synthetic_count: usize,
    pub exponent_mode: ExponentMode,
    pub clamped_mass: f64,
    pub build: BuildStats,
    pub query: QueryCost,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTiming {
    pub synthesis_ms: f64,
    pub build_ms: f64,
    pub embed_ms: f64,
    pub train_ms: f64,
    pub evaluate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub index: usize,
    pub seeds: RepetitionSeeds,
    pub train_count: usize,
    pub validation_count: usize,
    pub test_count: usize,
    pub selection: Selection,
    pub model: ModelMeta,
    pub accuracy: String,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub knn_accuracy: Option<String>,
    pub warnings: Vec<String>,
    pub timing: Option<StageTiming>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub version: u32,
    /// `"ROSE"` or `"ROSES"`.
    pub mode: String,
    pub config: ExperimentConfig,
    pub n_classes: usize,
    pub dim: usize,
    pub repetitions: Vec<RepetitionResult>,
    pub mean_accuracy: String,
    pub std_accuracy: String,
    pub knn_mean_accuracy: Option<String>,
}

impl Report {
    pub(crate) fn assemble(config: &ExperimentConfig, n_classes: usize, dim: usize, repetitions: Vec<RepetitionResult>) -> Self {
        let accs: Vec<f64> = repetitions.iter().map(|r| parse_accuracy(&r.accuracy)).collect();
        let (mean, std) = mean_std(&accs);
        let knn: Option<Vec<f64>> = repetitions
            .iter()
            .map(|r| r.knn_accuracy.as_deref().map(parse_accuracy))
            .collect();
        Report {
            schema: REPORT_SCHEMA.to_string(),
            version: REPORT_VERSION,
            mode: config.mode().to_string(),
            config: config.clone(),
            n_classes,
            dim,
            repetitions,
            mean_accuracy: accuracy_string(mean),
            std_accuracy: accuracy_string(std),
            knn_mean_accuracy: knn.map(|v| accuracy_string(mean_std(&v).0)),
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| parse_accuracy(&r.accuracy)).collect()
    }

    pub fn knn_accuracies(&self) -> Option<Vec<f64>> {
        self.repetitions
            .iter()
            .map(|r| r.knn_accuracy.as_deref().map(parse_accuracy))
            .collect()
    }

    pub fn mean(&self) -> f64 {
        parse_accuracy(&self.mean_accuracy)
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let r: Report = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA || r.version != REPORT_VERSION {
            return Err(PipelineError::Config(format!("unsupported report {} v{}", r.schema, r.version)));
        }
        Ok(r)
    }
}
