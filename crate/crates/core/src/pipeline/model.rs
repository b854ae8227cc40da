use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::RepetitionSeeds;
use super::manifest::Dataset;
use super::PipelineError;
use crate::classifier::{evaluate_accuracy, train_ova_svm, Evaluation, LabeledVector, SvmParams, TrainedClassifier};
use crate::embed::{build_projection_model, ProjectionModel, ProjectionOptions};
use crate::spd::SpdMatrix;
use crate::stein::KernelParams;
use crate::synthesis::{generate_synthetic, SynthesisConfig};

pub const PIPELINE_FORMAT: &str = "spd-rp-pipeline";
pub const PIPELINE_VERSION: u32 = 1;

/// A projection model and the classifier trained on its embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub projection: ProjectionModel,
    pub classifier: TrainedClassifier,
}

#[derive(Serialize, Deserialize)]
struct PipelineFile {
    format: String,
    version: u32,
    projection: serde_json::Value,
    classifier: serde_json::Value,
}

fn data_error(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Manifest(e.to_string())
}

/// Trains on every point of `ds` with the first candidate of each list and
/// the seeds of repetition 0.
pub fn train_pipeline(cfg: &ExperimentConfig, ds: &Dataset) -> Result<TrainedPipeline, PipelineError> {
    cfg.validate()?;
    if ds.n_classes < 2 {
        return Err(PipelineError::Config("need at least two classes".into()));
    }
    let seeds = RepetitionSeeds::derive(cfg.seed, 0);
    let n = ds.len();
    let per_class = ds.class_counts().into_iter().min().unwrap_or(0);
    let count = cfg.synthetic[0].resolve(n, per_class);
    let mut reference = ds.points.clone();
    if count > 0 {
        let scfg = SynthesisConfig {
            count,
            seed: seeds.synthesis,
            direction_mode: cfg.direction_mode,
            ..SynthesisConfig::default()
        };
        reference.extend(generate_synthetic(&ds.points, &scfg).map_err(data_error)?);
    }
    let opts = ProjectionOptions {
        k: cfg.k[0].resolve(n),
        t: cfg.t,
        kernel: KernelParams::new(cfg.sigma[0], cfg.psd_policy).map_err(|e| PipelineError::Config(e.to_string()))?,
        exponent_mode: cfg.exponent_mode,
        seed: seeds.projection,
    };
    let projection = build_projection_model(&reference, &opts).map_err(data_error)?;
    let train = embed_labeled(&projection, &ds.points, &ds.labels)?;
    let params = SvmParams {
        seed: seeds.classifier,
        ..cfg.classifier
    };
    let classifier = train_ova_svm(&train, &params).map_err(data_error)?;
    Ok(TrainedPipeline { projection, classifier })
}

fn embed_labeled(model: &ProjectionModel, points: &[SpdMatrix], labels: &[usize]) -> Result<Vec<LabeledVector>, PipelineError> {
    let embedded = model.embed_batch(points).map_err(data_error)?;
    Ok(embedded
        .into_iter()
        .zip(labels)
        .map(|(e, &l)| LabeledVector::new(e.into_coords(), l))
        .collect())
}

impl TrainedPipeline {
    pub fn predict(&self, x: &SpdMatrix) -> Result<usize, PipelineError> {
        let e = self.projection.embed(x).map_err(data_error)?;
        Ok(self.classifier.predict(e.coords()).map_err(data_error)?.label)
    }

    pub fn predict_batch(&self, points: &[SpdMatrix]) -> Result<Vec<usize>, PipelineError> {
        points.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn evaluate(&self, ds: &Dataset) -> Result<Evaluation, PipelineError> {
        let test = embed_labeled(&self.projection, &ds.points, &ds.labels)?;
        evaluate_accuracy(&self.classifier, &test).map_err(data_error)
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        let projection: serde_json::Value = serde_json::from_str(&self.projection.to_json().map_err(data_error)?)?;
        let classifier: serde_json::Value = serde_json::from_str(&self.classifier.to_text().map_err(data_error)?)?;
        let file = PipelineFile {
            format: PIPELINE_FORMAT.to_string(),
            version: PIPELINE_VERSION,
            projection,
            classifier,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let file: PipelineFile = serde_json::from_str(text).map_err(data_error)?;
        if file.format != PIPELINE_FORMAT || file.version != PIPELINE_VERSION {
            return Err(PipelineError::Manifest(format!(
                "unsupported pipeline file {} v{}",
                file.format, file.version
            )));
        }
        let projection = ProjectionModel::from_json(&file.projection.to_string()).map_err(data_error)?;
        let classifier = TrainedClassifier::from_text(&file.classifier.to_string()).map_err(data_error)?;
        if classifier.dim() != projection.k() {
            return Err(PipelineError::Manifest(format!(
                "classifier expects {} coordinates, projection gives {}",
                classifier.dim(),
                projection.k()
            )));
        }
        Ok(TrainedPipeline { projection, classifier })
    }
}
