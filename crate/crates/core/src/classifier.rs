//! One-vs-all linear SVM over embedded vectors, plus a Stein-divergence
//! nearest-neighbour baseline that works on the SPD matrices directly.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::stream_rng;
use crate::spd::SpdMatrix;
use crate::stein::{stein_divergence, KernelError};

pub const CLASSIFIER_FORMAT: &str = "spd-rp-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("no training or test data")]
    EmptyData,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("class {0} has no samples; labels must be dense 0..n-1")]
    MissingClass(usize),
    #[error("vector has {got} coordinates, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in sample {0}")]
    NonFinite(usize),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("training set is empty")]
    EmptyTrain,
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("classifier record: {0}")]
    Format(String),
    #[error("classifier record: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVector {
    pub coords: Vec<f64>,
    pub label: usize,
}

impl LabeledVector {
    pub fn new(coords: Vec<f64>, label: usize) -> Self {
        LabeledVector { coords, label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Per-dimension z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Dimensions whose spread is below `1e-9` of the widest one count as
    /// constant and keep scale 1.
    pub fn fit(data: &[LabeledVector]) -> Self {
        let k = data[0].coords.len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; k];
        for v in data {
            for (m, c) in mean.iter_mut().zip(&v.coords) {
                *m += c;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for v in data {
            for ((s, c), m) in var.iter_mut().zip(&v.coords).zip(&mean) {
                *s += (c - m) * (c - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|s| (s / n).sqrt()).collect();
        let widest = std.iter().copied().fold(0.0, f64::max);
        let scale = std
            .iter()
            .map(|&s| if s > 1e-9 * widest && s > 0.0 { s } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((c, m), s)| (c - m) / s)
            .collect()
    }
}

/// One binary hinge-loss classifier; `bias` is the weight of a constant
/// feature and is regularized with the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective of the best epoch-end averaged iterate seen so far.
    pub epoch_objectives: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `λ/2 (‖w‖² + b²) + mean_i max(0, 1 − y_i (w·x_i + b))`.
pub fn hinge_objective(xs: &[Vec<f64>], ys: &[f64], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let reg = 0.5 * lambda * (dot(weights, weights) + bias * bias);
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(weights, x) + bias)).max(0.0))
        .sum();
    reg + loss / xs.len() as f64
}

/// Pegasos-style stochastic subgradient descent with step `1/(λ·iter)`,
/// projection onto the `1/√λ` ball, and iterate averaging. The returned
/// point is the epoch-end average with the lowest objective. Labels are ±1.
pub fn train_binary(xs: &[Vec<f64>], ys: &[f64], params: &SvmParams, stream: u64) -> BinarySvm {
    let k = xs[0].len();
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut rng = stream_rng(params.seed, stream);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    // Last slot holds the bias.
    let mut w = vec![0.0; k + 1];
    let mut avg = vec![0.0; k + 1];
    let mut step = 0usize;
    let mut best = (f64::INFINITY, avg.clone());
    let mut epoch_objectives = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            step += 1;
            let eta = 1.0 / (lambda * step as f64);
            let x = &xs[i];
            let y = ys[i];
            let margin = y * (dot(&w[..k], x) + w[k]);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, xj) in w[..k].iter_mut().zip(x) {
                    *wj += eta * y * xj;
                }
                w[k] += eta * y;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let f = radius / norm;
                w.iter_mut().for_each(|v| *v *= f);
            }
            let inv = 1.0 / step as f64;
            for (a, v) in avg.iter_mut().zip(&w) {
                *a += (v - *a) * inv;
            }
        }
        let objective = hinge_objective(xs, ys, &avg[..k], avg[k], lambda);
        if objective <= best.0 {
            best = (objective, avg.clone());
        }
        epoch_objectives.push(best.0);
    }
    let mut weights = best.1;
    let bias = weights[k];
    weights.truncate(k);
    BinarySvm {
        weights,
        bias,
        epoch_objectives,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub n_classes: usize,
    /// One row of `k` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub params: SvmParams,
    pub standardizer: Standardizer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Index of the largest score; ties go to the smaller index.
pub fn argmax_smallest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_data(data: &[LabeledVector]) -> Result<(usize, usize), ClassifierError> {
    let first = data.first().ok_or(ClassifierError::EmptyData)?;
    let k = first.coords.len();
    for (i, v) in data.iter().enumerate() {
        if v.coords.len() != k {
            return Err(ClassifierError::DimensionMismatch {
                expected: k,
                got: v.coords.len(),
            });
        }
        if v.coords.iter().any(|c| !c.is_finite()) {
            return Err(ClassifierError::NonFinite(i));
        }
    }
    let n_classes = data.iter().map(|v| v.label).max().unwrap_or(0) + 1;
    Ok((k, n_classes))
}

pub fn train_ova_svm(data: &[LabeledVector], params: &SvmParams) -> Result<TrainedClassifier, ClassifierError> {
    if !(params.lambda > 0.0 && params.lambda.is_finite()) {
        return Err(ClassifierError::InvalidParams(format!("lambda must be positive, got {}", params.lambda)));
    }
    if params.epochs == 0 {
        return Err(ClassifierError::InvalidParams("epochs must be at least 1".into()));
    }
    let (_, n_classes) = check_data(data)?;
    if n_classes < 2 {
        return Err(ClassifierError::SingleClass);
    }
    let mut counts = vec![0usize; n_classes];
    data.iter().for_each(|v| counts[v.label] += 1);
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(ClassifierError::MissingClass(missing));
    }
    let standardizer = Standardizer::fit(data);
    let xs: Vec<Vec<f64>> = data.iter().map(|v| standardizer.apply(&v.coords)).collect();
    let mut weights = Vec::with_capacity(n_classes);
    let mut biases = Vec::with_capacity(n_classes);
    for class in 0..n_classes {
        let ys: Vec<f64> = data
            .iter()
            .map(|v| if v.label == class { 1.0 } else { -1.0 })
            .collect();
        let svm = train_binary(&xs, &ys, params, class as u64);
        weights.push(svm.weights);
        biases.push(svm.bias);
    }
    Ok(TrainedClassifier {
        n_classes,
        weights,
        biases,
        params: *params,
        standardizer,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl TrainedClassifier {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict(&self, coords: &[f64]) -> Result<Prediction, ClassifierError> {
        if coords.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                got: coords.len(),
            });
        }
        let x = self.standardizer.apply(coords);
        let scores: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &x) + b)
            .collect();
        Ok(Prediction {
            label: argmax_smallest(&scores),
            scores,
        })
    }

    pub fn evaluate(&self, test: &[LabeledVector]) -> Result<Evaluation, ClassifierError> {
        evaluate_accuracy(self, test)
    }

    pub fn to_text(&self) -> Result<String, ClassifierError> {
        let record = ClassifierRecord {
            format: CLASSIFIER_FORMAT.to_string(),
            version: CLASSIFIER_VERSION,
            classifier: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_text(text: &str) -> Result<Self, ClassifierError> {
        let record: ClassifierRecord = serde_json::from_str(text)?;
        if record.format != CLASSIFIER_FORMAT || record.version != CLASSIFIER_VERSION {
            return Err(ClassifierError::Format(format!(
                "unsupported record {} v{}",
                record.format, record.version
            )));
        }
        let c = record.classifier;
        let k = c.dim();
        if c.n_classes < 2
            || c.weights.len() != c.n_classes
            || c.biases.len() != c.n_classes
            || c.weights.iter().any(|w| w.len() != k)
            || c.standardizer.scale.len() != k
            || c.standardizer.scale.iter().any(|s| !(*s > 0.0))
        {
            return Err(ClassifierError::Format("inconsistent classifier shape".into()));
        }
        Ok(c)
    }
}

#[derive(Serialize, Deserialize)]
struct ClassifierRecord {
    format: String,
    version: u32,
    classifier: TrainedClassifier,
}

pub fn evaluate_accuracy(clf: &TrainedClassifier, test: &[LabeledVector]) -> Result<Evaluation, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    let n = clf.n_classes.max(test.iter().map(|v| v.label + 1).max().unwrap_or(0));
    let mut confusion = vec![vec![0usize; n]; n];
    let mut correct = 0;
    for v in test {
        let p = clf.predict(&v.coords)?.label;
        confusion[v.label][p] += 1;
        if p == v.label {
            correct += 1;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        correct,
        total: test.len(),
        confusion,
    })
}

/// Majority label among the `kk` training points with the smallest Stein
/// divergence to `query`. Distance ties keep training order; vote ties go to
/// the smaller label.
pub fn knn_stein(train: &[(SpdMatrix, usize)], query: &SpdMatrix, kk: usize) -> Result<usize, ClassifierError> {
    if train.is_empty() {
        return Err(ClassifierError::EmptyTrain);
    }
    if kk == 0 || kk > train.len() {
        return Err(ClassifierError::InvalidParams(format!(
            "neighbour count {kk} must be in 1..={}",
            train.len()
        )));
    }
    let mut dist: Vec<(f64, usize)> = train
        .iter()
        .map(|(x, label)| stein_divergence(x, query).map(|d| (d, *label)))
        .collect::<Result<_, _>>()?;
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = train.iter().map(|(_, l)| l + 1).max().unwrap_or(1);
    let mut votes = vec![0.0; n];
    for &(_, label) in &dist[..kk] {
        votes[label] += 1.0;
    }
    Ok(argmax_smallest(&votes))
}
