use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classifier::SvmParams;
use crate::embed::ExponentMode;
use crate::stein::PsdPolicy;
use crate::synthesis::DirectionMode;

/// Hyperplane count as a multiple of the labeled training-set size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KPolicy {
    N,
    TwoN,
    ThreeN,
    Fixed(usize),
}

impl KPolicy {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            KPolicy::N => n,
            KPolicy::TwoN => 2 * n,
            KPolicy::ThreeN => 3 * n,
            KPolicy::Fixed(k) => k,
        }
    }
}

/// Number of synthetic points added to the hyperplane-construction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticPolicy {
    None,
    /// As many as there are labeled training points.
    TrainCount,
    /// As many as there are training points per class.
    PerClass,
    Fixed(usize),
}

impl SyntheticPolicy {
    pub fn resolve(self, train_count: usize, per_class: usize) -> usize {
        match self {
            SyntheticPolicy::None => 0,
            SyntheticPolicy::TrainCount => train_count,
            SyntheticPolicy::PerClass => per_class,
            SyntheticPolicy::Fixed(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRule {
    pub train_per_class: usize,
    /// `None` puts every remaining sample of a class in the test set.
    #[serde(default)]
    pub test_per_class: Option<usize>,
    pub repetitions: usize,
}

fn default_sigma() -> Vec<f64> {
    vec![1.0]
}

fn default_k() -> Vec<KPolicy> {
    vec![KPolicy::TwoN]
}

fn default_synthetic() -> Vec<SyntheticPolicy> {
    vec![SyntheticPolicy::None]
}

fn default_validation_fraction() -> f64 {
    0.2
}

/// One experiment. Lists with more than one candidate are resolved on a
/// per-class validation holdout inside each training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_sigma")]
    pub sigma: Vec<f64>,
    #[serde(default)]
    pub psd_policy: PsdPolicy,
    #[serde(default = "default_k")]
    pub k: Vec<KPolicy>,
    /// Exemplars per hyperplane; `None` means `min(30, ⌈p/4⌉)`.
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub exponent_mode: ExponentMode,
    #[serde(default = "default_synthetic")]
    pub synthetic: Vec<SyntheticPolicy>,
    #[serde(default)]
    pub direction_mode: DirectionMode,
    pub split: SplitRule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub classifier: SvmParams,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Neighbour count for the Stein nearest-neighbour baseline, run on the
    /// same splits when set.
    #[serde(default)]
    pub knn_baseline: Option<usize>,
    /// Karcher non-convergence aborts the run instead of continuing from the
    /// last iterate.
    #[serde(default)]
    pub strict: bool,
    /// Adds wall-clock stage timings, which makes reports differ between runs.
    #[serde(default)]
    pub record_timing: bool,
}

impl ExperimentConfig {
    pub fn new(split: SplitRule) -> Self {
        ExperimentConfig {
            sigma: default_sigma(),
            psd_policy: PsdPolicy::default(),
            k: default_k(),
            t: None,
            exponent_mode: ExponentMode::default(),
            synthetic: default_synthetic(),
            direction_mode: DirectionMode::default(),
            split,
            seed: 0,
            classifier: SvmParams::default(),
            validation_fraction: default_validation_fraction(),
            knn_baseline: None,
            strict: false,
            record_timing: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn needs_validation(&self) -> bool {
        self.sigma.len() > 1 || self.k.len() > 1 || self.synthetic.len() > 1
    }

    /// `"ROSES"` when any synthetic candidate adds points.
    pub fn mode(&self) -> &'static str {
        if self.synthetic.iter().all(|s| *s == SyntheticPolicy::None || *s == SyntheticPolicy::Fixed(0)) {
            "ROSE"
        } else {
            "ROSES"
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::Config(msg));
        if self.sigma.is_empty() || self.k.is_empty() || self.synthetic.is_empty() {
            return bad("sigma, k and synthetic need at least one candidate".into());
        }
        if let Some(s) = self.sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return bad(format!("sigma must be positive, got {s}"));
        }
        if self.k.contains(&KPolicy::Fixed(0)) {
            return bad("k must be at least 1".into());
        }
        if self.t == Some(0) {
            return bad("t must be at least 1".into());
        }
        if self.split.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.split.train_per_class == 0 {
            return bad("train_per_class must be at least 1".into());
        }
        if self.split.test_per_class == Some(0) {
            return bad("test_per_class must be at least 1".into());
        }
        if !(self.classifier.lambda > 0.0 && self.classifier.lambda.is_finite()) || self.classifier.epochs == 0 {
            return bad("classifier needs lambda > 0 and epochs >= 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation_fraction must lie in (0, 1), got {}", self.validation_fraction));
        }
        if self.needs_validation() && self.split.train_per_class < 2 {
            return bad("validation needs at least 2 training samples per class".into());
        }
        if self.knn_baseline == Some(0) {
            return bad("knn_baseline must be at least 1".into());
        }
        Ok(())
    }

    /// Checks the split against per-class sample counts.
    pub fn validate_against(&self, class_counts: &[usize]) -> Result<(), PipelineError> {
        self.validate()?;
        if class_counts.len() < 2 {
            return Err(PipelineError::Config("need at least two classes".into()));
        }
        let need = self.split.train_per_class + self.split.test_per_class.unwrap_or(1);
        if let Some((class, &have)) = class_counts.iter().enumerate().find(|(_, &c)| c < need) {
            return Err(PipelineError::Config(format!(
                "class {class} has {have} samples, the split needs {need}"
            )));
        }
        Ok(())
    }
}
