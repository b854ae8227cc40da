use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SyntheticPolicy};
use super::experiment::{evaluate_candidate, split_dataset, Candidate, DivergenceTable, RepetitionSeeds, Roles};
use super::manifest::Dataset;
use super::report::{accuracy_string, mean_std, REPORT_SCHEMA, REPORT_VERSION};
use super::{PipelineError, Stage};

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// All `c`-subsets of `0..n` in lexicographic order.
pub fn class_combinations(n: usize, c: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=n - left {
            cur.push(i);
            extend(i + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if c <= n {
        extend(0, n, c, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub excluded_classes: Vec<usize>,
    /// Per-repetition accuracies.
    pub rose: Vec<String>,
    pub roses: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationPoint {
    pub excluded: usize,
    pub combinations: usize,
    /// Mean over combinations and repetitions.
    pub rose_accuracy: String,
    pub roses_accuracy: String,
    pub per_combination: Vec<CombinationResult>,
}

impl DegradationPoint {
    pub fn rose(&self) -> f64 {
        self.rose_accuracy.parse().unwrap_or(f64::NAN)
    }

    pub fn roses(&self) -> f64 {
        self.roses_accuracy.parse().unwrap_or(f64::NAN)
    }

    pub fn gap(&self) -> f64 {
        self.roses() - self.rose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub schema: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub synthetic_policy: SyntheticPolicy,
    pub points: Vec<DegradationPoint>,
}

impl DegradationReport {
    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// For each exclusion count `c`, rebuilds the projection from the training
/// data of the remaining classes (every combination of excluded classes),
/// once without and once with synthetic augmentation. The classifier always
/// trains on the full training split. Uses the first σ and k candidates and
/// the first synthetic policy that adds points.
pub fn degradation_study(cfg: &ExperimentConfig, ds: &Dataset, excluded_counts: &[usize]) -> Result<DegradationReport, PipelineError> {
    cfg.validate_against(&ds.class_counts())?;
    let n = ds.n_classes;
    if let Some(&c) = excluded_counts.iter().find(|&&c| c >= n) {
        return Err(PipelineError::ExclusionExceedsClasses { excluded: c, classes: n });
    }
    let policy = *cfg
        .synthetic
        .iter()
        .find(|s| s.resolve(1, 1) > 0)
        .ok_or_else(|| PipelineError::Config("degradation study needs a synthetic policy that adds points".into()))?;
    let rose = Candidate {
        sigma: cfg.sigma[0],
        k_policy: cfg.k[0],
        synthetic: SyntheticPolicy::None,
    };
    let roses = Candidate {
        synthetic: policy,
        ..rose
    };

    // results[rep][count][combination] = (rose, roses)
    let results: Vec<Vec<Vec<(f64, f64)>>> = (0..cfg.split.repetitions)
        .into_par_iter()
        .map(|rep| {
            let seeds = RepetitionSeeds::derive(cfg.seed, rep);
            let split = split_dataset(ds, &cfg.split, None, seeds.split);
            let all: Vec<usize> = split.train.iter().chain(&split.test).copied().collect();
            let table =
                DivergenceTable::new(ds, &all, &split.train).map_err(|e| PipelineError::stage(rep, Stage::Embedding, e))?;
            excluded_counts
                .iter()
                .map(|&c| {
                    class_combinations(n, c)
                        .iter()
                        .map(|excluded| {
                            let base: Vec<usize> =
                                split.train.iter().copied().filter(|&i| !excluded.contains(&ds.labels[i])).collect();
                            let roles = Roles {
                                train: &split.train,
                                hyperplane_base: &base,
                                eval: &split.test,
                            };
                            let a = evaluate_candidate(ds, cfg, &rose, &roles, &table, &seeds, rep)?;
                            let b = evaluate_candidate(ds, cfg, &roses, &roles, &table, &seeds, rep)?;
                            Ok((a.evaluation.accuracy, b.evaluation.accuracy))
                        })
                        .collect::<Result<Vec<_>, PipelineError>>()
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    let points = excluded_counts
        .iter()
        .enumerate()
        .map(|(ci, &c)| {
            let combos = class_combinations(n, c);
            let mut rose_all = Vec::new();
            let mut roses_all = Vec::new();
            let per_combination = combos
                .iter()
                .enumerate()
                .map(|(k, excluded)| {
                    let rose: Vec<f64> = results.iter().map(|r| r[ci][k].0).collect();
                    let roses: Vec<f64> = results.iter().map(|r| r[ci][k].1).collect();
                    rose_all.extend(&rose);
                    roses_all.extend(&roses);
                    CombinationResult {
                        excluded_classes: excluded.clone(),
                        rose: rose.into_iter().map(accuracy_string).collect(),
                        roses: roses.into_iter().map(accuracy_string).collect(),
                    }
                })
                .collect();
            DegradationPoint {
                excluded: c,
                combinations: combos.len(),
                rose_accuracy: accuracy_string(mean_std(&rose_all).0),
                roses_accuracy: accuracy_string(mean_std(&roses_all).0),
                per_combination,
            }
        })
        .collect();
    Ok(DegradationReport {
        schema: format!("{REPORT_SCHEMA}-degradation"),
        version: REPORT_VERSION,
        config: cfg.clone(),
        synthetic_policy: policy,
        points,
    })
}
