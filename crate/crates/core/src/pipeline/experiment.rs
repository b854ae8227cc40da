use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, KPolicy, SplitRule, SyntheticPolicy};
use super::manifest::Dataset;
use super::report::{accuracy_string, ModelMeta, Report, RepetitionResult, Selection, StageTiming};
use super::{PipelineError, Stage};
use crate::classifier::{evaluate_accuracy, knn_stein, train_ova_svm, Evaluation, LabeledVector, SvmParams};
use crate::embed::{build_projection_model, ProjectionOptions};
use crate::seeding::{derive_seed, stream_rng};
use crate::spd::{geodesic_distance, SpdMatrix};
use crate::stein::{stein_divergence, KernelParams};
use crate::synthesis::{generate_in_ball, karcher_mean, SynthesisConfig, SynthesisError, TrainingBall};

/// Every seed a repetition consumes; replaying a repetition needs only these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepetitionSeeds {
    pub repetition: u64,
    pub split: u64,
    pub synthesis: u64,
    pub projection: u64,
    pub classifier: u64,
}

impl RepetitionSeeds {
    pub fn derive(master: u64, repetition: usize) -> Self {
        let r = derive_seed(master, repetition as u64);
        RepetitionSeeds {
            repetition: r,
            split: derive_seed(r, 1),
            synthesis: derive_seed(r, 2),
            projection: derive_seed(r, 3),
            classifier: derive_seed(r, 4),
        }
    }
}

/// Dataset indices per role; each index appears in at most one list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-class shuffle, then the first `train_per_class` samples train and the
/// next `test_per_class` (or all remaining) test. With a validation fraction,
/// the tail `⌈fraction·train_per_class⌉` of each class's training share is
/// held out instead.
pub fn split_dataset(ds: &Dataset, rule: &SplitRule, validation_fraction: Option<f64>, seed: u64) -> DatasetSplit {
    let mut split = DatasetSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let m = rule.train_per_class;
    let held = validation_fraction.map_or(0, |f| ((f * m as f64).ceil() as usize).clamp(1, m.saturating_sub(1).max(1)));
    for class in 0..ds.n_classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        idx.shuffle(&mut stream_rng(seed, class as u64));
        let test_end = rule.test_per_class.map_or(idx.len(), |t| (m + t).min(idx.len()));
        split.train.extend_from_slice(&idx[..m - held]);
        split.validation.extend_from_slice(&idx[m - held..m]);
        split.test.extend_from_slice(&idx[m..test_end]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Stein divergences from every split point to every training-side point,
/// computed once per repetition.
pub(crate) struct DivergenceTable {
    row_of: Vec<Option<usize>>,
    col_of: Vec<Option<usize>>,
    cols: usize,
    values: Vec<f64>,
}

impl DivergenceTable {
    pub(crate) fn new(ds: &Dataset, rows: &[usize], cols: &[usize]) -> Result<Self, crate::stein::KernelError> {
        let mut row_of = vec![None; ds.len()];
        rows.iter().enumerate().for_each(|(r, &i)| row_of[i] = Some(r));
        let mut col_of = vec![None; ds.len()];
        cols.iter().enumerate().for_each(|(c, &i)| col_of[i] = Some(c));
        let values: Vec<Vec<f64>> = rows
            .par_iter()
            .map(|&i| cols.iter().map(|&j| stein_divergence(&ds.points[j], &ds.points[i])).collect())
            .collect::<Result<_, _>>()?;
        Ok(DivergenceTable {
            row_of,
            col_of,
            cols: cols.len(),
            values: values.concat(),
        })
    }

    fn get(&self, row: usize, col: usize) -> f64 {
        let r = self.row_of[row].expect("row outside divergence table");
        let c = self.col_of[col].expect("column outside divergence table");
        self.values[r * self.cols + c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Candidate {
    pub sigma: f64,
    pub k_policy: KPolicy,
    pub synthetic: SyntheticPolicy,
}

pub(crate) fn candidates(cfg: &ExperimentConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    for &sigma in &cfg.sigma {
        for &k_policy in &cfg.k {
            for &synthetic in &cfg.synthetic {
                out.push(Candidate {
                    sigma,
                    k_policy,
                    synthetic,
                });
            }
        }
    }
    out
}

pub(crate) struct Outcome {
    pub evaluation: Evaluation,
    pub model: ModelMeta,
    pub warnings: Vec<String>,
    pub timing: StageTiming,
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Ball around the Karcher mean of `base`. Outside strict mode a
/// non-converged mean is used as is, with a warning.
fn synthesis_ball(base: &[SpdMatrix], cfg: &SynthesisConfig, strict: bool, warnings: &mut Vec<String>) -> Result<TrainingBall, SynthesisError> {
    let mean = match karcher_mean(base, cfg.karcher_tol, cfg.karcher_max_iter) {
        Ok(km) => km.mean,
        Err(SynthesisError::NonConvergence { last, residual, iterations }) if !strict => {
            warnings.push(format!(
                "Karcher mean stopped after {iterations} iterations with residual {residual:e}; using last iterate"
            ));
            *last
        }
        Err(e) => return Err(e),
    };
    let mut radius = 0.0_f64;
    for x in base {
        radius = radius.max(geodesic_distance(&mean, x)?);
    }
    Ok(TrainingBall { mean, radius })
}

/// Training role of a candidate evaluation.
pub(crate) struct Roles<'a> {
    /// Labeled points the classifier trains on.
    pub train: &'a [usize],
    /// Real points forming the hyperplane-construction set.
    pub hyperplane_base: &'a [usize],
    /// Points the classifier is scored on.
    pub eval: &'a [usize],
}

fn min_class_count(ds: &Dataset, idx: &[usize]) -> usize {
    let mut counts = vec![0usize; ds.n_classes];
    idx.iter().for_each(|&i| counts[ds.labels[i]] += 1);
    counts.into_iter().filter(|&c| c > 0).min().unwrap_or(0)
}

pub(crate) fn evaluate_candidate(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    cand: &Candidate,
    roles: &Roles<'_>,
    table: &DivergenceTable,
    seeds: &RepetitionSeeds,
    repetition: usize,
) -> Result<Outcome, PipelineError> {
    let fail = |stage: Stage| move |e: &dyn std::fmt::Display| PipelineError::stage(repetition, stage, e);
    let mut warnings = Vec::new();
    let mut timing = StageTiming::default();
    let n = roles.train.len();

    let clock = Instant::now();
    let base: Vec<SpdMatrix> = roles.hyperplane_base.iter().map(|&i| ds.points[i].clone()).collect();
    let synth_count = cand.synthetic.resolve(n, min_class_count(ds, roles.train));
    let synthetic = if synth_count == 0 {
        Vec::new()
    } else {
        let scfg = SynthesisConfig {
            count: synth_count,
            seed: seeds.synthesis,
            direction_mode: cfg.direction_mode,
            ..SynthesisConfig::default()
        };
        if base.len() < 2 {
            return Err(fail(Stage::Synthesis)(&"synthesis needs at least two base points"));
        }
        let ball = synthesis_ball(&base, &scfg, cfg.strict, &mut warnings).map_err(|e| fail(Stage::Synthesis)(&e))?;
        generate_in_ball(&base, &ball, &scfg).map_err(|e| fail(Stage::Synthesis)(&e))?
    };
    timing.synthesis_ms = millis(clock);

    let clock = Instant::now();
    let kernel = KernelParams::new(cand.sigma, cfg.psd_policy).map_err(|e| fail(Stage::Projection)(&e))?;
    let mut reference = base;
    reference.extend(synthetic.iter().cloned());
    let opts = ProjectionOptions {
        k: cand.k_policy.resolve(n),
        t: cfg.t,
        kernel,
        exponent_mode: cfg.exponent_mode,
        seed: seeds.projection,
    };
    let model = build_projection_model(&reference, &opts).map_err(|e| fail(Stage::Projection)(&e))?;
    timing.build_ms = millis(clock);

    // Kernel vectors reuse the per-repetition divergence table for real
    // reference points; the values equal `model.kernel_vector` bit for bit.
    let clock = Instant::now();
    let embed = |idx: &[usize]| -> Result<Vec<LabeledVector>, PipelineError> {
        idx.par_iter()
            .map(|&i| {
                let mut kappa = Vec::with_capacity(reference.len());
                for &j in roles.hyperplane_base {
                    kappa.push((-cand.sigma * table.get(i, j)).exp());
                }
                for s in &synthetic {
                    let j = stein_divergence(s, &ds.points[i]).map_err(|e| fail(Stage::Embedding)(&e))?;
                    kappa.push((-cand.sigma * j).exp());
                }
                Ok(LabeledVector::new(model.project_kernel_vector(&kappa).into_coords(), ds.labels[i]))
            })
            .collect()
    };
    let train_vecs = embed(roles.train)?;
    let eval_vecs = embed(roles.eval)?;
    timing.embed_ms = millis(clock);

    let clock = Instant::now();
    let params = SvmParams {
        seed: seeds.classifier,
        ..cfg.classifier
    };
    let clf = train_ova_svm(&train_vecs, &params).map_err(|e| fail(Stage::Training)(&e))?;
    timing.train_ms = millis(clock);

    let clock = Instant::now();
    let evaluation = evaluate_accuracy(&clf, &eval_vecs).map_err(|e| fail(Stage::Evaluation)(&e))?;
    timing.evaluate_ms = millis(clock);

    Ok(Outcome {
        evaluation,
        model: ModelMeta {
            sigma: cand.sigma,
            k: model.k(),
            t: model.t(),
            p: model.p(),
            synthetic_count: synthetic.len(),
            exponent_mode: model.exponent_mode(),
            clamped_mass: model.clamped_mass(),
            build: model.build_stats(),
            query: model.query_cost(),
        },
        warnings,
        timing,
    })
}

fn knn_accuracy(ds: &Dataset, train: &[usize], test: &[usize], kk: usize, repetition: usize) -> Result<f64, PipelineError> {
    let labeled: Vec<(SpdMatrix, usize)> = train.iter().map(|&i| (ds.points[i].clone(), ds.labels[i])).collect();
    let hits: Vec<bool> = test
        .par_iter()
        .map(|&i| knn_stein(&labeled, &ds.points[i], kk).map(|l| l == ds.labels[i]))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::stage(repetition, Stage::Baseline, e))?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

fn run_repetition(ds: &Dataset, cfg: &ExperimentConfig, repetition: usize) -> Result<RepetitionResult, PipelineError> {
    let seeds = RepetitionSeeds::derive(cfg.seed, repetition);
    let cands = candidates(cfg);
    let validate = cands.len() > 1;
    let split = split_dataset(ds, &cfg.split, validate.then_some(cfg.validation_fraction), seeds.split);
    if split.test.is_empty() {
        return Err(PipelineError::stage(repetition, Stage::Split, "empty test set"));
    }
    let train_side: Vec<usize> = split.train.iter().chain(&split.validation).copied().collect();
    let all: Vec<usize> = train_side.iter().chain(&split.test).copied().collect();
    let table = DivergenceTable::new(ds, &all, &train_side).map_err(|e| PipelineError::stage(repetition, Stage::Embedding, e))?;

    let mut chosen = cands[0];
    let mut validation_accuracy = None;
    if validate {
        let roles = Roles {
            train: &split.train,
            hyperplane_base: &split.train,
            eval: &split.validation,
        };
        let mut best = f64::NEG_INFINITY;
        for cand in &cands {
            let out = evaluate_candidate(ds, cfg, cand, &roles, &table, &seeds, repetition)
                .map_err(|e| PipelineError::stage(repetition, Stage::Validation, e))?;
            if out.evaluation.accuracy > best {
                best = out.evaluation.accuracy;
                chosen = *cand;
            }
        }
        validation_accuracy = Some(accuracy_string(best));
    }

    let roles = Roles {
        train: &split.train,
        hyperplane_base: &split.train,
        eval: &split.test,
    };
    let out = evaluate_candidate(ds, cfg, &chosen, &roles, &table, &seeds, repetition)?;
    let knn = cfg
        .knn_baseline
        .map(|kk| knn_accuracy(ds, &split.train, &split.test, kk, repetition))
        .transpose()?;
    Ok(RepetitionResult {
        index: repetition,
        seeds,
        train_count: split.train.len(),
        validation_count: split.validation.len(),
        test_count: split.test.len(),
        selection: Selection {
            sigma: chosen.sigma,
            k_policy: chosen.k_policy,
            synthetic_policy: chosen.synthetic,
            validation_accuracy,
            candidates_tried: cands.len(),
        },
        model: out.model,
        accuracy: accuracy_string(out.evaluation.accuracy),
        correct: out.evaluation.correct,
        total: out.evaluation.total,
        confusion: out.evaluation.confusion,
        knn_accuracy: knn.map(accuracy_string),
        warnings: out.warnings,
        timing: cfg.record_timing.then_some(out.timing),
    })
}

/// Runs every repetition (concurrently) and assembles the report in
/// repetition order.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Report, PipelineError> {
    cfg.validate_against(&ds.class_counts())?;
    let repetitions: Vec<RepetitionResult> = (0..cfg.split.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(ds, cfg, r))
        .collect::<Result<_, _>>()?;
    Ok(Report::assemble(cfg, ds.n_classes, ds.dim(), repetitions))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> Dataset {
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for i in 0..7 {
                let a = (1 + c * 4) as f64 + 0.1 * i as f64;
                points.push(SpdMatrix::from_diagonal(&[a, 1.0 / a]).unwrap());
                labels.push(c);
            }
        }
        Dataset::new(points, labels).unwrap()
    }

    #[test]
    fn split_accounting() {
        let ds = toy_dataset();
        let rule = SplitRule {
            train_per_class: 5,
            test_per_class: None,
            repetitions: 1,
        };
        for frac in [None, Some(0.2)] {
            let s = split_dataset(&ds, &rule, frac, 11);
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            assert_eq!(s.train.len() + s.validation.len(), 15);
            assert_eq!(s.validation.len(), if frac.is_some() { 3 } else { 0 });
        }
        let limited = SplitRule {
            test_per_class: Some(1),
            ..rule
        };
        assert_eq!(split_dataset(&ds, &limited, None, 11).test.len(), 3);
    }

    #[test]
    fn seeds_differ_per_repetition() {
        let a = RepetitionSeeds::derive(5, 0);
        let b = RepetitionSeeds::derive(5, 1);
        assert_ne!(a, b);
        assert_eq!(a, RepetitionSeeds::derive(5, 0));
    }

    #[test]
    fn candidate_grid_order() {
        let mut cfg = ExperimentConfig::new(SplitRule {
            train_per_class: 5,
            test_per_class: None,
            repetitions: 1,
        });
        cfg.sigma = vec![1.0, 2.0];
        cfg.k = vec![KPolicy::N, KPolicy::TwoN];
        let c = candidates(&cfg);
        assert_eq!(c.len(), 4);
        assert_eq!((c[1].sigma, c[1].k_policy), (1.0, KPolicy::TwoN));
        assert_eq!((c[2].sigma, c[2].k_policy), (2.0, KPolicy::N));
    }
}
