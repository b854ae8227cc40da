//! Random projection hyperplanes over the Stein-kernel feature space.
//!
//! A hyperplane is never materialized in feature space. It is a weight
//! vector over `p` reference points,
//!
//! ```text
//! w_j = K^e ((1/t) e_S − (1/p) e)
//! ```
//!
//! where `S` holds `t` reference indices drawn without replacement and `e` is
//! the all-ones vector. A query `X` projects onto hyperplane `j` as
//! `Σ_i w_j(i) κ(X_i, X)`. With `e = −1/2` (pseudo-inverse square root) the
//! hyperplanes are whitened; `e = +1/2` is the alternative form.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::stream_rng;
use crate::spd::{SpdError, SpdMatrix};
use crate::stein::{gram_matrix, gram_power, stein_kernel_value, GramExponent, KernelError, KernelParams, PsdPolicy};

pub const MODEL_FORMAT: &str = "spd-rp-projection-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("need at least 2 reference points, got {0}")]
    TooFewReferencePoints(usize),
    #[error("hyperplane count must be at least 1")]
    InvalidHyperplaneCount,
    #[error("exemplar count t = {t} exceeds reference set size p = {p}")]
    TSampleTooLarge { t: usize, p: usize },
    #[error("exemplar count t must be at least 1")]
    InvalidExemplarCount,
    #[error("query dimension {got} does not match reference dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("model file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// `K^{-1/2}` (pseudo-inverse square root).
    #[default]
    Whitening,
    /// `K^{+1/2}`.
    SquareRoot,
}

impl ExponentMode {
    pub fn gram_exponent(self) -> GramExponent {
        match self {
            ExponentMode::Whitening => GramExponent::NegHalf,
            ExponentMode::SquareRoot => GramExponent::Half,
        }
    }
}

/// `min(30, ⌈p/4⌉)`, at least 1.
pub fn default_exemplar_count(p: usize) -> usize {
    p.div_ceil(4).clamp(1, 30)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub k: usize,
    /// Exemplars per hyperplane; `None` means [`default_exemplar_count`].
    pub t: Option<usize>,
    pub kernel: KernelParams,
    pub exponent_mode: ExponentMode,
    pub seed: u64,
}

/// Work done while building a model, counted in the loops that do it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    /// Off-diagonal kernel evaluations for the Gram matrix, `p(p−1)/2`.
    pub kernel_evaluations: usize,
    /// Order of the eigendecomposition behind `K^e`, i.e. `p`.
    pub gram_order: usize,
    /// Multiply-adds spent forming the weight columns, `k·p·(t+1)`.
    pub weight_multiply_adds: usize,
}

/// Work per query point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCost {
    pub kernel_evaluations: usize,
    pub projection_multiply_adds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    reference: Vec<SpdMatrix>,
    kernel: KernelParams,
    /// `p × k`; column `j` is hyperplane `j`.
    weights: DMatrix<f64>,
    t: usize,
    exponent_mode: ExponentMode,
    seed: u64,
    clamped_mass: f64,
    stats: BuildStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(coords: Vec<f64>) -> Self {
        Embedding(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn squared_distance(&self, other: &Embedding) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Sign quantization; ties (`0.0`) map to `true`.
pub fn binarize(e: &Embedding) -> Vec<bool> {
    e.0.iter().map(|&c| c >= 0.0).collect()
}

/// Hamming distance between two bit codes of equal length.
pub fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn exemplar_indices(seed: u64, hyperplane: usize, p: usize, t: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, hyperplane as u64);
    let mut idx = index::sample(&mut rng, p, t).into_vec();
    idx.sort_unstable();
    idx
}

/// Column `(1/t) Σ_{l∈S} K^e[:, l] − (1/p) Σ_l K^e[:, l]`.
fn weight_column(ke: &DMatrix<f64>, subset: &[usize], row_sums: &[f64]) -> Vec<f64> {
    let p = ke.nrows();
    let t = subset.len() as f64;
    (0..p)
        .map(|i| {
            let mut s = 0.0;
            for &l in subset {
                s += ke[(i, l)];
            }
            s / t - row_sums[i] / p as f64
        })
        .collect()
}

pub fn build_projection_model(train: &[SpdMatrix], opts: &ProjectionOptions) -> Result<ProjectionModel, EmbedError> {
    let p = train.len();
    if p < 2 {
        return Err(EmbedError::TooFewReferencePoints(p));
    }
    if opts.k == 0 {
        return Err(EmbedError::InvalidHyperplaneCount);
    }
    let t = opts.t.unwrap_or_else(|| default_exemplar_count(p));
    if t == 0 {
        return Err(EmbedError::InvalidExemplarCount);
    }
    if t > p {
        return Err(EmbedError::TSampleTooLarge { t, p });
    }
    let gram = gram_matrix(train, &opts.kernel)?;
    let ke = gram_power(&gram, opts.exponent_mode.gram_exponent());
    let all: Vec<usize> = (0..p).collect();
    let row_sums: Vec<f64> = (0..p)
        .map(|i| {
            let mut s = 0.0;
            for &l in &all {
                s += ke[(i, l)];
            }
            s
        })
        .collect();
    let columns: Vec<Vec<f64>> = (0..opts.k)
        .into_par_iter()
        .map(|j| weight_column(&ke, &exemplar_indices(opts.seed, j, p, t), &row_sums))
        .collect();
    let mut weights = DMatrix::zeros(p, opts.k);
    for (j, col) in columns.iter().enumerate() {
        for (i, &w) in col.iter().enumerate() {
            weights[(i, j)] = w;
        }
    }
    Ok(ProjectionModel {
        reference: train.to_vec(),
        kernel: opts.kernel,
        weights,
        t,
        exponent_mode: opts.exponent_mode,
        seed: opts.seed,
        clamped_mass: gram.clamped_mass(),
        stats: build_stats(p, opts.k, t),
    })
}

fn build_stats(p: usize, k: usize, t: usize) -> BuildStats {
    BuildStats {
        kernel_evaluations: p * (p - 1) / 2,
        gram_order: p,
        weight_multiply_adds: k * p * (t + 1),
    }
}

impl ProjectionModel {
    pub fn reference_points(&self) -> &[SpdMatrix] {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.reference[0].dim()
    }

    pub fn p(&self) -> usize {
        self.reference.len()
    }

    pub fn k(&self) -> usize {
        self.weights.ncols()
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn exponent_mode(&self) -> ExponentMode {
        self.exponent_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn build_stats(&self) -> BuildStats {
        self.stats
    }

    pub fn query_cost(&self) -> QueryCost {
        QueryCost {
            kernel_evaluations: self.p(),
            projection_multiply_adds: self.p() * self.k(),
        }
    }

    /// `κ(X) = (K(X_1, X), …, K(X_p, X))`.
    pub fn kernel_vector(&self, x: &SpdMatrix) -> Result<Vec<f64>, EmbedError> {
        if x.dim() != self.dim() {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        self.reference
            .iter()
            .map(|r| stein_kernel_value(r, x, &self.kernel).map_err(EmbedError::from))
            .collect()
    }

    /// `Wᵀ κ`, summed in reference order.
    pub fn project_kernel_vector(&self, kappa: &[f64]) -> Embedding {
        let (p, k) = self.weights.shape();
        let mut coords = vec![0.0; k];
        for (j, c) in coords.iter_mut().enumerate() {
            let mut s = 0.0;
            for i in 0..p {
                s += self.weights[(i, j)] * kappa[i];
            }
            *c = s;
        }
        Embedding(coords)
    }

    pub fn embed(&self, x: &SpdMatrix) -> Result<Embedding, EmbedError> {
        Ok(self.project_kernel_vector(&self.kernel_vector(x)?))
    }

    /// Parallel over points; identical to calling [`Self::embed`] on each.
    pub fn embed_batch(&self, points: &[SpdMatrix]) -> Result<Vec<Embedding>, EmbedError> {
        points.par_iter().map(|x| self.embed(x)).collect()
    }

    /// A model that keeps only the first `k` hyperplanes. Hyperplanes are
    /// independently seeded, so this equals a fresh build with that `k`.
    pub fn truncated(&self, k: usize) -> Result<ProjectionModel, EmbedError> {
        if k == 0 || k > self.k() {
            return Err(EmbedError::InvalidHyperplaneCount);
        }
        let mut m = self.clone();
        m.weights = self.weights.columns(0, k).into_owned();
        m.stats = build_stats(self.p(), k, self.t);
        Ok(m)
    }

    /// Exact expectation of `(1/k) ‖f(u) − f(v)‖²` under the exemplar
    /// sampling distribution.
    pub fn distance_oracle(&self) -> Result<DistanceOracle, EmbedError> {
        let gram = gram_matrix(&self.reference, &self.kernel)?;
        let ke = gram_power(&gram, self.exponent_mode.gram_exponent());
        let p = self.p() as f64;
        let t = self.t as f64;
        Ok(DistanceOracle {
            ke,
            scale: (p - t) / (t * p * (p - 1.0)),
        })
    }

    pub fn to_json(&self) -> Result<String, EmbedError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dim: self.dim(),
            p: self.p(),
            k: self.k(),
            t: self.t,
            sigma: self.kernel.sigma(),
            psd_policy: self.kernel.psd_policy(),
            exponent_mode: self.exponent_mode,
            seed: self.seed,
            clamped_mass: self.clamped_mass,
            reference: self.reference.iter().map(SpdMatrix::to_row_major).collect(),
            weights: (0..self.p())
                .map(|i| self.weights.row(i).iter().copied().collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<ProjectionModel, EmbedError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(EmbedError::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(EmbedError::Format(format!("unsupported version {}", file.version)));
        }
        if file.p < 2 || file.reference.len() != file.p || file.weights.len() != file.p {
            return Err(EmbedError::Format("reference/weight row count does not match p".into()));
        }
        if file.k == 0 || file.t == 0 || file.t > file.p {
            return Err(EmbedError::Format("invalid k or t".into()));
        }
        let reference = file
            .reference
            .iter()
            .map(|entries| SpdMatrix::from_row_slice(file.dim, entries))
            .collect::<Result<Vec<_>, _>>()?;
        let mut weights = DMatrix::zeros(file.p, file.k);
        for (i, row) in file.weights.iter().enumerate() {
            if row.len() != file.k {
                return Err(EmbedError::Format(format!("weight row {i} has {} entries", row.len())));
            }
            for (j, &w) in row.iter().enumerate() {
                weights[(i, j)] = w;
            }
        }
        Ok(ProjectionModel {
            reference,
            kernel: KernelParams::new(file.sigma, file.psd_policy)?,
            weights,
            t: file.t,
            exponent_mode: file.exponent_mode,
            seed: file.seed,
            clamped_mass: file.clamped_mass,
            stats: build_stats(file.p, file.k, file.t),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dim: usize,
    p: usize,
    k: usize,
    t: usize,
    sigma: f64,
    psd_policy: PsdPolicy,
    exponent_mode: ExponentMode,
    seed: u64,
    clamped_mass: f64,
    /// Row-major `d × d` entries per reference point.
    reference: Vec<Vec<f64>>,
    /// `p` rows of `k` weights.
    weights: Vec<Vec<f64>>,
}

/// Expected squared embedding distance per hyperplane:
/// `α ‖C K^e (κ_u − κ_v)‖²`, with `C = I − eeᵀ/p` and
/// `α = (p − t) / (t p (p − 1))` the covariance scale of `e_S / t`.
#[derive(Debug, Clone)]
pub struct DistanceOracle {
    ke: DMatrix<f64>,
    scale: f64,
}

impl DistanceOracle {
    pub fn expected_sq_distance(&self, kappa_u: &[f64], kappa_v: &[f64]) -> f64 {
        let delta = DVector::from_iterator(kappa_u.len(), kappa_u.iter().zip(kappa_v).map(|(a, b)| a - b));
        let mut z = &self.ke * delta;
        let mean = z.mean();
        z.add_scalar_mut(-mean);
        self.scale * z.norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlReport {
    pub k: usize,
    pub epsilon: f64,
    pub pair_count: usize,
    /// Pairs with `(1−ε) D ≤ (1/k)‖f(u)−f(v)‖² ≤ (1+ε) D`.
    pub within_fraction: f64,
    /// Median of `(1/k)‖f(u)−f(v)‖² / D`.
    pub median_distortion: f64,
    /// Median of `|ratio − 1|`.
    pub median_relative_deviation: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Pairwise comparison of embedded distances against the oracle. Pairs whose
/// oracle and embedded distances are both zero count as within bounds with
/// ratio 1.
pub fn jl_distortion_report(
    model: &ProjectionModel,
    points: &[SpdMatrix],
    epsilon: f64,
) -> Result<JlReport, EmbedError> {
    if points.len() < 2 {
        return Err(EmbedError::TooFewReferencePoints(points.len()));
    }
    let oracle = model.distance_oracle()?;
    let kappas: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| model.kernel_vector(x))
        .collect::<Result<_, _>>()?;
    let embeddings: Vec<Embedding> = kappas.iter().map(|k| model.project_kernel_vector(k)).collect();
    let k = model.k() as f64;
    let mut ratios = Vec::new();
    let mut deviations = Vec::new();
    let mut within = 0usize;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let truth = oracle.expected_sq_distance(&kappas[i], &kappas[j]);
            let est = embeddings[i].squared_distance(&embeddings[j]) / k;
            let ratio = if truth == 0.0 {
                if est == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                est / truth
            };
            if (1.0 - epsilon..=1.0 + epsilon).contains(&ratio) {
                within += 1;
            }
            ratios.push(ratio);
            deviations.push((ratio - 1.0).abs());
        }
    }
    let pair_count = ratios.len();
    Ok(JlReport {
        k: model.k(),
        epsilon,
        pair_count,
        within_fraction: within as f64 / pair_count as f64,
        median_distortion: median(&mut ratios),
        median_relative_deviation: median(&mut deviations),
    })
}
