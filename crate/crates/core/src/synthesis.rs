//! Intrinsic (Karcher) mean, geodesic rescaling toward a pole, and synthetic
//! SPD points drawn inside the ball spanned by a training set.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::stream_rng;
use crate::spd::{
    geodesic_distance, spd_exp, spd_log, spd_power, symmetrize, whiten, SpdError, SpdMatrix,
};

/// Distances at or below this are treated as "same point" when a direction is
/// needed.
pub const DEGENERATE_DISTANCE: f64 = 1e-12;

/// Redraws allowed per synthetic point before giving up.
pub const MAX_DIRECTION_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("input point set is empty")]
    EmptyInput,
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("Karcher mean did not converge after {iterations} steps (residual {residual:e})")]
    NonConvergence {
        last: Box<SpdMatrix>,
        residual: f64,
        iterations: usize,
    },
    #[error("point coincides with the pole (distance {distance:e}); no geodesic direction")]
    DegenerateDirection { distance: f64 },
    #[error("target distance must be finite and non-negative, got {0}")]
    InvalidDistance(f64),
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    /// Rescale a uniformly chosen training point toward the mean.
    TrainingPoint,
    /// Rescale along a random unit tangent direction at the mean.
    #[default]
    TangentGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub count: usize,
    pub seed: u64,
    pub direction_mode: DirectionMode,
    pub karcher_tol: f64,
    pub karcher_max_iter: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            count: 0,
            seed: 0,
            direction_mode: DirectionMode::TangentGaussian,
            karcher_tol: 1e-8,
            karcher_max_iter: 100,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        if !(self.karcher_tol > 0.0) {
            return Err(SynthesisError::InvalidConfig(format!(
                "karcher_tol must be positive, got {}",
                self.karcher_tol
            )));
        }
        if self.karcher_max_iter == 0 {
            return Err(SynthesisError::InvalidConfig("karcher_max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// A converged intrinsic mean with its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct KarcherMean {
    pub mean: SpdMatrix,
    pub iterations: usize,
    /// `‖(1/n) Σ log_M(X_i)‖_F` at the returned point.
    pub residual: f64,
    /// `tol · (1 + ‖M‖_F)`; `residual <= threshold` always holds.
    pub threshold: f64,
}

fn check_uniform_dim(points: &[SpdMatrix]) -> Result<usize, SynthesisError> {
    let first = points.first().ok_or(SynthesisError::EmptyInput)?;
    let d = first.dim();
    if let Some(bad) = points.iter().find(|x| x.dim() != d) {
        return Err(SpdError::DimensionMismatch {
            left: d,
            right: bad.dim(),
        }
        .into());
    }
    Ok(d)
}

/// Fixed-point iteration `M ← exp_M(mean_i log_M(X_i))` with unit step,
/// started from the arithmetic mean.
pub fn karcher_mean(points: &[SpdMatrix], tol: f64, max_iter: usize) -> Result<KarcherMean, SynthesisError> {
    let d = check_uniform_dim(points)?;
    let n = points.len() as f64;
    let mut sum = DMatrix::zeros(d, d);
    for x in points {
        sum += x.matrix();
    }
    let mut m = SpdMatrix::new(sum / n)?;
    let mut residual = f64::INFINITY;
    for iter in 0..=max_iter {
        let w = m.inv_sqrt();
        let s = m.sqrt();
        let logs: Vec<DMatrix<f64>> = points
            .par_iter()
            .map(|x| spd_log(&whiten_with(&w, x)))
            .collect();
        let mut mean_whitened = DMatrix::zeros(d, d);
        for l in &logs {
            mean_whitened += l;
        }
        mean_whitened /= n;
        let mean_whitened = symmetrize(&mean_whitened);
        residual = (&s * &mean_whitened * &s).norm();
        let threshold = tol * (1.0 + m.matrix().norm());
        if residual <= threshold {
            return Ok(KarcherMean {
                mean: m,
                iterations: iter,
                residual,
                threshold,
            });
        }
        if iter == max_iter {
            break;
        }
        let step = spd_exp(&mean_whitened)?;
        m = SpdMatrix::from_symmetric_unchecked(symmetrize(&(&s * step.matrix() * &s)));
    }
    Err(SynthesisError::NonConvergence {
        last: Box::new(m),
        residual,
        iterations: max_iter,
    })
}

fn whiten_with(inv_sqrt_pole: &DMatrix<f64>, x: &SpdMatrix) -> SpdMatrix {
    SpdMatrix::from_symmetric_unchecked(symmetrize(&(inv_sqrt_pole * x.matrix() * inv_sqrt_pole)))
}

/// The geodesic ball around the training mean that contains every training
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBall {
    pub mean: SpdMatrix,
    pub radius: f64,
}

pub fn training_ball(points: &[SpdMatrix], cfg: &SynthesisConfig) -> Result<TrainingBall, SynthesisError> {
    cfg.validate()?;
    let km = karcher_mean(points, cfg.karcher_tol, cfg.karcher_max_iter)?;
    let radius = points
        .iter()
        .map(|x| geodesic_distance(&km.mean, x))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok(TrainingBall { mean: km.mean, radius })
}

/// The point on the geodesic from `pole` through `x` at distance `zeta` from
/// the pole: `P^{1/2} (P^{-1/2} X P^{-1/2})^c P^{1/2}` with
/// `c = zeta / d_g(P, X)`.
pub fn geodesic_rescale(x: &SpdMatrix, pole: &SpdMatrix, zeta: f64) -> Result<SpdMatrix, SynthesisError> {
    if !(zeta >= 0.0 && zeta.is_finite()) {
        return Err(SynthesisError::InvalidDistance(zeta));
    }
    let distance = geodesic_distance(pole, x)?;
    if distance <= DEGENERATE_DISTANCE {
        return Err(SynthesisError::DegenerateDirection { distance });
    }
    let c = zeta / distance;
    if c == 1.0 {
        return Ok(x.clone());
    }
    let s = pole.sqrt();
    let inner = spd_power(&whiten(pole, x), c);
    Ok(SpdMatrix::from_symmetric_unchecked(symmetrize(&(&s * inner.matrix() * &s))))
}

fn random_unit_direction<R: Rng>(ball: &TrainingBall, rng: &mut R) -> Result<Option<SpdMatrix>, SynthesisError> {
    let d = ball.mean.dim();
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sym = symmetrize(&g);
    let norm = sym.norm();
    if norm <= DEGENERATE_DISTANCE {
        return Ok(None);
    }
    // Unit direction in the whitened tangent space, mapped back through exp.
    let step = spd_exp(&(sym / norm))?;
    let s = ball.mean.sqrt();
    let x = SpdMatrix::from_symmetric_unchecked(symmetrize(&(&s * step.matrix() * &s)));
    Ok(Some(x))
}

fn synthesize_one(
    training: &[SpdMatrix],
    ball: &TrainingBall,
    cfg: &SynthesisConfig,
    index: usize,
) -> Result<SpdMatrix, SynthesisError> {
    let mut rng = stream_rng(cfg.seed, index as u64);
    let mut last_distance = 0.0;
    for _ in 0..MAX_DIRECTION_RETRIES {
        let direction = match cfg.direction_mode {
            DirectionMode::TrainingPoint => Some(training[rng.random_range(0..training.len())].clone()),
            DirectionMode::TangentGaussian => random_unit_direction(ball, &mut rng)?,
        };
        let delta: f64 = rng.random();
        let Some(x) = direction else { continue };
        match geodesic_rescale(&x, &ball.mean, delta * ball.radius) {
            Ok(s) => return Ok(s),
            Err(SynthesisError::DegenerateDirection { distance }) => last_distance = distance,
            Err(e) => return Err(e),
        }
    }
    Err(SynthesisError::DegenerateDirection {
        distance: last_distance,
    })
}

/// Draws `cfg.count` points `s` with `d_g(mean, s) = δ·r`, `δ ~ U[0, 1)`.
///
/// Point `i` uses its own generator stream, so the output does not depend on
/// evaluation order.
pub fn generate_synthetic(training: &[SpdMatrix], cfg: &SynthesisConfig) -> Result<Vec<SpdMatrix>, SynthesisError> {
    if training.len() < 2 {
        return Err(SynthesisError::TooFewPoints {
            needed: 2,
            got: training.len(),
        });
    }
    let ball = training_ball(training, cfg)?;
    generate_in_ball(training, &ball, cfg)
}

/// As [`generate_synthetic`] with a precomputed ball.
pub fn generate_in_ball(
    training: &[SpdMatrix],
    ball: &TrainingBall,
    cfg: &SynthesisConfig,
) -> Result<Vec<SpdMatrix>, SynthesisError> {
    if cfg.count == 0 {
        return Ok(Vec::new());
    }
    if ball.radius <= DEGENERATE_DISTANCE {
        // The ball is a single point.
        return Ok(vec![ball.mean.clone(); cfg.count]);
    }
    (0..cfg.count)
        .into_par_iter()
        .map(|i| synthesize_one(training, ball, cfg, i))
        .collect()
}
