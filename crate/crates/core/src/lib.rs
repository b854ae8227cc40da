//! Random projection embedding of symmetric positive definite matrices.
//!
//! SPD matrices (typically region covariance descriptors) are mapped through
//! the Stein kernel into a reproducing kernel Hilbert space and projected onto
//! randomly drawn hyperplanes there, giving ordinary real vectors that any
//! Euclidean learner can consume. The hyperplane-construction set can be
//! augmented with synthetic points drawn inside the geodesic ball around the
//! training data's Karcher mean.
//!
//! Module map:
//!
//! - [`spd`]: validation, spectral matrix functions, tangent maps and
//!   geodesic distance under the affine-invariant metric.
//! - [`stein`]: Stein divergence, kernel and Gram matrices.
//! - [`synthesis`]: Karcher mean, geodesic rescaling and synthetic points.
//! - [`embed`]: projection models and embeddings.
//! - [`descriptors`]: image feature maps and region covariances.
//! - [`classifier`]: one-vs-all linear SVM and a Stein nearest-neighbour
//!   baseline.
//! - [`pipeline`]: datasets, experiments, degradation studies and reports.

pub mod classifier;
pub mod descriptors;
pub mod embed;
pub mod matrix_text;
pub mod pipeline;
pub mod seeding;
pub mod spd;
pub mod stein;
pub mod synthesis;

pub use embed::{build_projection_model, Embedding, ExponentMode, ProjectionModel, ProjectionOptions};
pub use spd::{SpdError, SpdMatrix};
pub use stein::{KernelParams, PsdPolicy};
