//! Symmetrized Stein divergence, the Stein kernel and Gram matrices over it.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix_text::format_matrix_text;
use crate::spd::{EigenPair, SpdError, SpdMatrix};

/// Negative eigenvalues smaller in magnitude than this fraction of the
/// largest one are numerical noise.
pub const PSD_TOL_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error(transparent)]
    Spd(#[from] SpdError),
    #[error("kernel bandwidth must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("Gram matrix needs at least one point")]
    EmptyInput,
    #[error("kernel matrix is indefinite (smallest eigenvalue {smallest:e}, largest {largest:e})")]
    IndefiniteKernel { smallest: f64, largest: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsdPolicy {
    /// Fail on eigenvalues below `-PSD_TOL_REL · λ_max`.
    Strict,
    /// Zero out negative eigenvalues once any falls below
    /// `-PSD_TOL_REL · λ_max`, and record how much was removed.
    #[default]
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    sigma: f64,
    psd_policy: PsdPolicy,
}

impl KernelParams {
    pub fn new(sigma: f64, psd_policy: PsdPolicy) -> Result<Self, KernelError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(KernelError::InvalidSigma(sigma));
        }
        Ok(KernelParams { sigma, psd_policy })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn psd_policy(&self) -> PsdPolicy {
        self.psd_policy
    }

    /// Whether σ lies in `{1/2, 1, …, (d−1)/2}`, where the kernel matrix is
    /// known to be positive semidefinite for every point set.
    pub fn in_guaranteed_set(&self, d: usize) -> bool {
        let twice = 2.0 * self.sigma;
        twice.fract() == 0.0 && twice >= 1.0 && twice <= (d as f64 - 1.0)
    }
}

/// `log det((X+Y)/2) − ½ (log det X + log det Y)`, with every log-determinant
/// taken as a sum of log-eigenvalues.
pub fn stein_divergence(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64, KernelError> {
    if x.dim() != y.dim() {
        return Err(SpdError::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        }
        .into());
    }
    let mid = (x.matrix() + y.matrix()) * 0.5;
    let log_det_mid: f64 = mid.symmetric_eigenvalues().iter().map(|l| l.ln()).sum();
    let j = log_det_mid - 0.5 * (x.log_det() + y.log_det());
    Ok(j.max(0.0))
}

/// `exp(−σ J(X, Y))`.
pub fn stein_kernel_value(x: &SpdMatrix, y: &SpdMatrix, params: &KernelParams) -> Result<f64, KernelError> {
    Ok((-params.sigma * stein_divergence(x, y)?).exp())
}

/// A kernel matrix over a point set, repaired to a non-negative spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    eigen: EigenPair,
    clamped_mass: f64,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn eigen(&self) -> &EigenPair {
        &self.eigen
    }

    /// Sum of magnitudes of eigenvalues zeroed during repair.
    pub fn clamped_mass(&self) -> f64 {
        self.clamped_mass
    }

    pub fn to_text(&self) -> String {
        format_matrix_text(&self.entries)
    }

    /// Builds from an explicit symmetric PSD matrix.
    pub fn from_entries(entries: DMatrix<f64>, policy: PsdPolicy) -> Result<Self, KernelError> {
        if entries.nrows() != entries.ncols() {
            return Err(SpdError::NotSquare {
                rows: entries.nrows(),
                cols: entries.ncols(),
            }
            .into());
        }
        if entries.nrows() == 0 {
            return Err(KernelError::EmptyInput);
        }
        repair(entries, policy)
    }
}

fn repair(entries: DMatrix<f64>, policy: PsdPolicy) -> Result<GramMatrix, KernelError> {
    let eigen = EigenPair::of_symmetric(&entries);
    let (smallest, largest) = (eigen.smallest(), eigen.largest());
    // Noise-level negatives are left in place; `gram_power` zeroes them.
    if smallest >= -PSD_TOL_REL * largest.abs() {
        return Ok(GramMatrix {
            entries,
            eigen,
            clamped_mass: 0.0,
        });
    }
    match policy {
        PsdPolicy::Strict => Err(KernelError::IndefiniteKernel { smallest, largest }),
        PsdPolicy::Clamp => {
            let clamped_mass: f64 = eigen.eigenvalues.iter().filter(|l| **l < 0.0).map(|l| -l).sum();
            let mut repaired = eigen;
            repaired.eigenvalues.iter_mut().for_each(|l| *l = l.max(0.0));
            let entries = repaired.map_spectrum(|l| l);
            Ok(GramMatrix {
                entries,
                eigen: repaired,
                clamped_mass,
            })
        }
    }
}

/// Pairwise kernel values. Only the upper triangle is evaluated; the lower
/// one is its mirror.
pub fn gram_matrix(points: &[SpdMatrix], params: &KernelParams) -> Result<GramMatrix, KernelError> {
    let p = points.len();
    if p == 0 {
        return Err(KernelError::EmptyInput);
    }
    let d = points[0].dim();
    if let Some(bad) = points.iter().find(|x| x.dim() != d) {
        return Err(SpdError::DimensionMismatch {
            left: d,
            right: bad.dim(),
        }
        .into());
    }
    let rows: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..p)
                .map(|j| stein_kernel_value(&points[i], &points[j], params))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let mut entries = DMatrix::identity(p, p);
    for (i, row) in rows.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + 1 + offset;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    repair(entries, params.psd_policy)
}

/// Eigenvalues at or below `PSD_TOL_REL · λ_max` map to zero under either
/// exponent, so `K^{-1/2}` is the pseudo-inverse square root.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramExponent {
    Half,
    NegHalf,
}

impl GramExponent {
    pub fn value(self) -> f64 {
        match self {
            GramExponent::Half => 0.5,
            GramExponent::NegHalf => -0.5,
        }
    }
}

pub fn gram_power(k: &GramMatrix, exponent: GramExponent) -> DMatrix<f64> {
    let cutoff = PSD_TOL_REL * k.eigen.largest().max(0.0);
    match exponent {
        GramExponent::Half => k.eigen.map_spectrum(|l| if l > cutoff { l.sqrt() } else { 0.0 }),
        GramExponent::NegHalf => k.eigen.map_spectrum(|l| if l > cutoff { 1.0 / l.sqrt() } else { 0.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(sigma: f64) -> KernelParams {
        KernelParams::new(sigma, PsdPolicy::Strict).unwrap()
    }

    #[test]
    fn divergence_of_point_with_itself_is_zero() {
        let x = SpdMatrix::from_row_slice(3, &[3.0, 0.4, 0.1, 0.4, 2.0, 0.3, 0.1, 0.3, 1.5]).unwrap();
        assert_eq!(stein_divergence(&x, &x).unwrap(), 0.0);
        assert_eq!(stein_kernel_value(&x, &x, &params(3.0)).unwrap(), 1.0);
    }

    #[test]
    fn closed_form_diagonal_divergence() {
        let i2 = SpdMatrix::identity(2);
        let two = SpdMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
        // det((I + 2I)/2) = 1.5², det(I · 2I) = 4
        let expect = 2.0 * 1.5f64.ln() - 2f64.ln();
        assert!((stein_divergence(&i2, &two).unwrap() - expect).abs() < 1e-12);
        let k = stein_kernel_value(&i2, &two, &params(1.0)).unwrap();
        assert!((k - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_decreases_with_sigma() {
        let a = SpdMatrix::from_diagonal(&[1.0, 3.0]).unwrap();
        let b = SpdMatrix::from_diagonal(&[2.0, 1.0]).unwrap();
        let k1 = stein_kernel_value(&a, &b, &params(0.5)).unwrap();
        let k2 = stein_kernel_value(&a, &b, &params(2.0)).unwrap();
        assert!(k1 >= k2);
    }

    #[test]
    fn invalid_sigma_is_rejected() {
        assert!(KernelParams::new(0.0, PsdPolicy::Clamp).is_err());
        assert!(KernelParams::new(f64::NAN, PsdPolicy::Clamp).is_err());
    }

    #[test]
    fn guaranteed_sigma_set() {
        let p = params(1.5);
        assert!(p.in_guaranteed_set(4));
        assert!(!p.in_guaranteed_set(3));
        assert!(!params(0.7).in_guaranteed_set(8));
    }

    #[test]
    fn single_point_and_repeated_points() {
        let x = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let g = gram_matrix(std::slice::from_ref(&x), &params(1.0)).unwrap();
        assert_eq!(g.entries(), &DMatrix::from_element(1, 1, 1.0));

        let g = gram_matrix(&vec![x; 4], &params(1.0)).unwrap();
        assert_eq!(g.entries(), &DMatrix::from_element(4, 4, 1.0));
        assert_eq!(g.clamped_mass(), 0.0);
    }

    #[test]
    fn gram_rejects_empty_and_mixed_dimensions() {
        assert!(matches!(gram_matrix(&[], &params(1.0)), Err(KernelError::EmptyInput)));
        let pts = vec![SpdMatrix::identity(2), SpdMatrix::identity(3)];
        assert!(matches!(gram_matrix(&pts, &params(1.0)), Err(KernelError::Spd(_))));
    }

    #[test]
    fn strict_policy_rejects_indefinite_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GramMatrix::from_entries(m.clone(), PsdPolicy::Strict),
            Err(KernelError::IndefiniteKernel { .. })
        ));
        let g = GramMatrix::from_entries(m, PsdPolicy::Clamp).unwrap();
        assert!((g.clamped_mass() - 1.0).abs() < 1e-12);
        assert!(g.eigen().smallest() >= 0.0);
    }

    #[test]
    fn gram_power_closed_forms() {
        let id = GramMatrix::from_entries(DMatrix::identity(3, 3), PsdPolicy::Strict).unwrap();
        for e in [GramExponent::Half, GramExponent::NegHalf] {
            assert!((gram_power(&id, e) - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        }
        let p = 5;
        let ones = GramMatrix::from_entries(DMatrix::from_element(p, p, 1.0), PsdPolicy::Strict).unwrap();
        let half = gram_power(&ones, GramExponent::Half);
        let expect = DMatrix::from_element(p, p, 1.0 / (p as f64).sqrt());
        assert!((half - expect).norm() < 1e-12);
    }

    #[test]
    fn text_dump_has_header() {
        let g = GramMatrix::from_entries(DMatrix::identity(2, 2), PsdPolicy::Strict).unwrap();
        assert!(g.to_text().starts_with("2\n"));
    }
}
