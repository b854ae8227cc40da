//! Symmetric positive definite matrices under the affine-invariant metric.
//!
//! Every matrix function here (log, exp, fractional powers, inverse square
//! roots) goes through one symmetric eigendecomposition:
//!
//! ```text
//! f(X) = U diag(f(λ)) Uᵀ
//! log_P(X) = P^{1/2} log(P^{-1/2} X P^{-1/2}) P^{1/2}
//! exp_P(V) = P^{1/2} exp(P^{-1/2} V P^{-1/2}) P^{1/2}
//! d_g(X, Y)² = tr log²(X^{-1/2} Y X^{-1/2})
//! ```

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

/// Relative asymmetry accepted by [`validate_spd`] when callers have no
/// better bound.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Inputs whose smallest eigenvalue falls at or below this fraction of the
/// largest one are treated as numerically singular.
pub const EIGEN_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpdError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("asymmetry {asymmetry:e} exceeds tolerance {allowed:e}")]
    AsymmetryExceedsTolerance { asymmetry: f64, allowed: f64 },
    #[error("matrix is not positive definite (smallest eigenvalue {smallest:e}, largest {largest:e})")]
    NotPositiveDefinite { smallest: f64, largest: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("malformed matrix text: {0}")]
    Parse(String),
}

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenPair {
    /// Decomposes a symmetric matrix. Only the symmetric part is meaningful.
    pub fn of_symmetric(m: &DMatrix<f64>) -> Self {
        let eig = SymmetricEigen::new(m.clone());
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut eigenvectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        EigenPair { eigenvalues, eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `U diag(f(λ)) Uᵀ`, symmetrized to remove rounding asymmetry.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrize(&(scaled * u.transpose()))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<(), SpdError> {
    if m.nrows() != m.ncols() {
        return Err(SpdError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(SpdError::NonFinite);
    }
    let asymmetry = max_asymmetry(m);
    let allowed = tol * max_abs(m).max(1.0);
    if asymmetry > allowed {
        return Err(SpdError::AsymmetryExceedsTolerance { asymmetry, allowed });
    }
    Ok(())
}

/// A validated SPD matrix together with its eigendecomposition.
///
/// The decomposition is always computed from the stored entries, so two
/// matrices with identical entries behave bit-identically.
#[derive(Clone, PartialEq)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    eig: EigenPair,
}

impl fmt::Debug for SpdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpdMatrix").field("mat", &self.mat).finish()
    }
}

/// Symmetrizes `raw` when its asymmetry is within `tol` (relative to
/// `max(1, max|M_ij|)`) and checks that the spectrum is strictly positive and
/// above the relative floor.
pub fn validate_spd(raw: &DMatrix<f64>, tol: f64) -> Result<SpdMatrix, SpdError> {
    check_symmetric(raw, tol)?;
    if raw.nrows() == 0 {
        return Err(SpdError::NotSquare { rows: 0, cols: 0 });
    }
    let mat = symmetrize(raw);
    let eig = EigenPair::of_symmetric(&mat);
    let (smallest, largest) = (eig.smallest(), eig.largest());
    if !(smallest > 0.0) || smallest <= EIGEN_FLOOR_REL * largest {
        return Err(SpdError::NotPositiveDefinite { smallest, largest });
    }
    Ok(SpdMatrix { mat, eig })
}

impl SpdMatrix {
    pub fn new(raw: DMatrix<f64>) -> Result<Self, SpdError> {
        validate_spd(&raw, SYMMETRY_TOL)
    }

    pub fn identity(d: usize) -> Self {
        Self::from_symmetric_unchecked(DMatrix::identity(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, SpdError> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Row-major entries of a `d × d` matrix.
    pub fn from_row_slice(d: usize, entries: &[f64]) -> Result<Self, SpdError> {
        if entries.len() != d * d {
            return Err(SpdError::NotSquare {
                rows: d,
                cols: entries.len() / d.max(1),
            });
        }
        Self::new(DMatrix::from_row_slice(d, d, entries))
    }

    /// For results of spectral maps, which are SPD by construction.
    pub(crate) fn from_symmetric_unchecked(mat: DMatrix<f64>) -> Self {
        let eig = EigenPair::of_symmetric(&mat);
        debug_assert!(eig.smallest() > 0.0, "spectral map produced a non-positive eigenvalue");
        SpdMatrix { mat, eig }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn eigen(&self) -> &EigenPair {
        &self.eig
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.mat[(i, j)]);
            }
        }
        out
    }

    /// Sum of log-eigenvalues.
    pub fn log_det(&self) -> f64 {
        self.eig.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        self.eig.map_spectrum(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> DMatrix<f64> {
        self.eig.map_spectrum(|l| 1.0 / l.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        spd_power(self, -1.0)
    }

    /// `A X Aᵀ` for an arbitrary square `A`. Fails only if the congruence is
    /// numerically singular.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<SpdMatrix, SpdError> {
        if a.nrows() != self.dim() || a.ncols() != self.dim() {
            return Err(SpdError::DimensionMismatch {
                left: self.dim(),
                right: a.nrows(),
            });
        }
        SpdMatrix::new(symmetrize(&(a * &self.mat * a.transpose())))
    }
}

fn ensure_same_dim(a: usize, b: usize) -> Result<(), SpdError> {
    if a != b {
        return Err(SpdError::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Principal matrix logarithm.
pub fn spd_log(x: &SpdMatrix) -> DMatrix<f64> {
    x.eig.map_spectrum(f64::ln)
}

/// Matrix exponential of a symmetric matrix.
pub fn spd_exp(s: &DMatrix<f64>) -> Result<SpdMatrix, SpdError> {
    check_symmetric(s, SYMMETRY_TOL)?;
    let eig = EigenPair::of_symmetric(&symmetrize(s));
    Ok(SpdMatrix::from_symmetric_unchecked(eig.map_spectrum(f64::exp)))
}

/// `X^c` for any real exponent.
pub fn spd_power(x: &SpdMatrix, c: f64) -> SpdMatrix {
    if c == 1.0 {
        return x.clone();
    }
    SpdMatrix::from_symmetric_unchecked(x.eig.map_spectrum(|l| l.powf(c)))
}

/// A symmetric matrix attached to the point whose tangent space it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pole: SpdMatrix,
    value: DMatrix<f64>,
}

impl TangentVector {
    pub fn new(pole: SpdMatrix, value: DMatrix<f64>) -> Result<Self, SpdError> {
        ensure_same_dim(pole.dim(), value.nrows())?;
        check_symmetric(&value, SYMMETRY_TOL)?;
        Ok(TangentVector {
            pole,
            value: symmetrize(&value),
        })
    }

    pub fn zero(pole: SpdMatrix) -> Self {
        let d = pole.dim();
        TangentVector {
            pole,
            value: DMatrix::zeros(d, d),
        }
    }

    pub fn pole(&self) -> &SpdMatrix {
        &self.pole
    }

    pub fn value(&self) -> &DMatrix<f64> {
        &self.value
    }

    /// Norm under the metric at the pole: `‖P^{-1/2} V P^{-1/2}‖_F`.
    pub fn riemannian_norm(&self) -> f64 {
        let w = self.pole.inv_sqrt();
        (&w * &self.value * &w).norm()
    }
}

/// `P^{-1/2} X P^{-1/2}` as a fresh SPD matrix.
pub(crate) fn whiten(pole: &SpdMatrix, x: &SpdMatrix) -> SpdMatrix {
    let w = pole.inv_sqrt();
    SpdMatrix::from_symmetric_unchecked(symmetrize(&(&w * &x.mat * &w)))
}

pub fn airm_log_map(pole: &SpdMatrix, x: &SpdMatrix) -> Result<TangentVector, SpdError> {
    ensure_same_dim(pole.dim(), x.dim())?;
    let s = pole.sqrt();
    let inner = spd_log(&whiten(pole, x));
    Ok(TangentVector {
        pole: pole.clone(),
        value: symmetrize(&(&s * inner * &s)),
    })
}

pub fn airm_exp_map(tv: &TangentVector) -> SpdMatrix {
    let pole = &tv.pole;
    let w = pole.inv_sqrt();
    let s = pole.sqrt();
    let inner = EigenPair::of_symmetric(&symmetrize(&(&w * &tv.value * &w))).map_spectrum(f64::exp);
    SpdMatrix::from_symmetric_unchecked(symmetrize(&(&s * inner * &s)))
}

/// Squared geodesic distance, `tr log²(X^{-1/2} Y X^{-1/2})`.
pub fn geodesic_distance_sq(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64, SpdError> {
    ensure_same_dim(x.dim(), y.dim())?;
    let w = x.inv_sqrt();
    let inner = symmetrize(&(&w * &y.mat * &w));
    let values = inner.symmetric_eigenvalues();
    Ok(values.iter().map(|l| l.ln().powi(2)).sum())
}

pub fn geodesic_distance(x: &SpdMatrix, y: &SpdMatrix) -> Result<f64, SpdError> {
    geodesic_distance_sq(x, y).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn approx_eq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn identity_is_accepted_unchanged() {
        let x = SpdMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(x.matrix(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn negative_eigenvalue_is_rejected() {
        let raw = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        match SpdMatrix::new(raw) {
            Err(SpdError::NotPositiveDefinite { smallest, .. }) => assert_eq!(smallest, -1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn near_symmetric_input_is_symmetrized() {
        let raw = DMatrix::from_row_slice(2, 2, &[2.0, 1.0 + 1e-12, 1.0, 2.0]);
        let x = SpdMatrix::new(raw).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(approx_eq(x.matrix(), &expect, 1e-12));
        assert_eq!(x.matrix()[(0, 1)], x.matrix()[(1, 0)]);
    }

    #[test]
    fn asymmetric_and_non_square_errors() {
        let raw = DMatrix::from_row_slice(2, 2, &[2.0, 1.5, 1.0, 2.0]);
        assert!(matches!(
            SpdMatrix::new(raw),
            Err(SpdError::AsymmetryExceedsTolerance { .. })
        ));
        let raw = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(validate_spd(&raw, 1e-10), Err(SpdError::NotSquare { .. })));
    }

    #[test]
    fn numerically_singular_matrix_is_rejected() {
        assert!(SpdMatrix::from_diagonal(&[1.0, 1e-13]).is_err());
        assert!(SpdMatrix::from_diagonal(&[1.0, 1e-11]).is_ok());
    }

    #[test]
    fn log_and_exp_closed_forms() {
        let id = SpdMatrix::identity(3);
        assert!(spd_log(&id).norm() < 1e-15);
        let x = SpdMatrix::from_diagonal(&[E, E * E]).unwrap();
        let l = spd_log(&x);
        assert!(approx_eq(&l, &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])), 1e-14));

        let z = spd_exp(&DMatrix::zeros(2, 2)).unwrap();
        assert!(approx_eq(z.matrix(), &DMatrix::identity(2, 2), 1e-15));
        let e = spd_exp(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]))).unwrap();
        assert!(approx_eq(e.matrix(), x.matrix(), 1e-13));
    }

    #[test]
    fn exp_rejects_asymmetric_input() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(spd_exp(&s), Err(SpdError::AsymmetryExceedsTolerance { .. })));
    }

    #[test]
    fn power_closed_forms() {
        let x = SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
        let r = spd_power(&x, 0.5);
        assert!(approx_eq(r.matrix(), &DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])), 1e-14));
        assert_eq!(spd_power(&x, 1.0).matrix(), x.matrix());
    }

    #[test]
    fn tangent_maps_at_identity_and_self() {
        let x = SpdMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let tv = airm_log_map(&x, &x).unwrap();
        assert!(tv.value().norm() < 1e-13);
        let at_id = airm_log_map(&SpdMatrix::identity(2), &x).unwrap();
        assert!(approx_eq(at_id.value(), &spd_log(&x), 1e-13));

        let p = SpdMatrix::from_row_slice(2, &[3.0, 1.0, 1.0, 2.0]).unwrap();
        let back = airm_exp_map(&TangentVector::zero(p.clone()));
        assert!(approx_eq(back.matrix(), p.matrix(), 1e-13));

        let tv = TangentVector::new(SpdMatrix::identity(2), DMatrix::identity(2, 2)).unwrap();
        let e = airm_exp_map(&tv);
        assert!(approx_eq(e.matrix(), &(DMatrix::identity(2, 2) * E), 1e-14));
    }

    #[test]
    fn distance_closed_forms() {
        let x = SpdMatrix::from_row_slice(2, &[2.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(geodesic_distance(&x, &x).unwrap() < 1e-14);
        let d = geodesic_distance(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[E, E]).unwrap()).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = SpdMatrix::identity(2);
        let b = SpdMatrix::identity(3);
        assert!(matches!(geodesic_distance(&a, &b), Err(SpdError::DimensionMismatch { .. })));
        assert!(matches!(airm_log_map(&a, &b), Err(SpdError::DimensionMismatch { .. })));
    }

    #[test]
    fn eigenpairs_are_descending_and_orthonormal() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0]);
        let e = EigenPair::of_symmetric(&m);
        assert!(e.eigenvalues[0] >= e.eigenvalues[1] && e.eigenvalues[1] >= e.eigenvalues[2]);
        let u = &e.eigenvectors;
        assert!((u.transpose() * u - DMatrix::<f64>::identity(3, 3)).norm() <= 1e-8);
        assert!((e.map_spectrum(|l| l) - &m).norm() <= 1e-8 * m.norm());
    }
}
