#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use spd_rp::spd::SpdMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    gaussian(rng, d, d).qr().q()
}

/// `Q diag(exp(u)) Qᵀ` with log-eigenvalues `u` uniform in `[-spread, spread]`.
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, spread: f64) -> SpdMatrix {
    let q = orthogonal(rng, d);
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-spread..spread).exp()));
    let m = &q * diag * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

/// Random invertible matrix with singular values in `[e^-1, e]`.
pub fn random_invertible(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let u = orthogonal(rng, d);
    let v = orthogonal(rng, d);
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0f64).exp()));
    u * s * v.transpose()
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
