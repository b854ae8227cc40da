use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::Dataset;
use super::PipelineError;
use crate::seeding::stream_rng;
use crate::spd::{geodesic_distance, spd_exp, symmetrize, SpdMatrix};

/// Synthetic classes of SPD matrices `A_c W A_c` with `W = G Gᵀ / dof`
/// (a normalized Wishart draw, so `E[W] = I`) around class centers
/// `A_c² = exp(separation · D_c)`, where the `D_c` are orthonormal symmetric
/// directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WishartBenchmark {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub dof: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Measured geometry of a generated benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGeometry {
    /// Smallest geodesic distance between two class centers.
    pub min_center_distance: f64,
    /// Largest per-class mean geodesic distance from a sample to its center.
    pub intra_spread: f64,
}

impl BenchmarkGeometry {
    pub fn separation_ratio(&self) -> f64 {
        self.min_center_distance / self.intra_spread
    }
}

impl WishartBenchmark {
    pub fn new(classes: usize, per_class: usize, seed: u64) -> Self {
        WishartBenchmark {
            classes,
            dim: 6,
            per_class,
            dof: 60,
            separation: 2.5,
            seed,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let sym_dim = self.dim * (self.dim + 1) / 2;
        if self.classes < 2 || self.classes > sym_dim {
            return Err(PipelineError::Config(format!(
                "{} classes do not fit {} orthogonal directions",
                self.classes, sym_dim
            )));
        }
        if self.dof < self.dim || self.per_class == 0 || !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(PipelineError::Config("benchmark needs dof >= dim, per_class >= 1, separation > 0".into()));
        }
        Ok(())
    }

    /// Orthonormal (Frobenius) symmetric directions by Gram–Schmidt.
    fn directions(&self) -> Vec<DMatrix<f64>> {
        let d = self.dim;
        let mut rng = stream_rng(self.seed, 0);
        let mut dirs: Vec<DMatrix<f64>> = Vec::with_capacity(self.classes);
        while dirs.len() < self.classes {
            let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut s = symmetrize(&g);
            for q in &dirs {
                let proj = s.dot(q);
                s -= q * proj;
            }
            let norm = s.norm();
            if norm > 1e-8 {
                dirs.push(s / norm);
            }
        }
        dirs
    }

    pub fn centers(&self) -> Result<Vec<SpdMatrix>, PipelineError> {
        self.validate()?;
        self.directions()
            .iter()
            .map(|dir| spd_exp(&(dir * self.separation)).map_err(|e| PipelineError::Config(e.to_string())))
            .collect()
    }

    /// `per_class` samples for each class, class-major.
    pub fn generate(&self) -> Result<Dataset, PipelineError> {
        self.validate()?;
        let d = self.dim;
        let mut points = Vec::with_capacity(self.classes * self.per_class);
        let mut labels = Vec::with_capacity(self.classes * self.per_class);
        for (c, dir) in self.directions().iter().enumerate() {
            let a = spd_exp(&(dir * (0.5 * self.separation))).map_err(|e| PipelineError::Config(e.to_string()))?;
            let mut rng = stream_rng(self.seed, 1 + c as u64);
            for _ in 0..self.per_class {
                let g = DMatrix::from_fn(d, self.dof, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = &g * g.transpose() / self.dof as f64;
                let x = a.matrix() * w * a.matrix();
                points.push(SpdMatrix::new(symmetrize(&x)).map_err(|e| PipelineError::Config(e.to_string()))?);
                labels.push(c);
            }
        }
        Dataset::new(points, labels)
    }

    pub fn geometry(&self, ds: &Dataset) -> Result<BenchmarkGeometry, PipelineError> {
        let centers = self.centers()?;
        let err = |e: crate::spd::SpdError| PipelineError::Config(e.to_string());
        let mut min_center_distance = f64::INFINITY;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                min_center_distance = min_center_distance.min(geodesic_distance(&centers[i], &centers[j]).map_err(err)?);
            }
        }
        let mut intra_spread = 0.0_f64;
        for (c, center) in centers.iter().enumerate() {
            let dists: Vec<f64> = ds
                .points
                .iter()
                .zip(&ds.labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| geodesic_distance(center, x))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            intra_spread = intra_spread.max(dists.iter().sum::<f64>() / dists.len() as f64);
        }
        Ok(BenchmarkGeometry {
            min_center_distance,
            intra_spread,
        })
    }
}
