use nalgebra::DMatrix;
use rayon::prelude::*;

use super::features::FeatureImage;
use super::DescriptorError;
use crate::spd::{validate_spd, SpdMatrix, SYMMETRY_TOL};

pub const DEFAULT_EPS_REL: f64 = 1e-5;
/// Absolute ridge added to every region covariance.
pub const SHRINKAGE_FLOOR: f64 = 1e-8;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpec {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl RegionSpec {
    pub fn whole(fi: &FeatureImage) -> Self {
        RegionSpec {
            x0: 0,
            y0: 0,
            x1: fi.width() - 1,
            y1: fi.height() - 1,
        }
    }

    pub fn area(&self) -> usize {
        (self.x1 + 1).saturating_sub(self.x0) * (self.y1 + 1).saturating_sub(self.y0)
    }

    fn check(&self, fi: &FeatureImage) -> Result<(), DescriptorError> {
        if self.x0 > self.x1 || self.y0 > self.y1 || self.x1 >= fi.width() || self.y1 >= fi.height() {
            return Err(DescriptorError::RegionOutOfBounds {
                x0: self.x0,
                y0: self.y0,
                x1: self.x1,
                y1: self.y1,
                width: fi.width(),
                height: fi.height(),
            });
        }
        if self.area() < 2 {
            return Err(DescriptorError::RegionTooSmall(self.area()));
        }
        Ok(())
    }
}

/// Sample covariance (`1/(N−1)`) of the feature vectors in `region`, shrunk
/// towards the identity by `eps_rel·tr(C)/C.dim + 1e-8`.
pub fn region_covariance(fi: &FeatureImage, region: RegionSpec, eps_rel: f64) -> Result<SpdMatrix, DescriptorError> {
    if !(eps_rel.is_finite() && eps_rel > 0.0) {
        return Err(DescriptorError::InvalidParam(format!("eps_rel must be positive, got {eps_rel}")));
    }
    region.check(fi)?;
    let c = fi.channels();
    let n = region.area();
    let pixels = || (region.y0..=region.y1).flat_map(move |y| (region.x0..=region.x1).map(move |x| fi.pixel(x, y)));

    // Shifting by the first sample keeps constant regions exactly zero.
    let origin = fi.pixel(region.x0, region.y0);
    let mut mean = vec![0.0; c];
    for p in pixels() {
        for j in 0..c {
            mean[j] += p[j] - origin[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(c, c);
    let mut dev = vec![0.0; c];
    for p in pixels() {
        for j in 0..c {
            dev[j] = p[j] - origin[j] - mean[j];
        }
        for a in 0..c {
            for b in a..c {
                cov[(a, b)] += dev[a] * dev[b];
            }
        }
    }
    let norm = (n - 1) as f64;
    for a in 0..c {
        for b in a..c {
            let v = cov[(a, b)] / norm;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let ridge = eps_rel * cov.trace() / c as f64 + SHRINKAGE_FLOOR;
    for a in 0..c {
        cov[(a, a)] += ridge;
    }
    Ok(validate_spd(&cov, SYMMETRY_TOL)?)
}

fn partition(extent: usize, parts: usize, i: usize) -> (usize, usize) {
    let base = extent / parts;
    let start = i * base;
    let end = if i + 1 == parts { extent - 1 } else { start + base - 1 };
    (start, end)
}

/// Row-major region covariances over an even `rows × cols` partition; the
/// remainder pixels go to the last row and column.
pub fn grid_covariances(
    fi: &FeatureImage,
    rows: usize,
    cols: usize,
    eps_rel: f64,
) -> Result<Vec<SpdMatrix>, DescriptorError> {
    let too_fine = DescriptorError::GridTooFine {
        rows,
        cols,
        height: fi.height(),
        width: fi.width(),
    };
    if rows == 0 || cols == 0 || rows > fi.height() || cols > fi.width() {
        return Err(too_fine);
    }
    if (fi.height() / rows) * (fi.width() / cols) < 2 {
        return Err(too_fine);
    }
    let regions: Vec<RegionSpec> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (y0, y1) = partition(fi.height(), rows, r);
            let (x0, x1) = partition(fi.width(), cols, c);
            RegionSpec { x0, y0, x1, y1 }
        })
        .collect();
    regions.into_par_iter().map(|reg| region_covariance(fi, reg, eps_rel)).collect()
}
