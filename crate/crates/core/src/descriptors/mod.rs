//! Per-pixel feature maps and region covariance descriptors.
//!
//! Images are ingested as binary PGM/PPM with intensities mapped to `[0, 1]`.
//! Derivatives use the central difference `[−1/2, 0, 1/2]` and the second
//! difference `[1, −2, 1]` with replicate padding at the borders.

mod covariance;
mod features;
mod gabor;
mod image;

use thiserror::Error;

use crate::spd::SpdError;

pub use covariance::{grid_covariances, region_covariance, RegionSpec, DEFAULT_EPS_REL, SHRINKAGE_FLOOR};
pub use features::{color_feature_map, intensity_feature_map, FeatureImage};
pub use gabor::{gabor_feature_map, GaborBank};
pub use image::{parse_pnm, write_pgm, write_ppm, ColorImage, GrayImage, Image};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DescriptorError {
    #[error("image is {height}x{width}, needs at least {min}x{min}")]
    ImageTooSmall { height: usize, width: usize, min: usize },
    #[error("region has {0} pixels, needs at least 2")]
    RegionTooSmall(usize),
    #[error("region ({x0},{y0})-({x1},{y1}) outside {width}x{height} image")]
    RegionOutOfBounds {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        width: usize,
        height: usize,
    },
    #[error("{rows}x{cols} grid is too fine for a {height}x{width} image")]
    GridTooFine {
        rows: usize,
        cols: usize,
        height: usize,
        width: usize,
    },
    #[error("invalid image data: {0}")]
    InvalidImage(String),
    #[error("malformed PNM: {0}")]
    Parse(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error(transparent)]
    Spd(#[from] SpdError),
}
