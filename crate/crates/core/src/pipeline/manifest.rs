use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::descriptors::{
    color_feature_map, gabor_feature_map, grid_covariances, intensity_feature_map, parse_pnm, region_covariance,
    FeatureImage, GaborBank, Image, RegionSpec, DEFAULT_EPS_REL,
};
use crate::matrix_text::parse_matrix_text;
use crate::spd::{validate_spd, SpdMatrix, SYMMETRY_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    GrayImage,
    ColorImage,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    Intensity5,
    Color11,
    Gabor43,
    Precomputed,
}

impl FeatureMode {
    fn expected_kind(self) -> EntryKind {
        match self {
            FeatureMode::Intensity5 | FeatureMode::Gabor43 => EntryKind::GrayImage,
            FeatureMode::Color11 => EntryKind::ColorImage,
            FeatureMode::Precomputed => EntryKind::Matrix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub kind: EntryKind,
}

fn default_downsample() -> usize {
    1
}

fn default_eps_rel() -> f64 {
    DEFAULT_EPS_REL
}

/// Relative entry paths resolve against the directory passed to
/// [`load_dataset`] (the CLI uses the manifest's own directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_downsample")]
    pub downsample: usize,
    #[serde(default = "default_eps_rel")]
    pub eps_rel: f64,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Manifest(e.to_string()))
    }

    pub fn validate(&self) -> Result<usize, PipelineError> {
        if self.entries.is_empty() {
            return Err(PipelineError::Manifest("no entries".into()));
        }
        if self.downsample == 0 {
            return Err(PipelineError::Manifest("downsample factor must be at least 1".into()));
        }
        if !(self.eps_rel > 0.0 && self.eps_rel.is_finite()) {
            return Err(PipelineError::Manifest("eps_rel must be positive".into()));
        }
        let expected = self.feature_mode.expected_kind();
        if let Some(e) = self.entries.iter().find(|e| e.kind != expected) {
            return Err(PipelineError::Manifest(format!(
                "{} has kind {:?}, feature mode {:?} needs {:?}",
                e.path.display(),
                e.kind,
                self.feature_mode,
                expected
            )));
        }
        if self.feature_mode == FeatureMode::Precomputed && self.grid.is_some() {
            return Err(PipelineError::Manifest("grid does not apply to precomputed matrices".into()));
        }
        let n_classes = labels_are_dense(self.entries.iter().map(|e| e.label))
            .map_err(PipelineError::Manifest)?;
        Ok(n_classes)
    }
}

/// Number of classes when the labels cover exactly `0..n`.
pub(crate) fn labels_are_dense(labels: impl Iterator<Item = usize>) -> Result<usize, String> {
    let mut seen = Vec::new();
    for l in labels {
        if l >= seen.len() {
            seen.resize(l + 1, false);
        }
        seen[l] = true;
    }
    match seen.iter().position(|s| !s) {
        Some(missing) => Err(format!("label {missing} is unused; labels must be dense 0..n-1")),
        None if seen.is_empty() => Err("no labels".into()),
        None => Ok(seen.len()),
    }
}

/// Labeled SPD descriptors in manifest order (grid cells row-major within an
/// entry).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Vec<SpdMatrix>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(points: Vec<SpdMatrix>, labels: Vec<usize>) -> Result<Self, PipelineError> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(PipelineError::Manifest(format!(
                "{} points with {} labels",
                points.len(),
                labels.len()
            )));
        }
        let d = points[0].dim();
        if let Some(x) = points.iter().find(|x| x.dim() != d) {
            return Err(PipelineError::Manifest(format!("mixed dimensions {d} and {}", x.dim())));
        }
        let n_classes = labels_are_dense(labels.iter().copied()).map_err(PipelineError::Manifest)?;
        Ok(Dataset {
            points,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        self.labels.iter().for_each(|&l| counts[l] += 1);
        counts
    }
}

fn parse_error(path: &Path, err: impl std::fmt::Display) -> PipelineError {
    PipelineError::Parse {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::FileNotFound(path.to_path_buf()),
        _ => PipelineError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn descriptors_of(manifest: &DatasetManifest, path: &Path) -> Result<Vec<SpdMatrix>, PipelineError> {
    let bytes = read_file(path)?;
    if manifest.feature_mode == FeatureMode::Precomputed {
        let text = String::from_utf8(bytes).map_err(|e| parse_error(path, e))?;
        let raw = parse_matrix_text(&text).map_err(|e| parse_error(path, e))?;
        return Ok(vec![validate_spd(&raw, SYMMETRY_TOL).map_err(|e| parse_error(path, e))?]);
    }
    let image = parse_pnm(&bytes).map_err(|e| parse_error(path, e))?;
    let features: FeatureImage = match (manifest.feature_mode, image) {
        (FeatureMode::Intensity5, Image::Gray(g)) => {
            intensity_feature_map(&g.downsample(manifest.downsample).map_err(|e| parse_error(path, e))?)
        }
        (FeatureMode::Gabor43, Image::Gray(g)) => gabor_feature_map(
            &g.downsample(manifest.downsample).map_err(|e| parse_error(path, e))?,
            &GaborBank::default(),
        ),
        (FeatureMode::Color11, Image::Color(c)) => {
            color_feature_map(&c.downsample(manifest.downsample).map_err(|e| parse_error(path, e))?)
        }
        (mode, _) => return Err(parse_error(path, format!("image type does not match feature mode {mode:?}"))),
    }
    .map_err(|e| parse_error(path, e))?;
    match manifest.grid {
        Some(g) => grid_covariances(&features, g.rows, g.cols, manifest.eps_rel).map_err(|e| parse_error(path, e)),
        None => Ok(vec![
            region_covariance(&features, RegionSpec::whole(&features), manifest.eps_rel)
                .map_err(|e| parse_error(path, e))?,
        ]),
    }
}

/// Reads every entry and turns it into one descriptor, or one per grid cell.
pub fn load_dataset(manifest: &DatasetManifest, base_dir: &Path) -> Result<Dataset, PipelineError> {
    manifest.validate()?;
    let per_entry: Vec<Vec<SpdMatrix>> = manifest
        .entries
        .par_iter()
        .map(|e| descriptors_of(manifest, &base_dir.join(&e.path)))
        .collect::<Result<_, _>>()?;
    let expected = per_entry[0][0].dim();
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (entry, descs) in manifest.entries.iter().zip(per_entry) {
        for x in descs {
            if x.dim() != expected {
                return Err(PipelineError::DimensionInconsistency {
                    path: base_dir.join(&entry.path),
                    expected,
                    got: x.dim(),
                });
            }
            points.push(x);
            labels.push(entry.label);
        }
    }
    Dataset::new(points, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_labels() {
        assert_eq!(labels_are_dense([0, 2, 1, 1].into_iter()), Ok(3));
        assert!(labels_are_dense([0, 2].into_iter()).is_err());
        assert!(labels_are_dense(std::iter::empty()).is_err());
    }

    #[test]
    fn manifest_json_shape() {
        let text = r#"{"entries":[{"path":"a.pgm","label":0,"kind":"gray-image"}],
                       "feature_mode":"intensity5","grid":{"rows":2,"cols":2}}"#;
        let m = DatasetManifest::from_json(text).unwrap();
        assert_eq!(m.downsample, 1);
        assert_eq!(m.eps_rel, DEFAULT_EPS_REL);
        assert_eq!(m.validate().unwrap(), 1);
        assert!(DatasetManifest::from_json(r#"{"entries":[],"feature_mode":"bogus"}"#).is_err());
    }

    #[test]
    fn kind_must_match_mode() {
        let m = DatasetManifest {
            entries: vec![ManifestEntry {
                path: "x.ppm".into(),
                label: 0,
                kind: EntryKind::ColorImage,
            }],
            feature_mode: FeatureMode::Intensity5,
            grid: None,
            downsample: 1,
            eps_rel: 1e-5,
        };
        assert!(matches!(m.validate(), Err(PipelineError::Manifest(_))));
    }
}
