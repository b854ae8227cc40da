use super::image::{ColorImage, GrayImage};
use super::DescriptorError;

/// `H × W × C` feature values stored pixel-major (all channels of a pixel
/// are contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
    tags: Vec<String>,
}

impl FeatureImage {
    pub fn new(
        height: usize,
        width: usize,
        tags: Vec<String>,
        values: Vec<f64>,
    ) -> Result<Self, DescriptorError> {
        let channels = tags.len();
        if height == 0 || width == 0 || channels == 0 || values.len() != height * width * channels {
            return Err(DescriptorError::InvalidImage(format!(
                "{} values for {height}x{width}x{channels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DescriptorError::InvalidImage("non-finite feature value".into()));
        }
        Ok(FeatureImage {
            height,
            width,
            channels,
            values,
            tags,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixel(x, y)[c]
    }
}

pub(crate) fn require_min_size(height: usize, width: usize, min: usize) -> Result<(), DescriptorError> {
    if height < min || width < min {
        return Err(DescriptorError::ImageTooSmall { height, width, min });
    }
    Ok(())
}

/// First and second differences along x and y at one pixel of a
/// replicate-padded channel.
struct Derivatives {
    dx: f64,
    dy: f64,
    dxx: f64,
    dyy: f64,
}

fn derivatives(sample: impl Fn(isize, isize) -> f64, x: usize, y: usize) -> Derivatives {
    let (x, y) = (x as isize, y as isize);
    let c = sample(x, y);
    let (l, r) = (sample(x - 1, y), sample(x + 1, y));
    let (u, d) = (sample(x, y - 1), sample(x, y + 1));
    Derivatives {
        dx: 0.5 * (r - l),
        dy: 0.5 * (d - u),
        dxx: r - 2.0 * c + l,
        dyy: d - 2.0 * c + u,
    }
}

fn tags(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `[I, |∂I/∂x|, |∂I/∂y|, |∂²I/∂x²|, |∂²I/∂y²|]`.
pub fn intensity_feature_map(img: &GrayImage) -> Result<FeatureImage, DescriptorError> {
    let (h, w) = (img.height(), img.width());
    require_min_size(h, w, 3)?;
    let mut values = Vec::with_capacity(h * w * 5);
    for y in 0..h {
        for x in 0..w {
            let d = derivatives(|xx, yy| img.clamped(xx, yy), x, y);
            values.extend([img.get(x, y), d.dx.abs(), d.dy.abs(), d.dxx.abs(), d.dyy.abs()]);
        }
    }
    FeatureImage::new(h, w, tags(&["I", "|dI/dx|", "|dI/dy|", "|d2I/dx2|", "|d2I/dy2|"]), values)
}

/// Pixel position normalized to `[0, 1]`.
pub(crate) fn normalized_coord(i: usize, extent: usize) -> f64 {
    if extent > 1 {
        i as f64 / (extent - 1) as f64
    } else {
        0.0
    }
}

/// `[x, y, R, G, B, R′, G′, B′, R″, G″, B″]` where `C′` is the gradient
/// magnitude and `C″` the Laplacian of channel `C`.
pub fn color_feature_map(img: &ColorImage) -> Result<FeatureImage, DescriptorError> {
    let (h, w) = (img.height(), img.width());
    require_min_size(h, w, 3)?;
    let mut values = Vec::with_capacity(h * w * 11);
    for y in 0..h {
        for x in 0..w {
            let rgb = img.get(x, y);
            let mut grad = [0.0; 3];
            let mut lap = [0.0; 3];
            for c in 0..3 {
                let d = derivatives(|xx, yy| img.channel_clamped(xx, yy, c), x, y);
                grad[c] = d.dx.hypot(d.dy);
                lap[c] = d.dxx + d.dyy;
            }
            values.extend([normalized_coord(x, w), normalized_coord(y, h)]);
            values.extend(rgb);
            values.extend(grad);
            values.extend(lap);
        }
    }
    FeatureImage::new(
        h,
        w,
        tags(&["x", "y", "R", "G", "B", "R'", "G'", "B'", "R''", "G''", "B''"]),
        values,
    )
}
