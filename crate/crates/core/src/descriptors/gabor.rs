use nalgebra::Complex;
use std::f64::consts::PI;

use super::features::{normalized_coord, require_min_size, FeatureImage};
use super::image::GrayImage;
use super::DescriptorError;

type C64 = Complex<f64>;

/// Complex Gabor filter bank with an isotropic Gaussian envelope.
///
/// The envelope width follows from the wavelength and the half-magnitude
/// bandwidth in octaves; filters are corrected to zero DC response.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborBank {
    pub wavelengths: Vec<f64>,
    pub orientations: usize,
    pub bandwidth_octaves: f64,
}

impl Default for GaborBank {
    fn default() -> Self {
        let r2 = std::f64::consts::SQRT_2;
        GaborBank {
            wavelengths: vec![4.0, 4.0 * r2, 8.0, 8.0 * r2, 16.0],
            orientations: 8,
            bandwidth_octaves: 1.0,
        }
    }
}

impl GaborBank {
    pub fn channel_count(&self) -> usize {
        3 + self.wavelengths.len() * self.orientations
    }

    pub fn sigma(&self, wavelength: f64) -> f64 {
        let b = 2f64.powf(self.bandwidth_octaves);
        wavelength / PI * (std::f64::consts::LN_2 / 2.0).sqrt() * (b + 1.0) / (b - 1.0)
    }

    pub fn half_support(&self, wavelength: f64) -> usize {
        (3.0 * self.sigma(wavelength)).ceil() as usize
    }

    /// Side length of the largest filter.
    pub fn support(&self) -> usize {
        self.wavelengths.iter().map(|&l| 2 * self.half_support(l) + 1).max().unwrap_or(1)
    }

    pub fn orientation(&self, v: usize) -> f64 {
        v as f64 * PI / self.orientations as f64
    }

    fn validate(&self) -> Result<(), DescriptorError> {
        if self.wavelengths.is_empty() || self.orientations == 0 {
            return Err(DescriptorError::InvalidParam("empty Gabor bank".into()));
        }
        if !self.wavelengths.iter().all(|&l| l.is_finite() && l >= 2.0) {
            return Err(DescriptorError::InvalidParam("Gabor wavelengths must be at least 2 pixels".into()));
        }
        if !(self.bandwidth_octaves.is_finite() && self.bandwidth_octaves > 0.0) {
            return Err(DescriptorError::InvalidParam("Gabor bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// One axis of the separable filter: Gaussian taps and the same taps
/// modulated by `exp(i·ω·s)`.
struct AxisTaps {
    envelope: Vec<f64>,
    modulated: Vec<C64>,
}

fn axis_taps(sigma: f64, half: usize, omega: f64) -> AxisTaps {
    let offsets = (0..=2 * half).map(|i| i as f64 - half as f64);
    let envelope: Vec<f64> = offsets.clone().map(|s| (-s * s / (2.0 * sigma * sigma)).exp()).collect();
    let modulated = offsets
        .zip(&envelope)
        .map(|(s, &e)| C64::from_polar(e, omega * s))
        .collect();
    AxisTaps { envelope, modulated }
}

fn correlate_rows<T>(src: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Add<Output = T> + Default,
{
    let half = (taps.len() / 2) as isize;
    let mut out = vec![T::default(); h * w];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = T::default();
            for (i, &t) in taps.iter().enumerate() {
                let xx = (x as isize + i as isize - half).clamp(0, w as isize - 1) as usize;
                acc = acc + t * row[xx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn correlate_cols<T>(src: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Mul<Output = T> + std::ops::Add<Output = T> + Default,
{
    let half = (taps.len() / 2) as isize;
    let mut out = vec![T::default(); h * w];
    for y in 0..h {
        for (i, &t) in taps.iter().enumerate() {
            let yy = (y as isize + i as isize - half).clamp(0, h as isize - 1) as usize;
            for x in 0..w {
                out[y * w + x] = out[y * w + x] + t * src[yy * w + x];
            }
        }
    }
    out
}

/// Magnitude of the zero-DC Gabor response at every pixel.
///
/// The filter `g(x,y) = env(x)·env(y)·exp(i(ax + by))` is separable; its
/// zero-DC version is `g − κ·env(x)·env(y)` with `κ = Σg / Σenv²`, which is
/// again a combination of two separable passes.
fn response_magnitude(img: &GrayImage, sigma: f64, half: usize, wavelength: f64, theta: f64) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let k = 2.0 * PI / wavelength;
    let tx = axis_taps(sigma, half, k * theta.cos());
    let ty = axis_taps(sigma, half, k * theta.sin());
    let src: Vec<C64> = img.pixels().iter().map(|&v| C64::new(v, 0.0)).collect();
    let carrier = correlate_cols(&correlate_rows(&src, h, w, &tx.modulated), h, w, &ty.modulated);
    let env_sum: f64 = tx.envelope.iter().sum();
    let kappa = tx.modulated.iter().sum::<C64>() * ty.modulated.iter().sum::<C64>() / (env_sum * env_sum);
    let smooth = correlate_cols(&correlate_rows(img.pixels(), h, w, &tx.envelope), h, w, &ty.envelope);
    carrier.iter().zip(&smooth).map(|(&c, &s)| (c - kappa * s).norm()).collect()
}

/// `[I, x, y, |G_{0,0}|, …, |G_{U−1,V−1}|]` with scale index `u` outer and
/// orientation index `v` inner; coordinates normalized to `[0, 1]`.
pub fn gabor_feature_map(img: &GrayImage, bank: &GaborBank) -> Result<FeatureImage, DescriptorError> {
    bank.validate()?;
    let (h, w) = (img.height(), img.width());
    require_min_size(h, w, bank.support())?;
    let channels = bank.channel_count();
    let responses: Vec<Vec<f64>> = bank
        .wavelengths
        .iter()
        .flat_map(|&l| (0..bank.orientations).map(move |v| (l, v)))
        .map(|(l, v)| response_magnitude(img, bank.sigma(l), bank.half_support(l), l, bank.orientation(v)))
        .collect();
    let mut values = Vec::with_capacity(h * w * channels);
    for y in 0..h {
        for x in 0..w {
            values.extend([img.get(x, y), normalized_coord(x, w), normalized_coord(y, h)]);
            values.extend(responses.iter().map(|r| r[y * w + x]));
        }
    }
    let mut tags = vec!["I".to_string(), "x".to_string(), "y".to_string()];
    for u in 0..bank.wavelengths.len() {
        for v in 0..bank.orientations {
            tags.push(format!("|G_{u}_{v}|"));
        }
    }
    FeatureImage::new(h, w, tags, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bank_layout() {
        let bank = GaborBank::default();
        assert_eq!(bank.channel_count(), 43);
        let img = GrayImage::from_fn(64, 64, |x, y| ((x * 3 + y) % 7) as f64 / 7.0).unwrap();
        let f = gabor_feature_map(&img, &bank).unwrap();
        assert_eq!(f.channels(), 43);
        assert_eq!(f.tags()[3], "|G_0_0|");
        assert_eq!(f.tags()[42], "|G_4_7|");
        assert_eq!(f.value(63, 0, 1), 1.0);
    }

    #[test]
    fn one_octave_sigma() {
        // For one octave, σ·f = (3/π)·sqrt(ln 2 / 2).
        let bank = GaborBank::default();
        let expected = 8.0 * 3.0 / PI * (std::f64::consts::LN_2 / 2.0).sqrt();
        assert!((bank.sigma(8.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn constant_image_gives_zero_magnitudes() {
        let bank = GaborBank::default();
        let img = GrayImage::from_fn(60, 60, |_, _| 0.7).unwrap();
        let f = gabor_feature_map(&img, &bank).unwrap();
        for y in 0..60 {
            for x in 0..60 {
                assert!(f.pixel(x, y)[3..].iter().all(|&m| m <= 1e-10));
            }
        }
    }

    #[test]
    fn too_small_for_support() {
        let bank = GaborBank::default();
        let img = GrayImage::from_fn(20, 20, |_, _| 0.0).unwrap();
        assert!(matches!(gabor_feature_map(&img, &bank), Err(DescriptorError::ImageTooSmall { .. })));
    }

    #[test]
    fn invalid_bank_rejected() {
        let img = GrayImage::from_fn(8, 8, |_, _| 0.0).unwrap();
        let bank = GaborBank {
            wavelengths: vec![],
            ..GaborBank::default()
        };
        assert!(gabor_feature_map(&img, &bank).is_err());
    }
}
