use super::DescriptorError;

/// Row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

/// Row-major RGB triples in `[0, 1]³`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    height: usize,
    width: usize,
    pixels: Vec<[f64; 3]>,
}

fn check_shape(height: usize, width: usize, len: usize) -> Result<(), DescriptorError> {
    if height == 0 || width == 0 {
        return Err(DescriptorError::InvalidImage("empty image".into()));
    }
    if height * width != len {
        return Err(DescriptorError::InvalidImage(format!(
            "{len} pixels for a {height}x{width} image"
        )));
    }
    Ok(())
}

fn in_unit_range(v: f64) -> bool {
    v.is_finite() && (0.0..=1.0).contains(&v)
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self, DescriptorError> {
        check_shape(height, width, pixels.len())?;
        if !pixels.iter().all(|&v| in_unit_range(v)) {
            return Err(DescriptorError::InvalidImage("intensity outside [0, 1]".into()));
        }
        Ok(GrayImage { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self, DescriptorError> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Replicate padding for out-of-range coordinates.
    pub(crate) fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Box-filter downsampling by an integer factor; trailing rows and
    /// columns that do not fill a block are dropped.
    pub fn downsample(&self, factor: usize) -> Result<GrayImage, DescriptorError> {
        let (h, w) = downsampled_dims(self.height, self.width, factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let area = (factor * factor) as f64;
        let pixels = (0..h)
            .flat_map(|by| (0..w).map(move |bx| (bx, by)))
            .map(|(bx, by)| {
                let mut s = 0.0;
                for y in by * factor..(by + 1) * factor {
                    for x in bx * factor..(bx + 1) * factor {
                        s += self.get(x, y);
                    }
                }
                s / area
            })
            .collect();
        GrayImage::new(h, w, pixels)
    }
}

fn downsampled_dims(height: usize, width: usize, factor: usize) -> Result<(usize, usize), DescriptorError> {
    if factor == 0 {
        return Err(DescriptorError::InvalidParam("downsample factor must be at least 1".into()));
    }
    let (h, w) = (height / factor, width / factor);
    if h == 0 || w == 0 {
        return Err(DescriptorError::ImageTooSmall {
            height,
            width,
            min: factor,
        });
    }
    Ok((h, w))
}

impl ColorImage {
    pub fn new(height: usize, width: usize, pixels: Vec<[f64; 3]>) -> Result<Self, DescriptorError> {
        check_shape(height, width, pixels.len())?;
        if !pixels.iter().flatten().all(|&v| in_unit_range(v)) {
            return Err(DescriptorError::InvalidImage("color value outside [0, 1]".into()));
        }
        Ok(ColorImage { height, width, pixels })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> Result<Self, DescriptorError> {
        let pixels = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(height, width, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub(crate) fn channel_clamped(&self, x: isize, y: isize, c: usize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)[c]
    }

    pub fn downsample(&self, factor: usize) -> Result<ColorImage, DescriptorError> {
        let (h, w) = downsampled_dims(self.height, self.width, factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let area = (factor * factor) as f64;
        let pixels = (0..h)
            .flat_map(|by| (0..w).map(move |bx| (bx, by)))
            .map(|(bx, by)| {
                let mut s = [0.0; 3];
                for y in by * factor..(by + 1) * factor {
                    for x in bx * factor..(bx + 1) * factor {
                        let p = self.get(x, y);
                        for c in 0..3 {
                            s[c] += p[c];
                        }
                    }
                }
                s.map(|v| v / area)
            })
            .collect();
        ColorImage::new(h, w, pixels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Image {
    Gray(GrayImage),
    Color(ColorImage),
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, DescriptorError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(DescriptorError::Parse(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DescriptorError::Parse(format!("bad {what}")))
    }
}

/// Parses binary PGM (`P5`) or PPM (`P6`) with 8-bit samples and maxval 255.
/// Samples map to `v / 255`.
pub fn parse_pnm(bytes: &[u8]) -> Result<Image, DescriptorError> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(DescriptorError::Parse("missing P5/P6 magic".into()));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        other => {
            return Err(DescriptorError::Parse(format!(
                "unsupported magic P{}",
                other as char
            )))
        }
    };
    let mut r = HeaderReader { bytes, pos: 2 };
    let width = r.number("width")?;
    let height = r.number("height")?;
    let maxval = r.number("maxval")?;
    if maxval != 255 {
        return Err(DescriptorError::Parse(format!("maxval {maxval} unsupported, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(DescriptorError::Parse("zero image dimension".into()));
    }
    match bytes.get(r.pos) {
        Some(b) if b.is_ascii_whitespace() => r.pos += 1,
        _ => return Err(DescriptorError::Parse("missing separator after header".into())),
    }
    let needed = width * height * channels;
    let data = bytes
        .get(r.pos..r.pos + needed)
        .ok_or_else(|| DescriptorError::Parse(format!("expected {needed} data bytes")))?;
    let scale = |b: u8| b as f64 / 255.0;
    if channels == 1 {
        Ok(Image::Gray(GrayImage::new(height, width, data.iter().map(|&b| scale(b)).collect())?))
    } else {
        let pixels = data.chunks_exact(3).map(|c| [scale(c[0]), scale(c[1]), scale(c[2])]).collect();
        Ok(Image::Color(ColorImage::new(height, width, pixels)?))
    }
}

fn quantize(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| quantize(v)));
    out
}

pub fn write_ppm(img: &ColorImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().flat_map(|p| p.map(quantize)));
    out
}
