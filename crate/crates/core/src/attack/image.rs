use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!("empty image {width}x{height}x{channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "{} pixel values for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Tensor shape as `[height, width, channels]`.
    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// `clamp(self + e, 0, 1)`.
    pub fn perturbed(&self, e: &[f64]) -> Image {
        let mut out = self.clone();
        out.perturb_from(self, e);
        out
    }

    /// Overwrites `self` with `clamp(base + e, 0, 1)`; shapes must match.
    pub fn perturb_from(&mut self, base: &Image, e: &[f64]) {
        assert_eq!(e.len(), base.pixels.len(), "perturbation size does not match the image");
        self.width = base.width;
        self.height = base.height;
        self.channels = base.channels;
        self.pixels.resize(base.pixels.len(), 0.0);
        for ((o, &x), &d) in self.pixels.iter_mut().zip(&base.pixels).zip(e) {
            *o = (x + d).clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Binary PPM (P6, maxval 255); samples are divided by 255.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("not a P6/255 PPM: {m}"));
        let mut pos = 0;
        let mut token = || -> Option<&[u8]> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| &bytes[start..pos])
        };
        let number = |t: Option<&[u8]>| -> Option<usize> { std::str::from_utf8(t?).ok()?.parse().ok() };
        if token() != Some(b"P6".as_slice()) {
            return Err(bad("missing P6 magic"));
        }
        let width = number(token()).ok_or_else(|| bad("width"))?;
        let height = number(token()).ok_or_else(|| bad("height"))?;
        let maxval = number(token()).ok_or_else(|| bad("maxval"))?;
        if maxval != 255 {
            return Err(bad(&format!("maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the samples.
        let data = bytes.get(pos + 1..).ok_or_else(|| bad("no pixel data"))?;
        let n = width.checked_mul(height).and_then(|v| v.checked_mul(3)).ok_or_else(|| bad("size"))?;
        if data.len() < n {
            return Err(bad(&format!("{} of {n} samples present", data.len())));
        }
        let pixels = data[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(width, height, 3, pixels)
    }

    /// Quantizes `v * 255` with round-half-to-even.
    pub fn to_ppm(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(Error::InvalidArgument(format!("PPM needs 3 channels, image has {}", self.channels)));
        }
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|&v| quantize(v)));
        Ok(out)
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        Self::from_ppm(&fs::read(path)?)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_ppm()?)?;
        Ok(())
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}
