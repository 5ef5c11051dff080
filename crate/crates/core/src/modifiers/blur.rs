use crate::error::{Error, Result};

/// Per-output-position taps of a truncated, renormalized 1-D Gaussian.
#[derive(Debug, Clone)]
struct AxisKernel {
    taps: Vec<(usize, Vec<f64>)>,
}

impl AxisKernel {
    fn new(len: usize, sigma: f64) -> Self {
        let radius = (3.0 * sigma).ceil() as usize;
        let taps = (0..len)
            .map(|i| {
                let start = i.saturating_sub(radius);
                let end = (i + radius).min(len - 1);
                let mut w: Vec<f64> = (start..=end)
                    .map(|j| {
                        let d = j as f64 - i as f64;
                        (-d * d / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let sum: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= sum);
                (start, w)
            })
            .collect();
        Self { taps }
    }
}

/// Separable Gaussian blur over the two spatial axes of a row-major,
/// channel-interleaved `height x width x channels` tensor.
///
/// The kernel is truncated at radius `ceil(3 sigma)`; near the borders the
/// remaining weights are rescaled to sum to one, so constant images are fixed.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    height: usize,
    width: usize,
    channels: usize,
    sigma: f64,
    rows: AxisKernel,
    cols: AxisKernel,
}

impl GaussianBlur {
    /// `shape` is `[height, width]` or `[height, width, channels]`.
    pub fn new(shape: &[usize], sigma: f64) -> Result<Self> {
        let (height, width, channels) = match *shape {
            [h, w] => (h, w, 1),
            [h, w, c] => (h, w, c),
            _ => return Err(Error::InvalidSpace(format!("blur needs a 2-D or 2-D x channels shape, got {shape:?}"))),
        };
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
        }
        Ok(Self {
            height,
            width,
            channels,
            sigma,
            rows: AxisKernel::new(height, sigma),
            cols: AxisKernel::new(width, sigma),
        })
    }

    /// Default width: one eighth of the image width.
    pub fn default_sigma(shape: &[usize]) -> Option<f64> {
        shape.get(1).map(|&w| w as f64 / 8.0)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), self.len(), "tensor size does not match blur shape");
        let (h, w, c) = (self.height, self.width, self.channels);
        // Both passes run down the leading axis so the inner loop is a
        // contiguous row update; a transpose in between swaps the axes.
        let vertical = convolve_rows(input, &self.rows, w * c);
        let transposed = transpose(&vertical, h, w, c);
        let horizontal = convolve_rows(&transposed, &self.cols, h * c);
        transpose(&horizontal, w, h, c)
    }
}

fn convolve_rows(input: &[f64], kernel: &AxisKernel, row_len: usize) -> Vec<f64> {
    let mut output = vec![0.0; input.len()];
    for (dst, (start, weights)) in output.chunks_exact_mut(row_len).zip(&kernel.taps) {
        for (k, &wt) in weights.iter().enumerate() {
            let src = &input[(start + k) * row_len..(start + k + 1) * row_len];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o += wt * v;
            }
        }
    }
    output
}

/// `[a][b][c] -> [b][a][c]`.
fn transpose(input: &[f64], a: usize, b: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for i in 0..a {
        for j in 0..b {
            out[(j * a + i) * c..(j * a + i + 1) * c].copy_from_slice(&input[(i * b + j) * c..(i * b + j + 1) * c]);
        }
    }
    out
}
