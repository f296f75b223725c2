//! Gaussian smoothing and the octave / intra-octave scale space.
//!
//! Layers are numbered in increasing scale order: `a_0, b_0, a_1, b_1, ...`, so
//! layer `2i` is octave `a_i` (scale `2^i`) and layer `2i + 1` is the intra-octave
//! layer `b_i` (scale `1.5 * 2^i`). A pixel `(x, y)` of a layer sits at
//! `(scale * x, scale * y)` in the original image.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::image::{bilinear, GrayImage};

/// Smallest layer side (in pixels) a pyramid may produce.
pub const MIN_LAYER_SIDE: usize = 24;

/// Scale factor between `a_0` and `b_0`.
pub const INTRA_OCTAVE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub half_width: usize,
    pub sigma: f64,
    /// `(2m+1) x (2m+1)` weights summing to one.
    pub weights: Array2<f64>,
}

impl GaussianKernel {
    /// The separable 1D factor of the kernel (its row marginal).
    pub fn marginal(&self) -> Vec<f64> {
        self.weights.sum_axis(ndarray::Axis(0)).to_vec()
    }
}

/// Unnormalized 2D Gaussian weight `exp(-(m^2+n^2)/(2 sigma^2)) / sqrt(2 pi sigma^2)`.
pub fn gaussian_weight(m: f64, n: f64, sigma: f64) -> f64 {
    (-(m * m + n * n) / (2.0 * sigma * sigma)).exp() / (2.0 * std::f64::consts::PI * sigma * sigma).sqrt()
}

pub fn gaussian_kernel(sigma: f64) -> Result<GaussianKernel> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gaussian sigma must be positive, got {sigma}")));
    }
    let half_width = (3.0 * sigma).ceil() as usize;
    let size = 2 * half_width + 1;
    let hw = half_width as f64;
    let mut weights = Array2::from_shape_fn((size, size), |(r, c)| {
        gaussian_weight(r as f64 - hw, c as f64 - hw, sigma)
    });
    let total = weights.sum();
    weights /= total;
    Ok(GaussianKernel {
        half_width,
        sigma,
        weights,
    })
}

/// Reflect-101 index: mirrors around the edge pixel without repeating it.
pub(crate) fn reflect101(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= len as isize {
        i = period - i;
    }
    i as usize
}

/// Convolves a grid with the kernel using reflect-101 borders.
/// The kernel is applied as two 1D passes with its marginal, which is exact for a Gaussian.
pub fn smooth(grid: &Array2<f64>, kernel: &GaussianKernel) -> Array2<f64> {
    let taps = kernel.marginal();
    let m = kernel.half_width as isize;
    let (rows, cols) = grid.dim();
    let mut horiz = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, w) in taps.iter().enumerate() {
                acc += w * grid[[r, reflect101(c as isize + k as isize - m, cols)]];
            }
            horiz[[r, c]] = acc;
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (k, w) in taps.iter().enumerate() {
                acc += w * horiz[[reflect101(r as isize + k as isize - m, rows), c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Gaussian smoothing followed by 2x decimation; odd sizes round up.
pub fn half_sample(img: &GrayImage, kernel: &GaussianKernel) -> GrayImage {
    let smoothed = smooth(img.data(), kernel);
    let rows = img.rows().div_ceil(2);
    let cols = img.cols().div_ceil(2);
    GrayImage::from_fn(rows, cols, |r, c| smoothed[[2 * r, 2 * c]])
}

/// Bilinear resample where output pixel `(x, y)` reads input `(factor*x, factor*y)`.
/// Output dims are `round(dim / factor)` per axis.
pub fn resample_by_factor(img: &GrayImage, factor: f64) -> GrayImage {
    let rows = ((img.rows() as f64 / factor).round() as usize).max(1);
    let cols = ((img.cols() as f64 / factor).round() as usize).max(1);
    let max_x = (img.cols() - 1) as f64;
    let max_y = (img.rows() - 1) as f64;
    GrayImage::from_fn(rows, cols, |r, c| {
        let x = (c as f64 * factor).min(max_x);
        let y = (r as f64 * factor).min(max_y);
        bilinear(img.data(), x, y).unwrap_or(0.0)
    })
}

/// Smallest image side that admits `n_octaves`.
pub fn required_side(n_octaves: usize) -> usize {
    (1usize << n_octaves.saturating_sub(1)) * MIN_LAYER_SIDE
}

/// Largest octave count not exceeding `requested` that the image admits (0 if none).
pub fn admissible_octaves(rows: usize, cols: usize, requested: usize) -> usize {
    let side = rows.min(cols);
    (1..=requested).rev().find(|&n| side >= required_side(n)).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<GrayImage>,
    pub intra_octaves: Vec<GrayImage>,
}

impl ScaleSpace {
    pub fn n_octaves(&self) -> usize {
        self.octaves.len()
    }

    pub fn n_layers(&self) -> usize {
        2 * self.octaves.len()
    }

    pub fn layer(&self, layer_id: usize) -> &GrayImage {
        if layer_id % 2 == 0 {
            &self.octaves[layer_id / 2]
        } else {
            &self.intra_octaves[layer_id / 2]
        }
    }

    /// Factor mapping layer coordinates to original-image coordinates.
    pub fn layer_scale(layer_id: usize) -> f64 {
        let octave = (1u64 << (layer_id / 2)) as f64;
        if layer_id % 2 == 0 {
            octave
        } else {
            INTRA_OCTAVE_FACTOR * octave
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, &GrayImage)> {
        (0..self.n_layers()).map(move |id| (id, self.layer(id)))
    }
}

pub fn build_scale_space(img: &GrayImage, n_octaves: usize, sigma: f64) -> Result<ScaleSpace> {
    if n_octaves == 0 {
        return Err(Error::InvalidParameter("n_octaves must be at least 1".into()));
    }
    let required = required_side(n_octaves);
    if img.rows().min(img.cols()) < required {
        return Err(Error::ImageTooSmall {
            rows: img.rows(),
            cols: img.cols(),
            n_octaves,
            required,
        });
    }
    let kernel = gaussian_kernel(sigma)?;
    let chain = |first: GrayImage| {
        let mut layers = Vec::with_capacity(n_octaves);
        layers.push(first);
        for _ in 1..n_octaves {
            let next = half_sample(layers.last().unwrap(), &kernel);
            layers.push(next);
        }
        layers
    };
    let (octaves, intra_octaves) = rayon::join(
        || chain(img.clone()),
        || chain(resample_by_factor(img, INTRA_OCTAVE_FACTOR)),
    );
    Ok(ScaleSpace {
        octaves,
        intra_octaves,
    })
}
