//! Grayscale image container, file IO and bilinear sampling.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};
use ndarray::Array2;

use crate::error::{Error, Result};

/// BT.601 luma weights in thousandths, so that white maps to exactly 1.0.
const LUMA_WEIGHTS: [u32; 3] = [299, 587, 114];

/// Row-major grid of normalized intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    data: Array2<f64>,
}

impl GrayImage {
    /// Wraps an array after checking that it is nonempty and every value is finite in `[0, 1]`.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyImage { rows, cols });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidPixels(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { data })
    }

    /// Builds an image from a closure over `(row, col)`, clamping results into `[0, 1]`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "image dimensions must be positive");
        let data = Array2::from_shape_fn((rows, cols), |(r, c)| {
            let v = f(r, c);
            if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            }
        });
        Self { data }
    }

    /// Clamps an arbitrary array into a valid image; non-finite values become 0.
    pub fn from_array_clamped(data: Array2<f64>) -> Self {
        let (rows, cols) = data.dim();
        Self::from_fn(rows, cols, |r, c| data[[r, c]])
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_fn(rows, cols, |_, _| value)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[[row, col]]
    }

    /// Bilinear sample at continuous coordinates `(x, y)` = `(col, row)`.
    /// Returns `None` outside `[0, cols-1] x [0, rows-1]`.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        bilinear(&self.data, x, y)
    }

    /// Applies `f` to every pixel, clamping results into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(self.rows(), self.cols(), |r, c| f(self.data[[r, c]]))
    }

    pub fn to_luma8(&self) -> ImageBuffer<Luma<u8>, Vec<u8>> {
        let (rows, cols) = self.dims();
        ImageBuffer::from_fn(cols as u32, rows as u32, |x, y| {
            Luma([(self.data[[y as usize, x as usize]] * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8().save(path).map_err(|source| Error::ImageWrite {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Bilinear interpolation on a grid. `x` indexes columns and `y` rows.
pub fn bilinear(grid: &Array2<f64>, x: f64, y: f64) -> Option<f64> {
    let (rows, cols) = grid.dim();
    let max_x = (cols - 1) as f64;
    let max_y = (rows - 1) as f64;
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return None;
    }
    let x0 = (x.floor() as usize).min(cols.saturating_sub(2));
    let y0 = (y.floor() as usize).min(rows.saturating_sub(2));
    let x1 = (x0 + 1).min(cols - 1);
    let y1 = (y0 + 1).min(rows - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = grid[[y0, x0]] * (1.0 - fx) + grid[[y0, x1]] * fx;
    let bottom = grid[[y1, x0]] * (1.0 - fx) + grid[[y1, x1]] * fx;
    Some(top * (1.0 - fy) + bottom * fy)
}

/// Loads an 8/16-bit grayscale or RGB raster and normalizes it into `[0, 1]`.
/// Color inputs are reduced to BT.601 luminance; alpha is ignored.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let dynamic = image::open(path).map_err(|source| match source {
        image::ImageError::Unsupported(e) => Error::UnsupportedFormat(e.to_string()),
        source => Error::ImageRead {
            path: path.to_path_buf(),
            source,
        },
    })?;
    from_dynamic(&dynamic)
}

pub fn from_dynamic(dynamic: &DynamicImage) -> Result<GrayImage> {
    let (cols, rows) = (dynamic.width() as usize, dynamic.height() as usize);
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyImage { rows, cols });
    }
    let data = match dynamic {
        DynamicImage::ImageLuma8(buf) => gray_from(buf.as_raw(), 1, 255),
        DynamicImage::ImageLumaA8(buf) => gray_from(buf.as_raw(), 2, 255),
        DynamicImage::ImageLuma16(buf) => gray_from(buf.as_raw(), 1, 65535),
        DynamicImage::ImageLumaA16(buf) => gray_from(buf.as_raw(), 2, 65535),
        DynamicImage::ImageRgb8(buf) => luma_from(buf.as_raw(), 3, 255),
        DynamicImage::ImageRgba8(buf) => luma_from(buf.as_raw(), 4, 255),
        DynamicImage::ImageRgb16(buf) => luma_from(buf.as_raw(), 3, 65535),
        DynamicImage::ImageRgba16(buf) => luma_from(buf.as_raw(), 4, 65535),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{:?}",
                other.color()
            )))
        }
    };
    let data = Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::InvalidPixels(e.to_string()))?;
    GrayImage::new(data)
}

fn gray_from<T: Copy + Into<u32>>(raw: &[T], stride: usize, max: u32) -> Vec<f64> {
    raw.chunks_exact(stride)
        .map(|px| px[0].into() as f64 / max as f64)
        .collect()
}

fn luma_from<T: Copy + Into<u32>>(raw: &[T], stride: usize, max: u32) -> Vec<f64> {
    let denom = 1000.0 * max as f64;
    raw.chunks_exact(stride)
        .map(|px| {
            let weighted: u64 = px[..3]
                .iter()
                .zip(LUMA_WEIGHTS)
                .map(|(&c, w)| c.into() as u64 * w as u64)
                .sum();
            (weighted as f64 / denom).min(1.0)
        })
        .collect()
}
