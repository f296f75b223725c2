//! Synthetic image pairs with known geometry, for sweeps and tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::eval::CheckpointSet;
use crate::image::{bilinear, GrayImage};
use crate::matching::SimilarityTransform;
use crate::pyramid::{gaussian_kernel, smooth};

/// Procedural scene of overlapping anti-aliased shapes over a smooth background.
pub fn procedural_scene(side: usize, n_shapes: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = side as f64;
    let (gx, gy, g0) = (rng.gen_range(-0.3..0.3) / s, rng.gen_range(-0.3..0.3) / s, rng.gen_range(0.3..0.7));
    let mut canvas = Array2::from_shape_fn((side, side), |(r, c)| g0 + gx * (c as f64 - s / 2.0) + gy * (r as f64 - s / 2.0));
    for _ in 0..n_shapes {
        let shape = Shape::random(&mut rng, s);
        let level = rng.gen_range(0.05..0.95);
        let alpha = rng.gen_range(0.6..1.0);
        let (x0, y0, x1, y1) = shape.bounds(side);
        for r in y0..y1 {
            for c in x0..x1 {
                let cover = shape.coverage(c as f64, r as f64) * alpha;
                if cover > 0.0 {
                    let v = &mut canvas[[r, c]];
                    *v = *v * (1.0 - cover) + level * cover;
                }
            }
        }
    }
    GrayImage::from_array_clamped(canvas)
}

enum Shape {
    Ellipse { cx: f64, cy: f64, a: f64, b: f64, angle: f64 },
    /// Convex polygon, counter-clockwise in image coordinates.
    Polygon { pts: Vec<(f64, f64)> },
}

impl Shape {
    fn random(rng: &mut ChaCha8Rng, side: f64) -> Self {
        let cx = rng.gen_range(0.0..side);
        let cy = rng.gen_range(0.0..side);
        let size = rng.gen_range(6.0..60.0);
        let angle = rng.gen_range(0.0..std::f64::consts::PI);
        match rng.gen_range(0..3) {
            0 => Shape::Ellipse {
                cx,
                cy,
                a: size,
                b: size * rng.gen_range(0.3..1.0),
                angle,
            },
            1 => {
                let (w, h) = (size, size * rng.gen_range(0.2..1.0));
                let (sin, cos) = angle.sin_cos();
                let pts = [(-w, -h), (w, -h), (w, h), (-w, h)]
                    .iter()
                    .map(|&(x, y)| (cx + cos * x - sin * y, cy + sin * x + cos * y))
                    .collect();
                Shape::Polygon { pts }
            }
            _ => {
                let mut angles: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                angles.sort_by(f64::total_cmp);
                let pts = angles.iter().map(|a| (cx + size * a.cos(), cy + size * a.sin())).collect();
                Shape::Polygon { pts }
            }
        }
    }

    fn bounds(&self, side: usize) -> (usize, usize, usize, usize) {
        let (x0, y0, x1, y1) = match self {
            Shape::Ellipse { cx, cy, a, .. } => (cx - a, cy - a, cx + a, cy + a),
            Shape::Polygon { pts } => pts.iter().fold(
                (f64::MAX, f64::MAX, f64::MIN, f64::MIN),
                |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
            ),
        };
        let clamp = |v: f64| (v.max(0.0) as usize).min(side);
        (clamp(x0 - 2.0), clamp(y0 - 2.0), clamp(x1 + 3.0), clamp(y1 + 3.0))
    }

    /// Approximate pixel coverage from a signed distance, 1 px ramp.
    fn coverage(&self, x: f64, y: f64) -> f64 {
        let sd = match self {
            Shape::Ellipse { cx, cy, a, b, angle } => {
                let (sin, cos) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (cos * dx + sin * dy) / a;
                let v = (-sin * dx + cos * dy) / b;
                (u.hypot(v) - 1.0) * a.min(*b)
            }
            Shape::Polygon { pts } => {
                let n = pts.len();
                (0..n)
                    .map(|i| {
                        let (ax, ay) = pts[i];
                        let (bx, by) = pts[(i + 1) % n];
                        let (ex, ey) = (bx - ax, by - ay);
                        let len = ex.hypot(ey).max(1e-9);
                        // Outward normal for counter-clockwise order (y down).
                        ((x - ax) * ey - (y - ay) * ex) / len
                    })
                    .fold(f64::MIN, f64::max)
            }
        };
        (0.5 - sd).clamp(0.0, 1.0)
    }
}

/// Source canvas with the reference image as an axis-aligned crop.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub canvas: GrayImage,
    /// Top-left of the reference crop in canvas pixels.
    pub origin: (f64, f64),
    pub ref_dims: (usize, usize),
}

impl SyntheticSource {
    /// `ref_side`-square reference cut from the centre of a twice-as-large scene.
    pub fn scene(ref_side: usize, seed: u64) -> Self {
        let side = 2 * ref_side;
        let n_shapes = side * side / 2500;
        Self {
            canvas: procedural_scene(side, n_shapes, seed),
            origin: ((side - ref_side) as f64 / 2.0, (side - ref_side) as f64 / 2.0),
            ref_dims: (ref_side, ref_side),
        }
    }

    /// Uses an existing image as both canvas and reference.
    pub fn from_image(img: GrayImage) -> Self {
        let dims = img.dims();
        Self {
            canvas: img,
            origin: (0.0, 0.0),
            ref_dims: dims,
        }
    }

    pub fn reference(&self) -> GrayImage {
        let (ox, oy) = (self.origin.0 as usize, self.origin.1 as usize);
        let c = self.canvas.data();
        GrayImage::from_fn(self.ref_dims.0, self.ref_dims.1, |r, col| c[[r + oy, col + ox]])
    }

    /// Sensed image of `sen_dims` whose pixel `q` shows reference point `m(q)`.
    /// Downscaling renders are prefiltered; points outside the canvas are 0.
    pub fn render(&self, m: &SimilarityTransform, sen_dims: (usize, usize)) -> Result<GrayImage> {
        let sigma = 0.5 * (m.scale * m.scale - 1.0).max(0.0).sqrt();
        let blurred;
        let grid = if sigma > 0.1 {
            blurred = smooth(self.canvas.data(), &gaussian_kernel(sigma)?);
            &blurred
        } else {
            self.canvas.data()
        };
        let (rows, cols) = sen_dims;
        let values: Vec<f64> = (0..rows * cols)
            .into_par_iter()
            .map(|i| {
                let (x, y) = m.apply(((i % cols) as f64, (i / cols) as f64));
                bilinear(grid, x + self.origin.0, y + self.origin.1).unwrap_or(0.0)
            })
            .collect();
        Ok(GrayImage::from_fn(rows, cols, |r, c| values[r * cols + c]))
    }

    /// Grid of ground-truth checkpoints: reference points whose sensed position
    /// lies inside the sensed image with a `margin`.
    pub fn checkpoints(&self, m: &SimilarityTransform, sen_dims: (usize, usize), per_side: usize, margin: f64) -> Result<CheckpointSet> {
        let inv = m.inverse()?;
        let (rows, cols) = self.ref_dims;
        let mut pairs = Vec::new();
        for i in 0..per_side {
            for j in 0..per_side {
                let x = margin + (cols as f64 - 1.0 - 2.0 * margin) * (j as f64 + 0.5) / per_side as f64;
                let y = margin + (rows as f64 - 1.0 - 2.0 * margin) * (i as f64 + 0.5) / per_side as f64;
                let s = inv.apply((x, y));
                if s.0 >= margin && s.1 >= margin && s.0 <= sen_dims.1 as f64 - 1.0 - margin && s.1 <= sen_dims.0 as f64 - 1.0 - margin {
                    pairs.push(((x, y), s));
                }
            }
        }
        CheckpointSet::new(pairs)
    }
}

/// Sensed dims and transform for rotation `deg` about the centre and scale ratio `k`
/// (one sensed pixel spans `k` reference pixels) of a `ref_dims` reference.
pub fn planted_transform(ref_dims: (usize, usize), deg: f64, k: f64) -> (SimilarityTransform, (usize, usize)) {
    let sen_dims = (
        (ref_dims.0 as f64 / k).round() as usize,
        (ref_dims.1 as f64 / k).round() as usize,
    );
    let sen_center = ((sen_dims.1 as f64 - 1.0) / 2.0, (sen_dims.0 as f64 - 1.0) / 2.0);
    let ref_center = ((ref_dims.1 as f64 - 1.0) / 2.0, (ref_dims.0 as f64 - 1.0) / 2.0);
    let about = SimilarityTransform::new(k, deg.to_radians(), 0.0, 0.0);
    let (rx, ry) = about.apply(sen_center);
    let m = SimilarityTransform::new(k, deg.to_radians(), ref_center.0 - rx, ref_center.1 - ry);
    (m, sen_dims)
}

/// Nonlinear intensity distortions standing in for a change of modality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntensityRemap {
    Gamma(f64),
    Inversion,
    /// Local mean/deviation normalization squashed by `tanh`, over a Gaussian of this sigma.
    LocalContrast(f64),
}

impl IntensityRemap {
    pub fn suite() -> [IntensityRemap; 4] {
        [
            IntensityRemap::Gamma(0.4),
            IntensityRemap::Gamma(2.5),
            IntensityRemap::Inversion,
            IntensityRemap::LocalContrast(8.0),
        ]
    }

    pub fn name(&self) -> String {
        match self {
            IntensityRemap::Gamma(g) => format!("gamma {g}"),
            IntensityRemap::Inversion => "inversion".into(),
            IntensityRemap::LocalContrast(_) => "local contrast".into(),
        }
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        Ok(match *self {
            IntensityRemap::Gamma(g) => img.map(|v| v.powf(g)),
            IntensityRemap::Inversion => img.map(|v| 1.0 - v),
            IntensityRemap::LocalContrast(sigma) => {
                let kernel = gaussian_kernel(sigma)?;
                let mean = smooth(img.data(), &kernel);
                let sq = smooth(&img.data().mapv(|v| v * v), &kernel);
                let (rows, cols) = img.dims();
                GrayImage::from_fn(rows, cols, |r, c| {
                    let m = mean[[r, c]];
                    let sd = (sq[[r, c]] - m * m).max(0.0).sqrt();
                    0.5 + 0.5 * ((img.get(r, c) - m) / (sd + 0.02)).tanh()
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_is_deterministic_and_textured() {
        let a = procedural_scene(128, 20, 3);
        let b = procedural_scene(128, 20, 3);
        assert_eq!(a, b);
        let mean = a.data().mean().unwrap();
        let var = a.data().mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!(var > 1e-3);
    }

    #[test]
    fn identity_render_is_reference() {
        let src = SyntheticSource::scene(64, 1);
        let (m, dims) = planted_transform((64, 64), 0.0, 1.0);
        let sen = src.render(&m, dims).unwrap();
        let reference = src.reference();
        for (a, b) in sen.data().iter().zip(reference.data().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn planted_transform_maps_centre_to_centre() {
        let (m, dims) = planted_transform((512, 512), 30.0, 2.0);
        assert_eq!(dims, (256, 256));
        let c = m.apply((127.5, 127.5));
        assert!((c.0 - 255.5).abs() < 1e-9 && (c.1 - 255.5).abs() < 1e-9);
    }

    #[test]
    fn rendered_pixels_match_checkpoints() {
        let src = SyntheticSource::scene(128, 2);
        let (m, dims) = planted_transform((128, 128), 25.0, 1.0);
        let sen = src.render(&m, dims).unwrap();
        let reference = src.reference();
        let cps = src.checkpoints(&m, dims, 4, 4.0).unwrap();
        for &((rx, ry), (sx, sy)) in &cps.pairs {
            let a = reference.sample_bilinear(rx, ry).unwrap();
            let b = sen.sample_bilinear(sx, sy).unwrap();
            assert!((a - b).abs() < 0.15);
        }
    }

    #[test]
    fn remaps_stay_in_range() {
        let img = procedural_scene(64, 10, 4);
        for remap in IntensityRemap::suite() {
            let out = remap.apply(&img).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let inv = IntensityRemap::Inversion.apply(&img).unwrap();
        assert!((inv.get(3, 3) + img.get(3, 3) - 1.0).abs() < 1e-12);
    }
}
