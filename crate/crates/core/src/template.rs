//! Rematching of leftover features by phase correlation of amplitude templates
//! on the similarity-corrected sensed image.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{Fft2, Fft3};
use crate::image::{bilinear, GrayImage};
use crate::log_gabor::OrientationAmplitude;
use crate::matching::{Match, SimilarityTransform, Stage};

/// Stabilizes the magnitude normalization of the cross-power spectrum.
const SPECTRUM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateParams {
    /// Template side in pixels.
    pub window: usize,
    /// Minimum correlation peak for acceptance.
    pub accept_thresh: f64,
    /// Orientation layers per template.
    pub n_orients: usize,
}

impl Default for TemplateParams {
    fn default() -> Self {
        Self {
            window: 64,
            accept_thresh: 0.1,
            n_orients: 6,
        }
    }
}

impl TemplateParams {
    /// Largest accepted offset along either axis.
    pub fn offset_cap(&self) -> i64 {
        (self.window / 4) as i64
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 4 || self.n_orients == 0 {
            return Err(Error::InvalidParameter(format!(
                "template window {} and orientations {} must be at least 4 and 1",
                self.window, self.n_orients
            )));
        }
        if !(self.accept_thresh.is_finite()) {
            return Err(Error::InvalidParameter("template threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Sensed image pulled into the reference frame, with the pixels that had a source.
#[derive(Debug, Clone)]
pub struct Resampled {
    pub image: GrayImage,
    pub valid: Array2<bool>,
}

/// Warps `sen` into a `ref_dims` grid: output pixel `p` takes the bilinear sample
/// of `sen` at `M^-1(p)`. Pixels without a source are 0 and marked invalid.
pub fn resample_sensed(sen: &GrayImage, m: &SimilarityTransform, ref_dims: (usize, usize)) -> Result<Resampled> {
    let inv = m.inverse()?;
    let (rows, cols) = ref_dims;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyImage { rows, cols });
    }
    let samples: Vec<Option<f64>> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (x, y) = inv.apply((c as f64, r as f64));
            bilinear(sen.data(), x, y)
        })
        .collect();
    let data = Array2::from_shape_fn(ref_dims, |(r, c)| samples[r * cols + c].unwrap_or(0.0));
    let valid = Array2::from_shape_fn(ref_dims, |(r, c)| samples[r * cols + c].is_some());
    Ok(Resampled {
        image: GrayImage::from_array_clamped(data),
        valid,
    })
}

/// Orientation-stacked amplitude window, jointly normalized to unit energy.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateFeature {
    /// Center `(x, y)` in its image frame.
    pub origin: (usize, usize),
    pub window: usize,
    pub n_orients: usize,
    /// Layer-major `n_orients x window x window` values.
    pub values: Vec<f64>,
}

impl TemplateFeature {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Removes each layer's mean and applies a separable Hann taper, then
    /// renormalizes. Suppresses the wrap-around edge that otherwise dominates
    /// the whitened spectrum of smooth, non-periodic windows.
    pub fn apodized(&self) -> Result<Self> {
        let n = self.window;
        let taper: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        let mut out = self.clone();
        for layer in out.values.chunks_mut(n * n) {
            let mean = layer.iter().sum::<f64>() / layer.len() as f64;
            for (k, v) in layer.iter_mut().enumerate() {
                *v = (*v - mean) * taper[k / n] * taper[k % n];
            }
        }
        out.normalize()?;
        Ok(out)
    }

    /// Rescales to unit energy. Fails on an all-zero stack.
    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroEnergy);
        }
        self.values.iter_mut().for_each(|v| *v /= norm);
        Ok(())
    }
}

/// Top-left corner of a `window` square centred on `c`, when it fits in `len`.
fn window_start(c: usize, window: usize, len: usize) -> Option<usize> {
    let start = c.checked_sub(window / 2)?;
    (start + window <= len).then_some(start)
}

pub fn window_fits(dims: (usize, usize), center: (usize, usize), window: usize) -> bool {
    window_start(center.0, window, dims.1).is_some() && window_start(center.1, window, dims.0).is_some()
}

pub fn build_template(ao: &OrientationAmplitude, center: (usize, usize), window: usize) -> Result<TemplateFeature> {
    let (rows, cols) = ao.dims();
    let (Some(x0), Some(y0)) = (window_start(center.0, window, cols), window_start(center.1, window, rows)) else {
        return Err(Error::OutOfBounds);
    };
    let mut values = Vec::with_capacity(ao.n_orients() * window * window);
    for layer in &ao.layers {
        for r in y0..y0 + window {
            values.extend(layer.row(r).iter().skip(x0).take(window));
        }
    }
    let mut t = TemplateFeature {
        origin: center,
        window,
        n_orients: ao.n_orients(),
        values,
    };
    t.normalize()?;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPeak {
    pub dx: i64,
    pub dy: i64,
    pub peak_value: f64,
    /// Relation function at zero orientation shift, `window x window`.
    pub surface: Option<Array2<f64>>,
}

impl CorrelationPeak {
    pub fn accepted(&self, params: &TemplateParams) -> bool {
        let cap = params.offset_cap();
        self.peak_value >= params.accept_thresh && self.dx.abs() <= cap && self.dy.abs() <= cap
    }
}

fn unwrap(k: usize, n: usize) -> i64 {
    if k > n / 2 {
        k as i64 - n as i64
    } else {
        k as i64
    }
}

/// Phase correlation of two stacks. A positive `(dx, dy)` means `t2`'s content
/// sits at `t1`'s position plus the offset.
pub fn phase_correlate(t1: &TemplateFeature, t2: &TemplateFeature) -> Result<CorrelationPeak> {
    Correlator::new(t1.n_orients, t1.window).correlate(t1, t2)
}

/// Precomputed transforms for correlating stacks of one shape.
#[derive(Clone)]
pub struct Correlator {
    depth: usize,
    window: usize,
    volume: Fft3,
    plane: Fft2,
}

impl Correlator {
    pub fn new(depth: usize, window: usize) -> Self {
        Self {
            depth,
            window,
            volume: Fft3::new(depth, window, window),
            plane: Fft2::new(window, window),
        }
    }

    /// Both stacks are real, so one complex transform of `t1 + i t2` yields
    /// both spectra. The zero orientation-shift slice of the inverse volume is
    /// the plane inverse of the cross-power spectrum summed over depth.
    pub fn correlate(&self, t1: &TemplateFeature, t2: &TemplateFeature) -> Result<CorrelationPeak> {
        let (depth, n) = (self.depth, self.window);
        if t1.window != n || t2.window != n || t1.n_orients != depth || t2.n_orients != depth || t1.values.len() != t2.values.len() {
            return Err(Error::DimensionMismatch {
                expected: (t1.n_orients, t1.window),
                actual: (t2.n_orients, t2.window),
            });
        }
        let mut z: Vec<Complex64> = t1.values.iter().zip(&t2.values).map(|(&a, &b)| Complex64::new(a, b)).collect();
        self.volume.process(&mut z, false);
        let plane = n * n;
        let neg = |k: usize, len: usize| (len - k) % len;
        let mut summed = Array2::<Complex64>::zeros((n, n));
        for d in 0..depth {
            for r in 0..n {
                for c in 0..n {
                    let zk = z[d * plane + r * n + c];
                    let zm = z[neg(d, depth) * plane + neg(r, n) * n + neg(c, n)].conj();
                    let f1 = (zk + zm) * 0.5;
                    let f2 = (zk - zm) * Complex64::new(0.0, -0.5);
                    let cross = f1.conj() * f2;
                    summed[[r, c]] += cross / (cross.norm() + SPECTRUM_EPS);
                }
            }
        }
        self.plane.inverse(&mut summed);
        let surface = summed.mapv(|v| v.re / depth as f64);
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for ((r, c), &v) in surface.indexed_iter() {
            if v > best.2 {
                best = (r, c, v);
            }
        }
        Ok(CorrelationPeak {
            dx: unwrap(best.1, n),
            dy: unwrap(best.0, n),
            peak_value: best.2,
            surface: Some(surface),
        })
    }
}

fn window_valid(mask: &Array2<bool>, center: (usize, usize), window: usize) -> bool {
    let (rows, cols) = mask.dim();
    let (Some(x0), Some(y0)) = (window_start(center.0, window, cols), window_start(center.1, window, rows)) else {
        return false;
    };
    mask.slice(ndarray::s![y0..y0 + window, x0..x0 + window]).iter().all(|&v| v)
}

/// Correlates the reference and resampled-sensed templates centred on `center`.
/// `None` when either window leaves the image, touches unsampled pixels, or is flat.
pub fn correlate_at(
    plan: &Correlator,
    ref_ao: &OrientationAmplitude,
    sen_ao: &OrientationAmplitude,
    valid: &Array2<bool>,
    center: (usize, usize),
    window: usize,
) -> Option<CorrelationPeak> {
    if !window_valid(valid, center, window) {
        return None;
    }
    let t_ref = build_template(ref_ao, center, window).ok()?.apodized().ok()?;
    let t_sen = build_template(sen_ao, center, window).ok()?.apodized().ok()?;
    plan.correlate(&t_ref, &t_sen).ok().map(|mut p| {
        p.surface = None;
        p
    })
}

/// Template matches for reference points (original reference pixels) that the
/// feature stage left unmatched.
///
/// Sensed points are mapped back through `M^-1`; matches falling outside the
/// sensed image are dropped, as are repeats of an already matched reference pixel.
/// The `distance` field carries `1 - peak`.
pub fn rematch(
    unmatched_ref: &[(f64, f64)],
    ref_ao: &OrientationAmplitude,
    sen_ao: &OrientationAmplitude,
    valid: &Array2<bool>,
    m: &SimilarityTransform,
    sen_dims: (usize, usize),
    params: &TemplateParams,
) -> Result<Vec<Match>> {
    if ref_ao.dims() != sen_ao.dims() || ref_ao.n_orients() != sen_ao.n_orients() {
        return Err(Error::DimensionMismatch {
            expected: ref_ao.dims(),
            actual: sen_ao.dims(),
        });
    }
    let inv = m.inverse()?;
    let mut centers: Vec<(usize, usize)> = unmatched_ref
        .iter()
        .filter(|p| p.0 >= 0.0 && p.1 >= 0.0)
        .map(|&(x, y)| (x.round() as usize, y.round() as usize))
        .collect();
    centers.sort_unstable_by_key(|&(x, y)| (y, x));
    centers.dedup();
    let plan = Correlator::new(ref_ao.n_orients(), params.window);
    let max_x = sen_dims.1.saturating_sub(1) as f64;
    let max_y = sen_dims.0.saturating_sub(1) as f64;
    let matches = centers
        .par_iter()
        .filter_map(|&center| {
            let peak = correlate_at(&plan, ref_ao, sen_ao, valid, center, params.window)?;
            if !peak.accepted(params) {
                return None;
            }
            let resampled = ((center.0 as i64 + peak.dx) as f64, (center.1 as i64 + peak.dy) as f64);
            let sen_point = inv.apply(resampled);
            let inside = (0.0..=max_x).contains(&sen_point.0) && (0.0..=max_y).contains(&sen_point.1);
            inside.then_some(Match {
                ref_point: (center.0 as f64, center.1 as f64),
                sen_point,
                distance: 1.0 - peak.peak_value,
                stage: Stage::Template,
                ref_feature: None,
                sen_feature: None,
            })
        })
        .collect();
    Ok(matches)
}
