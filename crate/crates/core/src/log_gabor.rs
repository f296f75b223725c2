//! Frequency-domain log-Gabor filter bank and the maps derived from its responses.
//!
//! Each transfer function is the product of a radial term, a Gaussian on the
//! log-frequency axis centred at `f_s`, and an angular term, a Gaussian on the
//! wrapped angular distance to `theta_o`. The angular term covers one half-plane,
//! so the inverse transform of a filtered real image is an analytic signal: the
//! real part is the even-symmetric response and the imaginary part the odd one.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{bin_frequency, Fft2};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGaborParams {
    pub n_scales: usize,
    pub n_orients: usize,
    /// Wavelength of the finest scale, in pixels.
    pub min_wavelength: f64,
    /// Ratio between successive wavelengths.
    pub scale_step: f64,
    /// Radial bandwidth ratio (`sigma_on_f`).
    pub sigma_r: f64,
    /// Angular bandwidth in radians; `None` means `(pi / n_orients) / 1.2`.
    pub sigma_theta: Option<f64>,
}

impl Default for LogGaborParams {
    fn default() -> Self {
        Self {
            n_scales: 4,
            n_orients: 12,
            min_wavelength: 3.0,
            scale_step: 2.1,
            sigma_r: 0.55,
            sigma_theta: None,
        }
    }
}

impl LogGaborParams {
    pub fn with_orients(self, n_orients: usize) -> Self {
        Self { n_orients, ..self }
    }

    pub fn angular_sigma(&self) -> f64 {
        self.sigma_theta
            .unwrap_or(PI / self.n_orients as f64 / 1.2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scales == 0 {
            return Err(Error::InvalidParameter("n_scales must be at least 1".into()));
        }
        if self.n_orients < 4 || self.n_orients % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "n_orients must be even and >= 4, got {}",
                self.n_orients
            )));
        }
        if !(self.min_wavelength >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "min_wavelength {} is below the Nyquist limit of 2 pixels",
                self.min_wavelength
            )));
        }
        if !(self.scale_step > 1.0) {
            return Err(Error::InvalidParameter("scale_step must exceed 1".into()));
        }
        if !(self.sigma_r > 0.0 && self.sigma_r < 1.0) {
            return Err(Error::InvalidParameter("sigma_r must lie in (0, 1)".into()));
        }
        if !(self.angular_sigma() > 0.0) {
            return Err(Error::InvalidParameter("sigma_theta must be positive".into()));
        }
        Ok(())
    }
}

/// Transfer functions for one transform size. The `(s, o)` filter is
/// `radial[s] * angular[o]`; the factors are stored separately.
#[derive(Clone)]
pub struct LogGaborBank {
    pub rows: usize,
    pub cols: usize,
    pub n_scales: usize,
    pub n_orients: usize,
    /// Centre frequency per scale, cycles per pixel.
    pub center_frequencies: Vec<f64>,
    pub sigma_r: f64,
    pub sigma_theta: f64,
    radial: Vec<Array2<f64>>,
    angular: Vec<Array2<f64>>,
    plan: Fft2,
}

impl std::fmt::Debug for LogGaborBank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogGaborBank")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("n_scales", &self.n_scales)
            .field("n_orients", &self.n_orients)
            .field("center_frequencies", &self.center_frequencies)
            .field("sigma_r", &self.sigma_r)
            .field("sigma_theta", &self.sigma_theta)
            .finish()
    }
}

/// Orientation centre of 0-based orientation `o`: `o * pi / n_orients`.
pub fn orientation_angle(o: usize, n_orients: usize) -> f64 {
    o as f64 * PI / n_orients as f64
}

/// Radial factor `exp(-(ln(r/f))^2 / (2 ln(sigma_r)^2))`, zero at DC.
pub fn radial_term(r: f64, center: f64, sigma_r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let ln_ratio = (r / center).ln();
    let ln_sigma = sigma_r.ln();
    (-(ln_ratio * ln_ratio) / (2.0 * ln_sigma * ln_sigma)).exp()
}

/// Angular factor on the wrapped difference `theta - theta_o`.
pub fn angular_term(theta: f64, theta_o: f64, sigma_theta: f64) -> f64 {
    let d = (theta - theta_o).sin().atan2((theta - theta_o).cos());
    (-(d * d) / (2.0 * sigma_theta * sigma_theta)).exp()
}

pub fn build_bank(rows: usize, cols: usize, params: &LogGaborParams) -> Result<LogGaborBank> {
    params.validate()?;
    if rows == 0 || cols == 0 {
        return Err(Error::EmptyImage { rows, cols });
    }
    let sigma_theta = params.angular_sigma();
    let center_frequencies: Vec<f64> = (0..params.n_scales)
        .map(|s| 1.0 / (params.min_wavelength * params.scale_step.powi(s as i32)))
        .collect();

    let polar = |(r, c): (usize, usize)| {
        let v = bin_frequency(r, rows);
        let u = bin_frequency(c, cols);
        // Image rows grow downwards; flip so angles run counter-clockwise on screen.
        ((u * u + v * v).sqrt(), (-v).atan2(u))
    };
    let radial = center_frequencies
        .iter()
        .map(|&f| Array2::from_shape_fn((rows, cols), |rc| radial_term(polar(rc).0, f, params.sigma_r)))
        .collect();
    let angular = (0..params.n_orients)
        .map(|o| {
            let theta_o = orientation_angle(o, params.n_orients);
            Array2::from_shape_fn((rows, cols), |rc| {
                let (r, theta) = polar(rc);
                if r == 0.0 {
                    0.0
                } else {
                    angular_term(theta, theta_o, sigma_theta)
                }
            })
        })
        .collect();

    Ok(LogGaborBank {
        rows,
        cols,
        n_scales: params.n_scales,
        n_orients: params.n_orients,
        center_frequencies,
        sigma_r: params.sigma_r,
        sigma_theta,
        radial,
        angular,
        plan: Fft2::new(rows, cols),
    })
}

impl LogGaborBank {
    pub fn theta(&self, o: usize) -> f64 {
        orientation_angle(o, self.n_orients)
    }

    /// Transfer function of 0-based scale `s` and orientation `o`.
    pub fn filter(&self, s: usize, o: usize) -> Array2<f64> {
        &self.radial[s] * &self.angular[o]
    }

    /// Forward transform of an image sized to this bank.
    pub fn spectrum(&self, img: &GrayImage) -> Result<Array2<Complex64>> {
        if img.dims() != (self.rows, self.cols) {
            return Err(Error::DimensionMismatch {
                expected: (self.rows, self.cols),
                actual: img.dims(),
            });
        }
        Ok(self.plan.forward_real(img.data()))
    }

    /// Complex responses of every scale at orientation `o`, given the image spectrum.
    pub fn convolve_orientation(&self, spectrum: &Array2<Complex64>, o: usize) -> Vec<Array2<Complex64>> {
        (0..self.n_scales)
            .map(|s| {
                let mut buf = Array2::zeros((self.rows, self.cols));
                Zip::from(&mut buf)
                    .and(spectrum)
                    .and(&self.radial[s])
                    .and(&self.angular[o])
                    .for_each(|out, &p, &rad, &ang| *out = p * (rad * ang));
                self.plan.inverse(&mut buf);
                buf
            })
            .collect()
    }
}

/// Complex filter outputs, indexed `[o][s]`.
#[derive(Debug, Clone)]
pub struct FilterResponse {
    pub responses: Vec<Vec<Array2<Complex64>>>,
}

impl FilterResponse {
    pub fn real(&self, s: usize, o: usize) -> Array2<f64> {
        self.responses[o][s].mapv(|v| v.re)
    }

    pub fn imag(&self, s: usize, o: usize) -> Array2<f64> {
        self.responses[o][s].mapv(|v| v.im)
    }

    pub fn n_orients(&self) -> usize {
        self.responses.len()
    }

    pub fn n_scales(&self) -> usize {
        self.responses.first().map_or(0, Vec::len)
    }
}

pub fn convolve(img: &GrayImage, bank: &LogGaborBank) -> Result<FilterResponse> {
    let spectrum = bank.spectrum(img)?;
    let responses = (0..bank.n_orients)
        .into_par_iter()
        .map(|o| bank.convolve_orientation(&spectrum, o))
        .collect();
    Ok(FilterResponse { responses })
}

/// Amplitude and phase of every scale for a single orientation.
#[derive(Debug, Clone)]
pub struct OrientationChannel {
    pub amplitude: Vec<Array2<f64>>,
    pub phase: Vec<Array2<f64>>,
}

impl OrientationChannel {
    pub fn from_responses(responses: &[Array2<Complex64>]) -> Self {
        let (amplitude, phase) = responses
            .iter()
            .map(|resp| (resp.mapv(|v| amplitude_of(v.re, v.im)), resp.mapv(|v| phase_of(v.re, v.im))))
            .unzip();
        Self { amplitude, phase }
    }

    /// Sum of amplitudes over scales.
    pub fn total_amplitude(&self) -> Array2<f64> {
        let mut total = self.amplitude[0].clone();
        for a in &self.amplitude[1..] {
            total += a;
        }
        total
    }

    pub fn n_scales(&self) -> usize {
        self.amplitude.len()
    }
}

pub fn amplitude_of(re: f64, im: f64) -> f64 {
    re.hypot(im)
}

/// Two-argument arctangent in `(-pi, pi]`; zero when both parts vanish.
pub fn phase_of(re: f64, im: f64) -> f64 {
    if re == 0.0 && im == 0.0 {
        0.0
    } else {
        im.atan2(re)
    }
}

/// Per-orientation amplitude/phase channels, indexed `[o]`.
#[derive(Debug, Clone)]
pub struct AmplitudePhaseStack {
    pub channels: Vec<OrientationChannel>,
}

impl AmplitudePhaseStack {
    pub fn n_orients(&self) -> usize {
        self.channels.len()
    }

    pub fn n_scales(&self) -> usize {
        self.channels.first().map_or(0, OrientationChannel::n_scales)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].amplitude[0].dim()
    }
}

pub fn amplitude_phase(resp: &FilterResponse) -> AmplitudePhaseStack {
    AmplitudePhaseStack {
        channels: resp
            .responses
            .iter()
            .map(|per_scale| OrientationChannel::from_responses(per_scale))
            .collect(),
    }
}

/// `A_o`: amplitude summed over scales, one layer per orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationAmplitude {
    pub layers: Vec<Array2<f64>>,
}

impl OrientationAmplitude {
    pub fn n_orients(&self) -> usize {
        self.layers.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.layers[0].dim()
    }

    /// Sums adjacent layer pairs `(0,1), (2,3), ...`, halving the orientation count.
    pub fn pool_pairs(&self) -> OrientationAmplitude {
        OrientationAmplitude {
            layers: self
                .layers
                .chunks(2)
                .map(|pair| pair.iter().fold(Array2::zeros(pair[0].dim()), |acc, l| acc + l))
                .collect(),
        }
    }
}

pub fn accumulate_orientation(stack: &AmplitudePhaseStack) -> OrientationAmplitude {
    OrientationAmplitude {
        layers: stack.channels.iter().map(OrientationChannel::total_amplitude).collect(),
    }
}

/// Per-pixel argmax over the odd-numbered (1, 3, ...) and even-numbered (2, 4, ...)
/// orientation layers. Values are 1-based positions within each half, in `1..=o_max/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMapPair {
    pub odd: Array2<u8>,
    pub even: Array2<u8>,
    pub o_half: u8,
}

impl IndexMapPair {
    pub fn dims(&self) -> (usize, usize) {
        self.odd.dim()
    }
}

/// Which half of the orientation layers a map is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapParity {
    /// Layers 1, 3, 5, ... (0-based 0, 2, 4, ...).
    Odd,
    /// Layers 2, 4, 6, ... (0-based 1, 3, 5, ...).
    Even,
}

impl MapParity {
    pub fn other(self) -> Self {
        match self {
            MapParity::Odd => MapParity::Even,
            MapParity::Even => MapParity::Odd,
        }
    }
}

impl IndexMapPair {
    pub fn map(&self, parity: MapParity) -> &Array2<u8> {
        match parity {
            MapParity::Odd => &self.odd,
            MapParity::Even => &self.even,
        }
    }
}

/// Argmax over the layers of one parity; ties go to the lowest layer.
fn parity_argmax(ao: &OrientationAmplitude, parity: MapParity) -> Array2<u8> {
    let offset = match parity {
        MapParity::Odd => 0,
        MapParity::Even => 1,
    };
    let members: Vec<&Array2<f64>> = ao.layers.iter().skip(offset).step_by(2).collect();
    Array2::from_shape_fn(ao.dims(), |rc| {
        let mut best = 0usize;
        let mut best_val = members[0][rc];
        for (k, layer) in members.iter().enumerate().skip(1) {
            if layer[rc] > best_val {
                best_val = layer[rc];
                best = k;
            }
        }
        (best + 1) as u8
    })
}

pub fn index_maps(ao: &OrientationAmplitude) -> Result<IndexMapPair> {
    let n = ao.n_orients();
    if n < 2 || n % 2 != 0 || n / 2 > u8::MAX as usize {
        return Err(Error::InvalidParameter(format!(
            "index maps need an even orientation count, got {n}"
        )));
    }
    let (odd, even) = rayon::join(
        || parity_argmax(ao, MapParity::Odd),
        || parity_argmax(ao, MapParity::Even),
    );
    Ok(IndexMapPair {
        odd,
        even,
        o_half: (n / 2) as u8,
    })
}

/// 8-bit rendering of an index map: index `k` becomes `round(255 k / o_max)`.
pub fn index_map_gray(map: &Array2<u8>, o_max: usize) -> GrayImage {
    let (rows, cols) = map.dim();
    GrayImage::from_fn(rows, cols, |r, c| {
        (255.0 * map[[r, c]] as f64 / o_max as f64).round() / 255.0
    })
}
