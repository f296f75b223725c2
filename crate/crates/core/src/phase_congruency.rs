//! Per-orientation phase congruency and the moment maps built from it.

use ndarray::{Array2, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;

use crate::log_gabor::{orientation_angle, AmplitudePhaseStack, OrientationChannel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcParams {
    /// Noise threshold is `mean + noise_k * stddev` of the estimated noise energy.
    pub noise_k: f64,
    /// Stabilizer added to amplitude sums.
    pub epsilon: f64,
    /// Frequency-spread value at which the weighting sigmoid crosses 0.5.
    pub spread_cutoff: f64,
    /// Sharpness of the weighting sigmoid.
    pub spread_gain: f64,
    /// Wavelength ratio between filter scales, used by the noise model.
    pub scale_step: f64,
}

impl Default for PcParams {
    fn default() -> Self {
        Self {
            noise_k: 2.0,
            epsilon: 1e-4,
            spread_cutoff: 0.5,
            spread_gain: 10.0,
            scale_step: 2.1,
        }
    }
}

fn median(values: &Array2<f64>) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().collect();
    if v.is_empty() {
        return 0.0;
    }
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if v.len() % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::MIN, f64::max);
        0.5 * (lower + upper)
    }
}

/// Noise threshold from a Rayleigh model of the finest-scale amplitude.
///
/// The median finest-scale amplitude gives the Rayleigh parameter; the noise
/// response summed over scales is assumed to fall off geometrically with the
/// scale step.
pub fn estimate_noise_threshold(channel: &OrientationChannel, k: f64, scale_step: f64) -> f64 {
    noise_threshold_from_finest(&channel.amplitude[0], channel.n_scales(), k, scale_step)
}

/// [`estimate_noise_threshold`] given the finest-scale amplitude directly.
pub fn noise_threshold_from_finest(finest: &Array2<f64>, n_scales: usize, k: f64, scale_step: f64) -> f64 {
    let rayleigh = median(finest) / 4f64.ln().sqrt();
    let n = n_scales as i32;
    let ratio = 1.0 / scale_step;
    let total = rayleigh * (1.0 - ratio.powi(n)) / (1.0 - ratio);
    let mean = total * (std::f64::consts::PI / 2.0).sqrt();
    let sigma = total * ((4.0 - std::f64::consts::PI) / 2.0).sqrt();
    (mean + k * sigma).max(0.0)
}

/// Sigmoid weight on the spread of filter responses across scales.
pub fn spread_weight(sum_amp: f64, max_amp: f64, n_scales: usize, params: &PcParams) -> f64 {
    let spread = sum_amp / (max_amp + params.epsilon) / n_scales as f64;
    1.0 / (1.0 + (params.spread_gain * (params.spread_cutoff - spread)).exp())
}

/// Phase congruency of one orientation channel and its spread weighting.
pub fn channel_phase_congruency(
    channel: &OrientationChannel,
    noise_threshold: f64,
    params: &PcParams,
) -> (Array2<f64>, Array2<f64>) {
    let dims = channel.amplitude[0].dim();
    let n_scales = channel.n_scales();
    let mut pc = Array2::zeros(dims);
    let mut weight = Array2::zeros(dims);
    let amps: Vec<&[f64]> = channel.amplitude.iter().map(|a| a.as_slice().unwrap()).collect();
    let phases: Vec<&[f64]> = channel.phase.iter().map(|a| a.as_slice().unwrap()).collect();
    let pc_slice = pc.as_slice_mut().unwrap();
    let w_slice = weight.as_slice_mut().unwrap();
    for i in 0..pc_slice.len() {
        let mut sum_even = 0.0;
        let mut sum_odd = 0.0;
        let mut sum_amp = 0.0;
        let mut max_amp = 0.0f64;
        for s in 0..n_scales {
            let a = amps[s][i];
            let (sin, cos) = phases[s][i].sin_cos();
            sum_even += a * cos;
            sum_odd += a * sin;
            sum_amp += a;
            max_amp = max_amp.max(a);
        }
        // Mean phase direction is the amplitude-weighted phasor sum; with no
        // response at all it stays at zero.
        let mean_phase = if sum_even == 0.0 && sum_odd == 0.0 {
            0.0
        } else {
            sum_odd.atan2(sum_even)
        };
        let mut energy = 0.0;
        for s in 0..n_scales {
            let d = phases[s][i] - mean_phase;
            energy += amps[s][i] * (d.cos() - d.sin().abs());
        }
        let w = spread_weight(sum_amp, max_amp, n_scales, params);
        w_slice[i] = w;
        pc_slice[i] = (w * (energy - noise_threshold).max(0.0) / (sum_amp + params.epsilon)).clamp(0.0, 1.0);
    }
    (pc, weight)
}

/// Phase congruency of one orientation straight from complex responses (one per scale).
///
/// Same quantity as [`channel_phase_congruency`], computed without angles:
/// against the unit mean-phase vector `(e, o)`, a response `(re, im)` has
/// `A cos(d) = re e + im o` and `A sin(d) = im e - re o`.
pub fn pc_from_responses(responses: &[Array2<Complex64>], noise_threshold: f64, params: &PcParams) -> Array2<f64> {
    let dims = responses[0].dim();
    let n_scales = responses.len();
    let slices: Vec<&[Complex64]> = responses.iter().map(|r| r.as_slice().expect("standard layout")).collect();
    let mut pc = Array2::zeros(dims);
    for (i, out) in pc.as_slice_mut().expect("standard layout").iter_mut().enumerate() {
        let (mut sum_even, mut sum_odd, mut sum_amp, mut max_amp) = (0.0, 0.0, 0.0, 0.0f64);
        for s in &slices {
            let v = s[i];
            let a = v.re.hypot(v.im);
            sum_even += v.re;
            sum_odd += v.im;
            sum_amp += a;
            max_amp = max_amp.max(a);
        }
        let norm = sum_even.hypot(sum_odd);
        let (e, o) = if norm > 0.0 { (sum_even / norm, sum_odd / norm) } else { (1.0, 0.0) };
        let mut energy = 0.0;
        for s in &slices {
            let v = s[i];
            energy += (v.re * e + v.im * o) - (v.im * e - v.re * o).abs();
        }
        let w = spread_weight(sum_amp, max_amp, n_scales, params);
        *out = (w * (energy - noise_threshold).max(0.0) / (sum_amp + params.epsilon)).clamp(0.0, 1.0);
    }
    pc
}

#[derive(Debug, Clone)]
pub struct PcMaps {
    /// Phase congruency per orientation, in `[0, 1]`.
    pub pc: Vec<Array2<f64>>,
    /// Frequency-spread weighting per orientation.
    pub weighting: Vec<Array2<f64>>,
    pub noise_threshold: Vec<f64>,
    pub epsilon: f64,
}

/// Phase congruency of orientation `o` of a stack, with its own noise threshold.
pub fn phase_congruency(stack: &AmplitudePhaseStack, o: usize, params: &PcParams) -> Array2<f64> {
    let channel = &stack.channels[o];
    let t = estimate_noise_threshold(channel, params.noise_k, params.scale_step);
    channel_phase_congruency(channel, t, params).0
}

pub fn compute_pc_maps(stack: &AmplitudePhaseStack, params: &PcParams) -> PcMaps {
    let results: Vec<(Array2<f64>, Array2<f64>, f64)> = stack
        .channels
        .par_iter()
        .map(|channel| {
            let t = estimate_noise_threshold(channel, params.noise_k, params.scale_step);
            let (pc, w) = channel_phase_congruency(channel, t, params);
            (pc, w, t)
        })
        .collect();
    let mut maps = PcMaps {
        pc: Vec::with_capacity(results.len()),
        weighting: Vec::with_capacity(results.len()),
        noise_threshold: Vec::with_capacity(results.len()),
        epsilon: params.epsilon,
    };
    for (pc, w, t) in results {
        maps.pc.push(pc);
        maps.weighting.push(w);
        maps.noise_threshold.push(t);
    }
    maps
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMaps {
    pub m_max: Array2<f64>,
    pub m_min: Array2<f64>,
}

/// Moment sums `(A, B, C)` of the orientation-wise phase congruency at one pixel.
pub fn moment_sums(pc: &[f64]) -> (f64, f64, f64) {
    let n = pc.len();
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for (o, &v) in pc.iter().enumerate() {
        let (sin, cos) = orientation_angle(o, n).sin_cos();
        let x = v * cos;
        let y = v * sin;
        a += x * x;
        b += 2.0 * x * y;
        c += y * y;
    }
    (a, b, c)
}

/// Closed-form principal moments `(max, min)` from the sums.
pub fn principal_moments(a: f64, b: f64, c: f64) -> (f64, f64) {
    let root = ((a - c) * (a - c) + b * b).sqrt();
    let hi = 0.5 * (a + c + root);
    // The accumulation is positive semidefinite; clip rounding noise below zero.
    let lo = (0.5 * (a + c - root)).max(0.0);
    (hi, lo.min(hi))
}

pub fn moment_maps(pc: &[Array2<f64>]) -> Result<MomentMaps> {
    let first = pc.first().ok_or(Error::EmptyInput("phase congruency maps"))?;
    let dims = first.dim();
    if let Some(bad) = pc.iter().find(|m| m.dim() != dims) {
        return Err(Error::DimensionMismatch {
            expected: dims,
            actual: bad.dim(),
        });
    }
    let mut m_max = Array2::zeros(dims);
    let mut m_min = Array2::zeros(dims);
    let mut column = vec![0.0; pc.len()];
    for ((r, c), hi) in m_max.indexed_iter_mut() {
        for (o, map) in pc.iter().enumerate() {
            column[o] = map[[r, c]];
        }
        let (a, b, cc) = moment_sums(&column);
        let (max, min) = principal_moments(a, b, cc);
        *hi = max;
        m_min[[r, c]] = min;
    }
    Ok(MomentMaps { m_max, m_min })
}

/// Sign of the minimum-moment term in the weighted moment map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentWeightSign {
    /// `tau * M_max + (tau - 1) * M_min`.
    #[default]
    AsPrinted,
    /// `tau * M_max + (1 - tau) * M_min`.
    Complement,
}

impl std::str::FromStr for MomentWeightSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-printed" | "printed" | "minus" => Ok(Self::AsPrinted),
            "complement" | "plus" => Ok(Self::Complement),
            other => Err(Error::InvalidParameter(format!("unknown moment weight sign {other:?}"))),
        }
    }
}

impl std::fmt::Display for MomentWeightSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AsPrinted => "as-printed",
            Self::Complement => "complement",
        })
    }
}

impl serde::Serialize for MomentWeightSign {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Weighted moment map, clamped below at zero.
pub fn weighted_moment(m: &MomentMaps, tau: f64, sign: MomentWeightSign) -> Result<Array2<f64>> {
    if !(0.5..=1.0).contains(&tau) {
        return Err(Error::InvalidParameter(format!("tau must lie in [0.5, 1], got {tau}")));
    }
    let min_coeff = match sign {
        MomentWeightSign::AsPrinted => tau - 1.0,
        MomentWeightSign::Complement => 1.0 - tau,
    };
    let mut w = Array2::zeros(m.m_max.dim());
    Zip::from(&mut w)
        .and(&m.m_max)
        .and(&m.m_min)
        .for_each(|out, &hi, &lo| *out = (tau * hi + min_coeff * lo).max(0.0));
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::GrayImage;
    use crate::log_gabor::{amplitude_phase, build_bank, convolve, LogGaborParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn response_path_matches_channel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let img = GrayImage::from_fn(48, 40, |_, _| rng.gen_range(0.0..1.0));
        let bank = build_bank(48, 40, &LogGaborParams::default()).unwrap();
        let resp = convolve(&img, &bank).unwrap();
        let params = PcParams::default();
        for o in [0, 5, 11] {
            let channel = OrientationChannel::from_responses(&resp.responses[o]);
            let t = estimate_noise_threshold(&channel, params.noise_k, params.scale_step);
            let (slow, _) = channel_phase_congruency(&channel, t, &params);
            let fast = pc_from_responses(&resp.responses[o], t, &params);
            for (a, b) in slow.iter().zip(fast.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    fn stack_of(img: &GrayImage) -> AmplitudePhaseStack {
        let bank = build_bank(img.rows(), img.cols(), &LogGaborParams::default()).unwrap();
        amplitude_phase(&convolve(img, &bank).unwrap())
    }

    #[test]
    fn constant_image_has_zero_pc() {
        let stack = stack_of(&GrayImage::constant(32, 32, 0.4));
        let maps = compute_pc_maps(&stack, &PcParams::default());
        for pc in &maps.pc {
            assert!(pc.iter().all(|&v| v <= 1e-6));
        }
    }

    #[test]
    fn single_scale_reduces_to_truncated_ratio() {
        let params = PcParams::default();
        let amp = Array2::from_shape_vec((1, 3), vec![0.5, 2.0, 0.05]).unwrap();
        let phase = Array2::from_shape_vec((1, 3), vec![0.3, -2.0, 3.0]).unwrap();
        let channel = OrientationChannel {
            amplitude: vec![amp.clone()],
            phase: vec![phase],
        };
        let t = 0.1;
        let (pc, w) = channel_phase_congruency(&channel, t, &params);
        for i in 0..3 {
            let a = amp[[0, i]];
            let expect_w = 1.0 / (1.0 + (params.spread_gain * (params.spread_cutoff - a / (a + params.epsilon))).exp());
            let expect = expect_w * (a - t).max(0.0) / (a + params.epsilon);
            assert!((w[[0, i]] - expect_w).abs() < 1e-12);
            assert!((pc[[0, i]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn step_edge_peaks_on_edge_column() {
        let img = GrayImage::from_fn(64, 64, |_, c| if c < 32 { 0.2 } else { 0.8 });
        let stack = stack_of(&img);
        // A vertical edge has a horizontal wave vector: orientation 0.
        let pc = phase_congruency(&stack, 0, &PcParams::default());
        for r in 0..64 {
            let (best, _) = (8..56)
                .map(|c| (c, pc[[r, c]]))
                .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert!((best as i64 - 32).abs() <= 1 || (best as i64 - 31).abs() <= 1, "row {r}: {best}");
        }
    }

    #[test]
    fn zero_amplitudes_give_zero_threshold() {
        let channel = OrientationChannel {
            amplitude: vec![Array2::zeros((4, 4)); 3],
            phase: vec![Array2::zeros((4, 4)); 3],
        };
        assert_eq!(estimate_noise_threshold(&channel, 2.0, 2.1), 0.0);
    }

    #[test]
    fn threshold_is_homogeneous() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let amps: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_simple_fn((9, 9), || rng.gen_range(0.0..1.0)))
            .collect();
        let channel = OrientationChannel {
            amplitude: amps.clone(),
            phase: vec![Array2::zeros((9, 9)); 4],
        };
        let scaled = OrientationChannel {
            amplitude: amps.iter().map(|a| a * 3.5).collect(),
            phase: vec![Array2::zeros((9, 9)); 4],
        };
        let t1 = estimate_noise_threshold(&channel, 2.0, 2.1);
        let t2 = estimate_noise_threshold(&scaled, 2.0, 2.1);
        assert!((t2 - 3.5 * t1).abs() < 1e-12 * t2.max(1.0));
    }

    #[test]
    fn white_noise_is_suppressed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = GrayImage::from_fn(96, 96, |_, _| rng.gen_range(0.0..1.0));
        let maps = compute_pc_maps(&stack_of(&img), &PcParams::default());
        let total: f64 = maps.pc.iter().map(|m| m.mean().unwrap()).sum::<f64>() / maps.pc.len() as f64;
        assert!(total < 0.1, "mean pc {total}");
    }

    #[test]
    fn isotropic_pc_gives_equal_moments() {
        let c = 0.6;
        let pc: Vec<Array2<f64>> = (0..12).map(|_| Array2::from_elem((2, 2), c)).collect();
        let m = moment_maps(&pc).unwrap();
        let expect = c * c * 12.0 / 2.0;
        for (hi, lo) in m.m_max.iter().zip(m.m_min.iter()) {
            assert!((hi - expect).abs() < 1e-9);
            assert!((lo - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn single_orientation_at_zero() {
        let c = 0.7;
        let mut pc: Vec<Array2<f64>> = (0..12).map(|_| Array2::zeros((1, 1))).collect();
        pc[0][[0, 0]] = c;
        let m = moment_maps(&pc).unwrap();
        assert!((m.m_max[[0, 0]] - c * c).abs() < 1e-12);
        assert!(m.m_min[[0, 0]].abs() < 1e-12);
    }

    #[test]
    fn moments_match_eigen_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pc: Vec<Array2<f64>> = (0..12)
            .map(|_| Array2::from_shape_simple_fn((8, 8), || rng.gen_range(0.0..1.0)))
            .collect();
        let m = moment_maps(&pc).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let column: Vec<f64> = pc.iter().map(|p| p[[r, c]]).collect();
                let (a, b, cc) = moment_sums(&column);
                let mat = nalgebra::Matrix2::new(a, b / 2.0, b / 2.0, cc);
                let eig = mat.symmetric_eigenvalues();
                let (hi, lo) = (eig.max(), eig.min());
                assert!((m.m_max[[r, c]] - hi).abs() < 1e-6);
                assert!((m.m_min[[r, c]] - lo).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn weighted_moment_examples() {
        let one = |v: f64| Array2::from_elem((1, 1), v);
        let m = MomentMaps { m_max: one(1.0), m_min: one(0.0) };
        assert_eq!(weighted_moment(&m, 0.75, MomentWeightSign::AsPrinted).unwrap()[[0, 0]], 0.75);
        let m = MomentMaps { m_max: one(0.4), m_min: one(0.4) };
        assert!(weighted_moment(&m, 0.5, MomentWeightSign::AsPrinted).unwrap()[[0, 0]].abs() < 1e-15);
        let m = MomentMaps { m_max: one(0.9), m_min: one(0.3) };
        assert_eq!(weighted_moment(&m, 1.0, MomentWeightSign::AsPrinted).unwrap()[[0, 0]], 0.9);
        let comp = weighted_moment(&m, 0.75, MomentWeightSign::Complement).unwrap()[[0, 0]];
        assert!((comp - (0.75 * 0.9 + 0.25 * 0.3)).abs() < 1e-12);
    }

    #[test]
    fn tau_out_of_range_rejected() {
        let m = MomentMaps { m_max: Array2::zeros((1, 1)), m_min: Array2::zeros((1, 1)) };
        assert!(weighted_moment(&m, 0.4, MomentWeightSign::AsPrinted).is_err());
        assert!(weighted_moment(&m, 1.1, MomentWeightSign::AsPrinted).is_err());
    }

    fn textured(rows: usize, cols: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..40)
            .map(|_| {
                (
                    rng.gen_range(0.0..cols as f64),
                    rng.gen_range(0.0..rows as f64),
                    rng.gen_range(2.0..8.0),
                    rng.gen_range(-0.3..0.3),
                )
            })
            .collect();
        GrayImage::from_fn(rows, cols, |r, c| {
            let mut v = 0.5;
            for &(x, y, rad, amp) in &blobs {
                let d = ((c as f64 - x).powi(2) + (r as f64 - y).powi(2)).sqrt();
                if d < rad {
                    v += amp;
                }
            }
            0.3 + 0.3 * v.clamp(0.0, 1.0)
        })
    }

    fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let ma = a.mean().unwrap();
        let mb = b.mean().unwrap();
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for (x, y) in a.iter().zip(b.iter()) {
            num += (x - ma) * (y - mb);
            da += (x - ma).powi(2);
            db += (y - mb).powi(2);
        }
        num / (da * db).sqrt()
    }

    #[test]
    fn affine_intensity_change_preserves_pc() {
        let img = textured(64, 64, 8);
        let base = compute_pc_maps(&stack_of(&img), &PcParams::default());
        for (a, b) in [(0.5, 0.1), (2.0, -0.5)] {
            let lo = img.data().iter().cloned().fold(f64::MAX, f64::min);
            let hi = img.data().iter().cloned().fold(f64::MIN, f64::max);
            assert!(a * lo + b >= 0.0 && a * hi + b <= 1.0);
            let other = compute_pc_maps(&stack_of(&img.map(|v| a * v + b)), &PcParams::default());
            for (p, q) in base.pc.iter().zip(&other.pc) {
                assert!(pearson(p, q) >= 0.99);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn moments_ordered_and_nonnegative(values in proptest::collection::vec(0.0f64..1.0, 12)) {
            let (a, b, c) = moment_sums(&values);
            let (hi, lo) = principal_moments(a, b, c);
            prop_assert!(hi + 1e-9 >= lo);
            prop_assert!(lo >= 0.0);
        }

        #[test]
        fn weighted_moment_monotone_in_max(lo in 0.0f64..1.0, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, tau in 0.5f64..1.0) {
            let one = |v: f64| Array2::from_elem((1, 1), v);
            let small = MomentMaps { m_max: one(lo + d1.min(d2)), m_min: one(lo) };
            let large = MomentMaps { m_max: one(lo + d1.max(d2)), m_min: one(lo) };
            let ws = weighted_moment(&small, tau, MomentWeightSign::AsPrinted).unwrap()[[0, 0]];
            let wl = weighted_moment(&large, tau, MomentWeightSign::AsPrinted).unwrap()[[0, 0]];
            prop_assert!(wl >= ws);
        }
    }

    #[test]
    fn angles_cover_half_turn() {
        assert!((orientation_angle(6, 12) - PI / 2.0).abs() < 1e-15);
    }
}
