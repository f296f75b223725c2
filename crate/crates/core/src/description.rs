//! Rotation-normalized histogram descriptors on orientation index maps.
//!
//! A feature's reference angle points from the feature to the centroid of the
//! pixels (inside a disk) that carry the most frequent index value. The
//! descriptor samples an `l x l` window aligned with that angle, cyclically
//! remaps index values so the window's modal index becomes `o_half`, and
//! concatenates per-subregion index histograms.

use std::f64::consts::TAU;

use ndarray::Array2;
use rayon::prelude::*;

use crate::detection::FeaturePoint;
use crate::error::{Error, Result};
use crate::log_gabor::{IndexMapPair, MapParity};

/// Running centroid updated one point at a time.
///
/// After `n` points with centroid `g`, adding `b` gives `b + n/(n+1) * (g - b)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IncrementalCentroid {
    pub x: f64,
    pub y: f64,
    pub count: usize,
}

impl IncrementalCentroid {
    pub fn push(&mut self, bx: f64, by: f64) {
        if self.count == 0 {
            self.x = bx;
            self.y = by;
        } else {
            let w = self.count as f64 / (1.0 + self.count as f64);
            self.x = bx + w * (self.x - bx);
            self.y = by + w * (self.y - by);
        }
        self.count += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationEstimate {
    /// Angle in `[0, 2 pi)`, measured in image coordinates (`atan2(dy, dx)`).
    pub primary: f64,
    pub secondary: Option<f64>,
    pub mode_index: u8,
    pub mode_count: usize,
    pub second_index: u8,
    pub second_count: usize,
    /// Set when the modal centroid sits within half a pixel of the feature.
    pub low_confidence: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Angle toward a centroid, or `None` when it coincides with the feature.
fn direction_to(centroid: &IncrementalCentroid, x: f64, y: f64) -> Option<f64> {
    let dx = centroid.x - x;
    let dy = centroid.y - y;
    if centroid.count == 0 || dx.hypot(dy) < 0.5 {
        None
    } else {
        Some(wrap_angle(dy.atan2(dx)))
    }
}

fn disk_fits(map: &Array2<u8>, x: usize, y: usize, radius: usize) -> bool {
    let (rows, cols) = map.dim();
    x >= radius && y >= radius && x + radius < cols && y + radius < rows
}

pub fn primary_orientation(
    map: &Array2<u8>,
    x: usize,
    y: usize,
    radius: usize,
    o_half: u8,
    secondary_ratio: f64,
) -> Result<OrientationEstimate> {
    if !disk_fits(map, x, y, radius) {
        return Err(Error::OutOfBounds);
    }
    let r = radius as isize;
    let r2 = r * r;
    let in_disk = |dx: isize, dy: isize| dx * dx + dy * dy <= r2;

    let mut counts = vec![0usize; o_half as usize + 1];
    for dy in -r..=r {
        for dx in -r..=r {
            if in_disk(dx, dy) {
                let k = map[[(y as isize + dy) as usize, (x as isize + dx) as usize]];
                counts[k as usize] += 1;
            }
        }
    }
    // Lowest index wins ties.
    let mut order: Vec<usize> = (1..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mode = order[0];
    let second = order.get(1).copied().unwrap_or(mode);

    let mut mode_centroid = IncrementalCentroid::default();
    let mut second_centroid = IncrementalCentroid::default();
    for dy in -r..=r {
        for dx in -r..=r {
            if !in_disk(dx, dy) {
                continue;
            }
            let (px, py) = (x as isize + dx, y as isize + dy);
            let k = map[[py as usize, px as usize]] as usize;
            if k == mode {
                mode_centroid.push(px as f64, py as f64);
            } else if k == second {
                second_centroid.push(px as f64, py as f64);
            }
        }
    }

    let (fx, fy) = (x as f64, y as f64);
    let primary = direction_to(&mode_centroid, fx, fy);
    let second_count = if second == mode { 0 } else { counts[second] };
    let secondary = if second_count > 0 && second_count as f64 > secondary_ratio * counts[mode] as f64 {
        Some(direction_to(&second_centroid, fx, fy).unwrap_or(0.0))
    } else {
        None
    };
    Ok(OrientationEstimate {
        primary: primary.unwrap_or(0.0),
        secondary,
        mode_index: mode as u8,
        mode_count: counts[mode],
        second_index: second as u8,
        second_count,
        low_confidence: primary.is_none(),
    })
}

/// Cyclic shift of one index value so that `k_mode` lands on `o_half`.
pub fn remap_index(k: u8, k_mode: u8, o_half: u8) -> u8 {
    if k <= k_mode {
        k + (o_half - k_mode)
    } else {
        k - k_mode
    }
}

pub fn remap_indices(patch: &[u8], k_mode: u8, o_half: u8) -> Vec<u8> {
    patch.iter().map(|&k| remap_index(k, k_mode, o_half)).collect()
}

/// Most frequent value in `1..=o_half`; the lowest value wins ties.
pub fn mode_of(values: &[u8], o_half: u8) -> u8 {
    let mut counts = vec![0usize; o_half as usize + 1];
    for &v in values {
        counts[v as usize] += 1;
    }
    (1..=o_half as usize)
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .unwrap_or(1) as u8
}

/// Half extent of a window of side `l` rotated by `angle`, along x and y.
fn rotated_extent(l: usize, angle: f64) -> f64 {
    let h = (l as f64 - 1.0) / 2.0;
    h * (angle.cos().abs() + angle.sin().abs())
}

/// Whether the rotated window stays inside a layer of the given dims.
pub fn window_fits(dims: (usize, usize), x: usize, y: usize, angle: f64, l: usize) -> bool {
    let (rows, cols) = dims;
    let e = rotated_extent(l, angle) + 0.5;
    let (fx, fy) = (x as f64, y as f64);
    fx - e >= 0.0 && fy - e >= 0.0 && fx + e <= (cols - 1) as f64 && fy + e <= (rows - 1) as f64
}

/// Flat row-major indices of the nearest-neighbour samples of an `l x l`
/// window whose x axis points along `angle`, in window order.
pub fn window_offsets(dims: (usize, usize), x: usize, y: usize, angle: f64, l: usize) -> Option<Vec<usize>> {
    if !window_fits(dims, x, y, angle, l) {
        return None;
    }
    let cols = dims.1;
    let (sin, cos) = angle.sin_cos();
    let h = (l as f64 - 1.0) / 2.0;
    let (fx, fy) = (x as f64, y as f64);
    let mut out = Vec::with_capacity(l * l);
    for i in 0..l {
        let v = i as f64 - h;
        for j in 0..l {
            let u = j as f64 - h;
            let px = (fx + cos * u - sin * v).round() as usize;
            let py = (fy + sin * u + cos * v).round() as usize;
            out.push(py * cols + px);
        }
    }
    Some(out)
}

fn gather(map: &Array2<u8>, offsets: &[usize]) -> Vec<u8> {
    let flat = map.as_slice().expect("standard layout");
    offsets.iter().map(|&i| flat[i]).collect()
}

/// Nearest-neighbour samples of an `l x l` window whose x axis points along
/// `angle`, in row-major window order.
pub fn sample_window(map: &Array2<u8>, x: usize, y: usize, angle: f64, l: usize) -> Option<Vec<u8>> {
    window_offsets(map.dim(), x, y, angle, l).map(|offsets| gather(map, &offsets))
}

/// Per-subregion histograms of an `l x l` window of values in `1..=o_half`.
pub fn subregion_histograms(window: &[u8], l: usize, n_sub: usize, o_half: u8) -> Vec<f64> {
    let bins = o_half as usize;
    let mut hist = vec![0.0; n_sub * n_sub * bins];
    for i in 0..l {
        let si = i * n_sub / l;
        for j in 0..l {
            let sj = j * n_sub / l;
            let k = window[i * l + j] as usize;
            hist[(si * n_sub + sj) * bins + k - 1] += 1.0;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorParams {
    /// Window side `l` in layer pixels.
    pub window: usize,
    /// Subregions per side `n`.
    pub n_sub: usize,
    /// Disk radius for orientation; `None` means `window / 2`.
    pub orientation_radius: Option<usize>,
    pub secondary_ratio: f64,
    /// Emit a descriptor for a qualifying second orientation.
    pub use_secondary: bool,
    /// Use both the odd and even index maps.
    pub double_map: bool,
    /// With both maps, also emit the variant whose orientation and leading half
    /// come from the even map.
    pub cross_anchor: bool,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            window: 72,
            n_sub: 6,
            orientation_radius: None,
            secondary_ratio: 0.8,
            use_secondary: true,
            double_map: true,
            cross_anchor: true,
        }
    }
}

impl DescriptorParams {
    pub fn radius(&self) -> usize {
        self.orientation_radius.unwrap_or(self.window / 2)
    }

    pub fn length(&self, o_half: u8) -> usize {
        let maps = if self.double_map { 2 } else { 1 };
        maps * o_half as usize * self.n_sub * self.n_sub
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.n_sub == 0 || self.window % self.n_sub != 0 {
            return Err(Error::InvalidParameter(format!(
                "window {} must be a positive multiple of subregions {}",
                self.window, self.n_sub
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    /// Unit-length histogram vector.
    pub values: Vec<f32>,
    pub feature: FeaturePoint,
    /// Index of the feature in the list passed to [`describe_features`].
    pub feature_index: usize,
    /// Position in original-image pixels.
    pub x: f64,
    pub y: f64,
    pub orientation: f64,
    /// Map providing the orientation and the leading half of `values`.
    pub anchor: MapParity,
    pub is_secondary: bool,
}

fn normalize(hist: Vec<f64>) -> Option<Vec<f32>> {
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return None;
    }
    Some(hist.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Raw (unnormalized) histogram block for one map: sample, remap by the window mode, bin.
pub fn map_histogram(map: &Array2<u8>, x: usize, y: usize, angle: f64, params: &DescriptorParams, o_half: u8) -> Option<Vec<f64>> {
    let offsets = window_offsets(map.dim(), x, y, angle, params.window)?;
    Some(histogram_at(map, &offsets, params, o_half))
}

fn histogram_at(map: &Array2<u8>, offsets: &[usize], params: &DescriptorParams, o_half: u8) -> Vec<f64> {
    let window = gather(map, offsets);
    let k_mode = mode_of(&window, o_half);
    let remapped = remap_indices(&window, k_mode, o_half);
    subregion_histograms(&remapped, params.window, params.n_sub, o_half)
}

/// Descriptor of one feature at a given angle, led by the `anchor` map.
pub fn build_descriptor(
    maps: &IndexMapPair,
    feature: &FeaturePoint,
    angle: f64,
    anchor: MapParity,
    params: &DescriptorParams,
) -> Option<Vec<f32>> {
    let offsets = window_offsets(maps.dims(), feature.x, feature.y, angle, params.window)?;
    let mut hist = histogram_at(maps.map(anchor), &offsets, params, maps.o_half);
    if params.double_map {
        hist.extend(histogram_at(maps.map(anchor.other()), &offsets, params, maps.o_half));
    }
    normalize(hist)
}

fn describe_one(maps: &IndexMapPair, feature: &FeaturePoint, feature_index: usize, params: &DescriptorParams) -> Vec<Descriptor> {
    let anchors: &[MapParity] = if params.double_map && params.cross_anchor {
        &[MapParity::Odd, MapParity::Even]
    } else {
        &[MapParity::Odd]
    };
    let (ox, oy) = feature.original();
    let mut out = Vec::new();
    for &anchor in anchors {
        let Ok(est) = primary_orientation(
            maps.map(anchor),
            feature.x,
            feature.y,
            params.radius(),
            maps.o_half,
            params.secondary_ratio,
        ) else {
            continue;
        };
        let mut angles = vec![(est.primary, false)];
        if params.use_secondary {
            if let Some(a) = est.secondary {
                angles.push((a, true));
            }
        }
        for (angle, is_secondary) in angles {
            if let Some(values) = build_descriptor(maps, feature, angle, anchor, params) {
                out.push(Descriptor {
                    values,
                    feature: *feature,
                    feature_index,
                    x: ox,
                    y: oy,
                    orientation: angle,
                    anchor,
                    is_secondary,
                });
            }
        }
    }
    out
}

/// Describes every feature against the index maps of its layer
/// (`layer_maps[feature.layer_id]`). Features whose disk or window leaves the
/// layer are dropped. Output is ordered by `(layer_id, y, x)`.
pub fn describe_features(layer_maps: &[IndexMapPair], features: &[FeaturePoint], params: &DescriptorParams) -> Vec<Descriptor> {
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by_key(|&i| (features[i].layer_id, features[i].y, features[i].x, i));
    order
        .par_iter()
        .map(|&i| describe_one(&layer_maps[features[i].layer_id], &features[i], i, params))
        .flatten_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_modal_point_gives_exact_angle() {
        // Radius-1 disk: centre and four neighbours, all distinct values, so the
        // lowest value (placed below the centre) is modal by tie-break.
        let mut map = Array2::from_elem((9, 9), 9u8);
        map[[4, 4]] = 5;
        map[[5, 4]] = 1;
        map[[3, 4]] = 2;
        map[[4, 3]] = 3;
        map[[4, 5]] = 4;
        let est = primary_orientation(&map, 4, 4, 1, 9, 0.8).unwrap();
        assert_eq!(est.mode_index, 1);
        assert_eq!(est.primary, std::f64::consts::FRAC_PI_2);
        assert!(!est.low_confidence);
    }

    #[test]
    fn modal_set_centroid_gives_angle() {
        let mut map = Array2::from_elem((9, 9), 3u8);
        // Seven of the 13 pixels in the radius-2 disk carry index 1.
        let pts = [(5, 4), (6, 4), (5, 5), (5, 3), (4, 6), (4, 5), (3, 5)];
        for &(x, y) in &pts {
            map[[y, x]] = 1;
        }
        let est = primary_orientation(&map, 4, 4, 2, 3, 0.8).unwrap();
        assert_eq!(est.mode_index, 1);
        let mean_x = pts.iter().map(|p| p.0 as f64).sum::<f64>() / 7.0;
        let mean_y = pts.iter().map(|p| p.1 as f64).sum::<f64>() / 7.0;
        let expect = wrap_angle((mean_y - 4.0).atan2(mean_x - 4.0));
        assert!((est.primary - expect).abs() < 1e-12);
    }

    #[test]
    fn incremental_centroid_is_arithmetic_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|_| (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
            .collect();
        let mut c = IncrementalCentroid::default();
        for &(x, y) in &pts {
            c.push(x, y);
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 200.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 200.0;
        assert!((c.x - mx).abs() < 1e-9 && (c.y - my).abs() < 1e-9);
    }

    #[test]
    fn uniform_disk_is_degenerate() {
        let map = Array2::from_elem((81, 81), 4u8);
        let est = primary_orientation(&map, 40, 40, 36, 6, 0.8).unwrap();
        assert!(est.low_confidence);
        assert_eq!(est.primary, 0.0);
        assert_eq!(est.secondary, None);
    }

    #[test]
    fn disk_out_of_bounds_errors() {
        let map = Array2::from_elem((50, 50), 1u8);
        assert!(primary_orientation(&map, 10, 25, 36, 6, 0.8).is_err());
    }

    #[test]
    fn remap_examples() {
        for k in 1..=6 {
            assert_eq!(remap_index(k, 6, 6), k);
        }
        assert_eq!(remap_index(4, 4, 6), 6);
        assert_eq!(remap_index(5, 4, 6), 1);
        assert_eq!(remap_index(2, 4, 6), 4);
    }

    #[test]
    fn remap_cancels_uniform_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let patch: Vec<u8> = (0..100).map(|_| rng.gen_range(1..=6)).collect();
        let shifted: Vec<u8> = patch.iter().map(|&k| (k + 2 - 1) % 6 + 1).collect();
        let a = remap_indices(&patch, mode_of(&patch, 6), 6);
        let b = remap_indices(&shifted, mode_of(&shifted, 6), 6);
        assert_eq!(a, b);
        assert!(a.iter().all(|&k| (1..=6).contains(&k)));
    }

    fn random_maps(dims: (usize, usize), seed: u64) -> IndexMapPair {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        IndexMapPair {
            odd: Array2::from_shape_simple_fn(dims, || rng.gen_range(1..=6)),
            even: Array2::from_shape_simple_fn(dims, || rng.gen_range(1..=6)),
            o_half: 6,
        }
    }

    fn feature_at(x: usize, y: usize) -> FeaturePoint {
        FeaturePoint {
            x,
            y,
            layer_id: 0,
            layer_scale: 1.0,
            response: 1.0,
        }
    }

    #[test]
    fn default_descriptor_is_432_unit() {
        let maps = random_maps((200, 200), 3);
        let params = DescriptorParams::default();
        let d = build_descriptor(&maps, &feature_at(100, 100), 0.7, MapParity::Odd, &params).unwrap();
        assert_eq!(d.len(), 432);
        assert_eq!(params.length(6), 432);
        let norm: f64 = d.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn single_map_halves_length() {
        let maps = random_maps((200, 200), 3);
        let params = DescriptorParams {
            double_map: false,
            ..Default::default()
        };
        let d = build_descriptor(&maps, &feature_at(100, 100), 0.0, MapParity::Odd, &params).unwrap();
        assert_eq!(d.len(), 216);
    }

    #[test]
    fn histogram_mass_is_window_area() {
        let maps = random_maps((200, 200), 4);
        let params = DescriptorParams::default();
        for parity in [MapParity::Odd, MapParity::Even] {
            let h = map_histogram(maps.map(parity), 100, 90, 1.3, &params, 6).unwrap();
            assert_eq!(h.iter().sum::<f64>(), (72 * 72) as f64);
        }
    }

    #[test]
    fn window_out_of_bounds_dropped() {
        let maps = random_maps((100, 100), 4);
        let params = DescriptorParams::default();
        assert!(build_descriptor(&maps, &feature_at(30, 50), 0.0, MapParity::Odd, &params).is_none());
        // 72 px window needs 36 px margin unrotated but ~50 px at 45 degrees.
        assert!(build_descriptor(&maps, &feature_at(50, 50), 0.0, MapParity::Odd, &params).is_some());
        assert!(build_descriptor(&maps, &feature_at(45, 50), std::f64::consts::FRAC_PI_4, MapParity::Odd, &params).is_none());
    }

    #[test]
    fn secondary_rule_is_monotone_in_ratio() {
        let maps = random_maps((120, 120), 8);
        let feats: Vec<FeaturePoint> = (0..30).map(|i| feature_at(50 + i % 20, 50 + i / 3)).collect();
        let mut last = usize::MAX;
        for ratio in [0.5, 0.8, 0.9, 0.95, 0.99] {
            let params = DescriptorParams {
                secondary_ratio: ratio,
                window: 36,
                ..Default::default()
            };
            let n = describe_features(std::slice::from_ref(&maps), &feats, &params).len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn output_is_canonically_ordered() {
        let maps = random_maps((150, 150), 9);
        let feats = vec![feature_at(80, 90), feature_at(70, 60), feature_at(75, 60)];
        let out = describe_features(std::slice::from_ref(&maps), &feats, &DescriptorParams::default());
        let keys: Vec<(usize, usize)> = out.iter().map(|d| (d.feature.y, d.feature.x)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn rotating_the_map_by_quarter_turns_preserves_descriptor() {
        // Quarter-turn rotation of a categorical map is exact; the orientation follows it.
        let maps = random_maps((161, 161), 12);
        let params = DescriptorParams {
            double_map: false,
            ..Default::default()
        };
        let rotate = |m: &Array2<u8>| {
            let n = m.nrows();
            Array2::from_shape_fn((n, n), |(r, c)| m[[n - 1 - c, r]])
        };
        let rotated = IndexMapPair {
            odd: rotate(&maps.odd),
            even: rotate(&maps.even),
            o_half: 6,
        };
        let f = feature_at(80, 80);
        let a = primary_orientation(&maps.odd, 80, 80, 36, 6, 0.8).unwrap();
        let b = primary_orientation(&rotated.odd, 80, 80, 36, 6, 0.8).unwrap();
        let da = build_descriptor(&maps, &f, a.primary, MapParity::Odd, &params).unwrap();
        let db = build_descriptor(&rotated, &f, b.primary, MapParity::Odd, &params).unwrap();
        let cos: f64 = da.iter().zip(&db).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        assert!(cos > 0.8, "cosine {cos}");
    }
}
