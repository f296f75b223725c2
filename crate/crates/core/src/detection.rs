//! FAST-9 corners on the weighted moment map of each pyramid layer.

use ndarray::Array2;

use crate::pyramid::ScaleSpace;

/// Minimum distance (pixels) between a detection and any layer border.
pub const BORDER_MARGIN: usize = 12;

/// Bresenham circle of radius 3 as `(dx, dy)`, clockwise from 12 o'clock.
pub const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Contiguous arc length required by the segment test.
pub const ARC_LENGTH: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    /// Column in the layer frame.
    pub x: usize,
    /// Row in the layer frame.
    pub y: usize,
    pub layer_id: usize,
    pub layer_scale: f64,
    pub response: f64,
}

impl FeaturePoint {
    /// Position in original-image pixels.
    pub fn original(&self) -> (f64, f64) {
        (self.x as f64 * self.layer_scale, self.y as f64 * self.layer_scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Segment-test threshold on the max-normalized moment map.
    pub threshold: f64,
    pub max_per_layer: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            max_per_layer: usize::MAX,
        }
    }
}

/// Divides by the maximum when it is positive.
pub fn normalize_by_max(map: &Array2<f64>) -> Array2<f64> {
    let max = map.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        map / max
    } else {
        map.clone()
    }
}

fn longest_run(flags: &[bool; 16]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for i in 0..32 {
        if flags[i % 16] {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best.min(16)
}

/// Segment-test score at `(x, y)` or `None` if it is not a corner.
/// The score is the larger of the summed excess over the threshold of the
/// brighter set and of the darker set.
pub fn segment_test(map: &Array2<f64>, x: usize, y: usize, threshold: f64) -> Option<f64> {
    let center = map[[y, x]];
    let mut brighter = [false; 16];
    let mut darker = [false; 16];
    let mut bright_sum = 0.0;
    let mut dark_sum = 0.0;
    for (i, &(dx, dy)) in CIRCLE.iter().enumerate() {
        let v = map[[(y as isize + dy) as usize, (x as isize + dx) as usize]];
        if v > center + threshold {
            brighter[i] = true;
            bright_sum += v - center - threshold;
        } else if v < center - threshold {
            darker[i] = true;
            dark_sum += center - v - threshold;
        }
    }
    let bright = longest_run(&brighter) >= ARC_LENGTH;
    let dark = longest_run(&darker) >= ARC_LENGTH;
    match (bright, dark) {
        (false, false) => None,
        (true, false) => Some(bright_sum),
        (false, true) => Some(dark_sum),
        (true, true) => Some(bright_sum.max(dark_sum)),
    }
}

/// Every pixel inside the border margin that passes the segment test, as `(x, y, score)`
/// in raster order. `map` must already be normalized.
pub fn segment_test_corners(map: &Array2<f64>, threshold: f64) -> Vec<(usize, usize, f64)> {
    let (rows, cols) = map.dim();
    if rows < 2 * BORDER_MARGIN + 1 || cols < 2 * BORDER_MARGIN + 1 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for y in BORDER_MARGIN..rows - BORDER_MARGIN {
        for x in BORDER_MARGIN..cols - BORDER_MARGIN {
            if let Some(score) = segment_test(map, x, y, threshold) {
                out.push((x, y, score));
            }
        }
    }
    out
}

/// FAST detection with 3x3 non-maximum suppression, strongest first.
pub fn detect(w: &Array2<f64>, layer_id: usize, params: &DetectorParams) -> Vec<FeaturePoint> {
    let map = normalize_by_max(w);
    let (rows, cols) = map.dim();
    let corners = segment_test_corners(&map, params.threshold);
    let mut score = Array2::<f64>::zeros((rows, cols));
    for &(x, y, s) in &corners {
        score[[y, x]] = s;
    }
    let layer_scale = ScaleSpace::layer_scale(layer_id);
    let mut kept: Vec<FeaturePoint> = corners
        .iter()
        .filter(|&&(x, y, s)| {
            // Strictly greater than earlier neighbours, at least equal to later ones,
            // so plateaus keep exactly their first pixel in raster order.
            (-1isize..=1).all(|dy| {
                (-1isize..=1).all(|dx| {
                    if dx == 0 && dy == 0 {
                        return true;
                    }
                    let n = score[[(y as isize + dy) as usize, (x as isize + dx) as usize]];
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if earlier {
                        s > n
                    } else {
                        s >= n
                    }
                })
            })
        })
        .map(|&(x, y, s)| FeaturePoint {
            x,
            y,
            layer_id,
            layer_scale,
            response: s,
        })
        .collect();
    sort_by_response(&mut kept);
    kept.truncate(params.max_per_layer);
    kept
}

fn sort_by_response(points: &mut [FeaturePoint]) {
    points.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
    });
}

/// Largest-remainder split of `total` proportional to `weights`.
pub fn proportional_quotas(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights
        .iter()
        .map(|&w| total as f64 * w as f64 / sum as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut remaining = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        quotas[i] += 1;
        remaining -= 1;
    }
    quotas
}

/// Merges per-layer detections, capping the total at `max_total`.
///
/// Over the cap, each layer keeps its strongest points up to a quota proportional
/// to its pixel count; slots a layer cannot fill go to the strongest leftovers of
/// any layer. `per_layer[i]` holds the detections of layer `i`.
pub fn collect_features(space: &ScaleSpace, per_layer: Vec<Vec<FeaturePoint>>, max_total: usize) -> Vec<FeaturePoint> {
    let total: usize = per_layer.iter().map(Vec::len).sum();
    if total <= max_total {
        return per_layer.into_iter().flatten().collect();
    }
    let pixels: Vec<usize> = (0..per_layer.len())
        .map(|id| {
            let (r, c) = space.layer(id).dims();
            r * c
        })
        .collect();
    let quotas = proportional_quotas(&pixels, max_total);
    let mut chosen: Vec<Vec<FeaturePoint>> = Vec::with_capacity(per_layer.len());
    let mut leftovers = Vec::new();
    for (mut layer, quota) in per_layer.into_iter().zip(quotas) {
        sort_by_response(&mut layer);
        let rest = layer.split_off(quota.min(layer.len()));
        leftovers.extend(rest);
        chosen.push(layer);
    }
    let used: usize = chosen.iter().map(Vec::len).sum();
    sort_by_response(&mut leftovers);
    for p in leftovers.into_iter().take(max_total - used) {
        chosen[p.layer_id].push(p);
    }
    chosen.into_iter().flatten().collect()
}
