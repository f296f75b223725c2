//! Descriptor matching, similarity estimation and sample-consensus outlier removal.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::description::Descriptor;
use crate::error::{Error, Result};

/// Maps sensed coordinates to reference coordinates:
/// `p_ref = scale * R(rotation) * p_sen + (tx, ty)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    /// Radians, counter-clockwise in `(x, y)` coordinates.
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        rotation: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(scale: f64, rotation: f64, tx: f64, ty: f64) -> Self {
        Self {
            scale,
            rotation,
            tx,
            ty,
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self::new(1.0, 0.0, tx, ty)
    }

    /// Rotation by `angle` and scaling about `center`, which stays fixed.
    pub fn about(center: (f64, f64), scale: f64, angle: f64) -> Self {
        let linear = Self::new(scale, angle, 0.0, 0.0);
        let (rx, ry) = linear.apply(center);
        Self::new(scale, angle, center.0 - rx, center.1 - ry)
    }

    pub fn is_valid(&self) -> bool {
        self.scale > 0.0 && self.scale.is_finite() && self.rotation.is_finite() && self.tx.is_finite() && self.ty.is_finite()
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (sin, cos) = self.rotation.sin_cos();
        (
            self.scale * (cos * x - sin * y) + self.tx,
            self.scale * (sin * x + cos * y) + self.ty,
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.is_valid() {
            return Err(Error::Degenerate(format!("transform scale {} is not invertible", self.scale)));
        }
        let inv = Self::new(1.0 / self.scale, -self.rotation, 0.0, 0.0);
        let (tx, ty) = inv.apply((self.tx, self.ty));
        Ok(Self::new(inv.scale, inv.rotation, -tx, -ty))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let (tx, ty) = self.apply((other.tx, other.ty));
        Self::new(self.scale * other.scale, self.rotation + other.rotation, tx, ty)
    }

    pub fn residual(&self, sen: (f64, f64), reference: (f64, f64)) -> f64 {
        let (x, y) = self.apply(sen);
        (x - reference.0).hypot(y - reference.1)
    }
}

/// Closed-form least-squares similarity mapping `pairs[i].0` (sensed) onto `pairs[i].1` (reference).
pub fn estimate_similarity(pairs: &[((f64, f64), (f64, f64))]) -> Result<SimilarityTransform> {
    if pairs.len() < 2 {
        return Err(Error::NotEnoughMatches(format!("{} point pairs, need 2", pairs.len())));
    }
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
    for &((a, b), (c, d)) in pairs {
        sx += a;
        sy += b;
        dx += c;
        dy += d;
    }
    let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);
    let (mut dot, mut cross, mut spread, mut dst_spread) = (0.0, 0.0, 0.0, 0.0);
    for &((a, b), (c, d)) in pairs {
        let (xs, ys) = (a - sx, b - sy);
        let (xd, yd) = (c - dx, d - dy);
        dot += xs * xd + ys * yd;
        cross += xs * yd - ys * xd;
        spread += xs * xs + ys * ys;
        dst_spread += xd * xd + yd * yd;
    }
    let scale_ref = spread.max(dst_spread).max(1.0);
    if spread <= 1e-12 * scale_ref || dst_spread <= 1e-12 * scale_ref {
        return Err(Error::Degenerate("point set has no spread".into()));
    }
    let rotation = cross.atan2(dot);
    let scale = dot.hypot(cross) / spread;
    let linear = SimilarityTransform::new(scale, rotation, 0.0, 0.0);
    let (rx, ry) = linear.apply((sx, sy));
    Ok(SimilarityTransform::new(scale, rotation, dx - rx, dy - ry))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Feature,
    Template,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Feature => "feature",
            Stage::Template => "template",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Original reference-image pixels.
    pub ref_point: (f64, f64),
    /// Original sensed-image pixels.
    pub sen_point: (f64, f64),
    pub distance: f64,
    pub stage: Stage,
    /// Index of the reference feature, when the match came from one.
    pub ref_feature: Option<usize>,
    pub sen_feature: Option<usize>,
}

impl Match {
    pub fn pair(&self) -> ((f64, f64), (f64, f64)) {
        (self.sen_point, self.ref_point)
    }
}

fn descriptor_matrix(descs: &[Descriptor]) -> Result<Array2<f32>> {
    let dim = descs[0].values.len();
    if descs.iter().any(|d| d.values.len() != dim) {
        return Err(Error::InvalidParameter("descriptors have mixed lengths".into()));
    }
    let mut m = Array2::zeros((descs.len(), dim));
    for (i, d) in descs.iter().enumerate() {
        m.row_mut(i).assign(&ndarray::ArrayView1::from(&d.values[..]));
    }
    Ok(m)
}

/// For every row of `queries`, the index of and squared distance to its nearest row
/// of `targets`. Rows are unit length, so `|a-b|^2 = 2 - 2 a.b`. Ties go to the lower index.
fn nearest_rows(queries: &Array2<f32>, targets: &Array2<f32>) -> Vec<(usize, f64)> {
    const CHUNK: usize = 512;
    let mut out = Vec::with_capacity(queries.nrows());
    let targets_t = targets.t();
    let mut start = 0;
    while start < queries.nrows() {
        let end = (start + CHUNK).min(queries.nrows());
        let dots = queries.slice(s![start..end, ..]).dot(&targets_t);
        for row in dots.rows() {
            let mut best = (0usize, f32::MIN);
            for (j, &v) in row.iter().enumerate() {
                if v > best.1 {
                    best = (j, v);
                }
            }
            out.push((best.0, (2.0 - 2.0 * best.1 as f64).max(0.0)));
        }
        start = end;
    }
    out
}

/// Best partner feature per feature: `(partner feature, descriptor distance)`.
fn best_by_feature(
    from: &[Descriptor],
    to: &[Descriptor],
    nearest: &[(usize, f64)],
) -> std::collections::BTreeMap<usize, (usize, f64, usize, usize)> {
    let mut best: std::collections::BTreeMap<usize, (usize, f64, usize, usize)> = Default::default();
    for (i, &(j, d2)) in nearest.iter().enumerate() {
        let key = from[i].feature_index;
        let candidate = (to[j].feature_index, d2, i, j);
        match best.get(&key) {
            Some(cur) if cur.1 <= d2 => {}
            _ => {
                best.insert(key, candidate);
            }
        }
    }
    best
}

/// Nearest-neighbour matching between descriptor sets.
///
/// Descriptors of the same feature (secondary orientations, other anchors)
/// collapse to one candidate per feature, keeping the closest. With `mutual`,
/// a pair survives only if each feature is the other's best.
pub fn nn_match(descs_ref: &[Descriptor], descs_sen: &[Descriptor], mutual: bool) -> Result<Vec<Match>> {
    if descs_ref.is_empty() {
        return Err(Error::EmptyInput("reference descriptors"));
    }
    if descs_sen.is_empty() {
        return Err(Error::EmptyInput("sensed descriptors"));
    }
    let ref_m = descriptor_matrix(descs_ref)?;
    let sen_m = descriptor_matrix(descs_sen)?;
    if ref_m.ncols() != sen_m.ncols() {
        return Err(Error::InvalidParameter("descriptor lengths differ between images".into()));
    }
    let sen_to_ref = nearest_rows(&sen_m, &ref_m);
    let sen_best = best_by_feature(descs_sen, descs_ref, &sen_to_ref);
    let ref_best = if mutual {
        let ref_to_sen = nearest_rows(&ref_m, &sen_m);
        Some(best_by_feature(descs_ref, descs_sen, &ref_to_sen))
    } else {
        None
    };
    let mut matches = Vec::new();
    for (&sen_feature, &(ref_feature, d2, i, j)) in &sen_best {
        if let Some(rb) = &ref_best {
            if rb.get(&ref_feature).map(|b| b.0) != Some(sen_feature) {
                continue;
            }
        }
        let (sd, rd) = (&descs_sen[i], &descs_ref[j]);
        matches.push(Match {
            ref_point: (rd.x, rd.y),
            sen_point: (sd.x, sd.y),
            distance: d2.sqrt(),
            stage: Stage::Feature,
            ref_feature: Some(ref_feature),
            sen_feature: Some(sen_feature),
        });
    }
    Ok(matches)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FscParams {
    /// Inlier tolerance in reference pixels.
    pub tolerance: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub min_inliers: usize,
    /// Maximum refinement rounds.
    pub refine_rounds: usize,
}

impl Default for FscParams {
    fn default() -> Self {
        Self {
            tolerance: 3.0,
            max_iters: 2000,
            seed: 42,
            min_inliers: 4,
            refine_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FscResult {
    pub inliers: Vec<Match>,
    /// Positions of the inliers in the input slice.
    pub inlier_indices: Vec<usize>,
    pub transform: SimilarityTransform,
}

fn classify(matches: &[Match], t: &SimilarityTransform, tol: f64) -> (Vec<usize>, f64) {
    let mut set = Vec::new();
    let mut total = 0.0;
    for (i, m) in matches.iter().enumerate() {
        let r = t.residual(m.sen_point, m.ref_point);
        if r <= tol {
            set.push(i);
            total += r;
        }
    }
    (set, total)
}

fn plausible(t: &SimilarityTransform) -> bool {
    t.is_valid() && t.scale > 1e-3 && t.scale < 1e3
}

/// Two-stage sample consensus.
///
/// Stage one scores minimal two-match similarity hypotheses by inlier count
/// (ties by lower summed residual) and stops early once enough samples have
/// been drawn to hit an all-inlier pair with 99.9% probability. Stage two
/// refits by least squares on the inliers and reclassifies until the set is stable.
pub fn fsc_filter(matches: &[Match], params: &FscParams) -> Result<FscResult> {
    if matches.len() < 2 {
        return Err(Error::NotEnoughMatches(format!("{} matches, need 2", matches.len())));
    }
    let n = matches.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Vec<usize>, f64, SimilarityTransform)> = None;
    let mut needed = params.max_iters;
    let mut iter = 0;
    while iter < needed.min(params.max_iters) {
        iter += 1;
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let Ok(t) = estimate_similarity(&[matches[a].pair(), matches[b].pair()]) else {
            continue;
        };
        if !plausible(&t) {
            continue;
        }
        let (set, total) = classify(matches, &t, params.tolerance);
        let better = match &best {
            None => true,
            Some((bs, bt, _)) => set.len() > bs.len() || (set.len() == bs.len() && total < *bt),
        };
        if better {
            let ratio = set.len() as f64 / n as f64;
            let p_good = ratio * ratio;
            if p_good >= 1.0 {
                needed = iter;
            } else if p_good > 0.0 {
                needed = ((1.0f64 - 0.999).ln() / (1.0 - p_good).ln()).ceil() as usize;
            }
            best = Some((set, total, t));
        }
    }
    let Some((mut set, _, mut transform)) = best else {
        return Err(Error::NotEnoughMatches("no valid hypothesis".into()));
    };
    if set.len() < params.min_inliers {
        return Err(Error::NotEnoughMatches(format!(
            "best consensus has {} inliers, need {}",
            set.len(),
            params.min_inliers
        )));
    }
    for _ in 0..params.refine_rounds {
        let pairs: Vec<_> = set.iter().map(|&i| matches[i].pair()).collect();
        let Ok(refit) = estimate_similarity(&pairs) else {
            break;
        };
        let (next, _) = classify(matches, &refit, params.tolerance);
        if next.len() < params.min_inliers {
            break;
        }
        transform = refit;
        let stable = next == set;
        set = next;
        if stable {
            break;
        }
    }
    Ok(FscResult {
        inliers: set.iter().map(|&i| matches[i]).collect(),
        inlier_indices: set,
        transform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::FeaturePoint;
    use crate::log_gabor::MapParity;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn desc(values: Vec<f32>, feature_index: usize, x: f64) -> Descriptor {
        Descriptor {
            values,
            feature: FeaturePoint {
                x: 0,
                y: 0,
                layer_id: 0,
                layer_scale: 1.0,
                response: 0.0,
            },
            feature_index,
            x,
            y: 0.0,
            orientation: 0.0,
            anchor: MapParity::Odd,
            is_secondary: false,
        }
    }

    fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| (x / n) as f32).collect()
    }

    #[test]
    fn identity_pairs() {
        let pairs: Vec<_> = [(0.0, 0.0), (10.0, 3.0), (-4.0, 8.0)].iter().map(|&p| (p, p)).collect();
        let t = estimate_similarity(&pairs).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.rotation.abs() < 1e-12);
        assert!(t.tx.abs() < 1e-12 && t.ty.abs() < 1e-12);
    }

    #[test]
    fn pure_translation() {
        let pairs: Vec<_> = [(0.0, 0.0), (10.0, 3.0), (-4.0, 8.0)]
            .iter()
            .map(|&(x, y)| ((x, y), (x + 7.0, y - 3.0)))
            .collect();
        let t = estimate_similarity(&pairs).unwrap();
        assert!((t.scale - 1.0).abs() < 1e-12 && t.rotation.abs() < 1e-12);
        assert!((t.tx - 7.0).abs() < 1e-12 && (t.ty + 3.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let pairs = vec![((1.0, 1.0), (2.0, 2.0)); 3];
        assert!(matches!(estimate_similarity(&pairs), Err(Error::Degenerate(_))));
        assert!(estimate_similarity(&pairs[..1]).is_err());
    }

    #[test]
    fn planted_parameters_with_noise() {
        let truth = SimilarityTransform::new(1.8, 40f64.to_radians(), 11.0, -5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let pairs: Vec<_> = (0..50)
            .map(|_| {
                let p = (rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0));
                let (x, y) = truth.apply(p);
                (p, (x + noise.sample(&mut rng), y + noise.sample(&mut rng)))
            })
            .collect();
        let t = estimate_similarity(&pairs).unwrap();
        assert!((t.scale / 1.8 - 1.0).abs() < 0.01);
        assert!((t.rotation.to_degrees() - 40.0).abs() < 0.5);
        assert!((t.tx - 11.0).abs() < 0.3 && (t.ty + 5.0).abs() < 0.3);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let t = SimilarityTransform::new(2.5, 1.1, -30.0, 4.0);
        let id = t.compose(&t.inverse().unwrap());
        for p in [(0.0, 0.0), (13.0, -7.0), (250.0, 90.0)] {
            let q = id.apply(p);
            assert!((q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9);
        }
        assert!(SimilarityTransform::new(0.0, 0.0, 0.0, 0.0).inverse().is_err());
    }

    #[test]
    fn rotation_about_center_fixes_center() {
        let t = SimilarityTransform::about((256.0, 256.0), 1.5, 0.3);
        let c = t.apply((256.0, 256.0));
        assert!((c.0 - 256.0).abs() < 1e-9 && (c.1 - 256.0).abs() < 1e-9);
    }

    #[test]
    fn self_matching_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let descs: Vec<Descriptor> = (0..20).map(|i| desc(unit(&mut rng, 16), i, i as f64)).collect();
        let m = nn_match(&descs, &descs, true).unwrap();
        assert_eq!(m.len(), 20);
        for mm in &m {
            assert_eq!(mm.ref_feature, mm.sen_feature);
            assert!(mm.distance < 1e-3);
        }
    }

    #[test]
    fn one_against_three_picks_nearest() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let refs: Vec<Descriptor> = (0..3).map(|i| desc(unit(&mut rng, 8), i, i as f64)).collect();
        let sen = vec![desc(unit(&mut rng, 8), 0, 0.0)];
        let m = nn_match(&refs, &sen, false).unwrap();
        let brute = (0..3)
            .map(|i| {
                let d: f64 = refs[i]
                    .values
                    .iter()
                    .zip(&sen[0].values)
                    .map(|(a, b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                (i, d)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(m[0].ref_feature, Some(brute.0));
        assert!((m[0].distance - brute.1).abs() < 1e-5);
    }

    #[test]
    fn orthogonal_unit_vectors() {
        let e = |k: usize| {
            let mut v = vec![0.0f32; 4];
            v[k] = 1.0;
            v
        };
        let refs: Vec<Descriptor> = (0..2).map(|i| desc(e(i), i, i as f64)).collect();
        let sen: Vec<Descriptor> = (0..2).map(|i| desc(e(i + 2), i, i as f64)).collect();
        let m = nn_match(&refs, &sen, true).unwrap();
        assert!(!m.is_empty());
        for mm in &m {
            assert!((mm.distance - 2f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_inputs_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let one = vec![desc(unit(&mut rng, 4), 0, 0.0)];
        assert!(nn_match(&[], &one, true).is_err());
        assert!(nn_match(&one, &[], true).is_err());
    }

    #[test]
    fn duplicates_of_a_feature_yield_one_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = unit(&mut rng, 8);
        let other = unit(&mut rng, 8);
        let refs = vec![desc(base.clone(), 0, 0.0), desc(other.clone(), 1, 1.0)];
        let sen = vec![desc(base, 5, 0.0), desc(other, 5, 0.0)];
        let m = nn_match(&refs, &sen, false).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].sen_feature, Some(5));
    }

    fn brute_force_mutual(refs: &[Descriptor], sens: &[Descriptor]) -> Vec<(usize, usize)> {
        let dist = |a: &Descriptor, b: &Descriptor| -> f64 {
            a.values.iter().zip(&b.values).map(|(x, y)| ((x - y) as f64).powi(2)).sum()
        };
        let best = |from: &[Descriptor], to: &[Descriptor]| -> Vec<usize> {
            from.iter()
                .map(|a| {
                    let mut bi = 0;
                    for j in 1..to.len() {
                        if dist(a, &to[j]) < dist(a, &to[bi]) {
                            bi = j;
                        }
                    }
                    bi
                })
                .collect()
        };
        let s2r = best(sens, refs);
        let r2s = best(refs, sens);
        let mut out: Vec<(usize, usize)> = (0..sens.len()).filter(|&i| r2s[s2r[i]] == i).map(|i| (s2r[i], i)).collect();
        out.sort_by_key(|p| p.1);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn nn_matches_exhaustive_oracle(seed in 0u64..1000, n_ref in 1usize..200, n_sen in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let refs: Vec<Descriptor> = (0..n_ref).map(|i| desc(unit(&mut rng, 24), i, i as f64)).collect();
            let sens: Vec<Descriptor> = (0..n_sen).map(|i| desc(unit(&mut rng, 24), i, i as f64)).collect();
            let got: Vec<(usize, usize)> = nn_match(&refs, &sens, true)
                .unwrap()
                .iter()
                .map(|m| (m.ref_feature.unwrap(), m.sen_feature.unwrap()))
                .collect();
            prop_assert_eq!(got, brute_force_mutual(&refs, &sens));
        }

        #[test]
        fn similarity_residual_invariant_under_rigid_motion(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = SimilarityTransform::new(rng.gen_range(0.5..2.0), rng.gen_range(-3.0..3.0), 4.0, -2.0);
            let pairs: Vec<_> = (0..12)
                .map(|_| {
                    let p = (rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
                    let (x, y) = truth.apply(p);
                    (p, (x + rng.gen_range(-1.0..1.0), y + rng.gen_range(-1.0..1.0)))
                })
                .collect();
            let rigid = SimilarityTransform::new(1.0, rng.gen_range(-3.0..3.0), rng.gen_range(-20.0..20.0), 9.0);
            let moved: Vec<_> = pairs.iter().map(|&(a, b)| (rigid.apply(a), rigid.apply(b))).collect();
            let rss = |ps: &[((f64, f64), (f64, f64))]| {
                let t = estimate_similarity(ps).unwrap();
                ps.iter().map(|&(a, b)| t.residual(a, b).powi(2)).sum::<f64>()
            };
            prop_assert!((rss(&pairs) - rss(&moved)).abs() < 1e-9 * rss(&pairs).max(1.0));
        }
    }

    fn planted(n_in: usize, n_out: usize, seed: u64) -> (Vec<Match>, SimilarityTransform) {
        let truth = SimilarityTransform::new(1.3, 0.6, 20.0, -15.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matches = Vec::new();
        for i in 0..n_in + n_out {
            let sen = (rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0));
            let reference = if i < n_in {
                truth.apply(sen)
            } else {
                (rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0))
            };
            matches.push(Match {
                ref_point: reference,
                sen_point: sen,
                distance: 0.1,
                stage: Stage::Feature,
                ref_feature: Some(i),
                sen_feature: Some(i),
            });
        }
        (matches, truth)
    }

    #[test]
    fn fsc_exact_matches() {
        let (m, truth) = planted(20, 0, 1);
        let r = fsc_filter(&m, &FscParams::default()).unwrap();
        assert_eq!(r.inliers.len(), 20);
        assert!((r.transform.scale - truth.scale).abs() < 1e-6);
        assert!((r.transform.rotation - truth.rotation).abs() < 1e-6);
        assert!((r.transform.tx - truth.tx).abs() < 1e-6 && (r.transform.ty - truth.ty).abs() < 1e-6);
    }

    #[test]
    fn fsc_with_outliers() {
        let (m, truth) = planted(20, 20, 2);
        let r = fsc_filter(&m, &FscParams::default()).unwrap();
        let true_in = r.inlier_indices.iter().filter(|&&i| i < 20).count();
        assert!(true_in >= 19);
        for &i in &r.inlier_indices {
            if i < 20 {
                let p = r.transform.apply(m[i].sen_point);
                let q = truth.apply(m[i].sen_point);
                assert!((p.0 - q.0).hypot(p.1 - q.1) < 0.1);
            }
        }
        for inl in &r.inliers {
            assert!(r.transform.residual(inl.sen_point, inl.ref_point) <= 3.0);
        }
    }

    #[test]
    fn fsc_is_deterministic() {
        let (m, _) = planted(30, 30, 3);
        let a = fsc_filter(&m, &FscParams::default()).unwrap();
        let b = fsc_filter(&m, &FscParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fsc_rejects_tiny_inputs() {
        let (m, _) = planted(1, 0, 4);
        assert!(fsc_filter(&m, &FscParams::default()).is_err());
        let (m, _) = planted(0, 30, 4);
        assert!(fsc_filter(&m, &FscParams::default()).is_err());
    }
}
