//! End-to-end matching: analysis of each image, descriptor matching, consensus,
//! template rematching and registration.

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::description::{describe_features, Descriptor};
use crate::detection::{collect_features, detect, FeaturePoint};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::log_gabor::{build_bank, index_maps, IndexMapPair, LogGaborParams, OrientationAmplitude};
use crate::matching::{fsc_filter, nn_match, Match, SimilarityTransform};
use crate::phase_congruency::{moment_maps, noise_threshold_from_finest, pc_from_responses, weighted_moment, PcParams};
use crate::pyramid::{admissible_octaves, build_scale_space, ScaleSpace};
use crate::template::{rematch, resample_sensed};

/// Gaussian sigma used for octave downsampling.
pub const PYRAMID_SIGMA: f64 = 1.0;

/// Per-orientation outputs of one log-Gabor pass.
#[derive(Debug, Clone)]
pub struct LayerMaps {
    /// Phase congruency per orientation.
    pub pc: Vec<Array2<f64>>,
    pub amplitude: OrientationAmplitude,
}

/// Filters `img` and reduces every orientation to its phase congruency and
/// accumulated amplitude, without keeping the complex responses around.
pub fn filter_layer(img: &GrayImage, lg: &LogGaborParams, pc_params: &PcParams) -> Result<LayerMaps> {
    let (rows, cols) = img.dims();
    let bank = build_bank(rows, cols, lg)?;
    let spectrum = bank.spectrum(img)?;
    let per_orient: Vec<(Array2<f64>, Array2<f64>)> = (0..lg.n_orients)
        .into_par_iter()
        .map(|o| {
            let responses = bank.convolve_orientation(&spectrum, o);
            let finest = responses[0].mapv(|v| v.norm());
            let t = noise_threshold_from_finest(&finest, responses.len(), pc_params.noise_k, pc_params.scale_step);
            let pc = pc_from_responses(&responses, t, pc_params);
            (pc, total_amplitude(&responses))
        })
        .collect();
    let (pc, layers) = per_orient.into_iter().unzip();
    Ok(LayerMaps {
        pc,
        amplitude: OrientationAmplitude { layers },
    })
}

/// Number of finest log-Gabor scales whose wavelength is below `2 * scale`, the
/// finest period a sensed image upsampled by `scale` can still carry. At least
/// one scale is always kept.
pub fn template_scale_skip(lg: &LogGaborParams, scale: f64) -> usize {
    (0..lg.n_scales.saturating_sub(1))
        .take_while(|&i| lg.min_wavelength * lg.scale_step.powi(i as i32) < 2.0 * scale)
        .count()
}

fn total_amplitude(responses: &[Array2<rustfft::num_complex::Complex64>]) -> Array2<f64> {
    let mut total = Array2::zeros(responses[0].dim());
    for r in responses {
        total.zip_mut_with(r, |t, v| *t += v.norm());
    }
    total
}

/// Accumulated amplitude only, for template construction.
pub fn amplitude_only(img: &GrayImage, lg: &LogGaborParams) -> Result<OrientationAmplitude> {
    let (rows, cols) = img.dims();
    let bank = build_bank(rows, cols, lg)?;
    let spectrum = bank.spectrum(img)?;
    let layers = (0..lg.n_orients)
        .into_par_iter()
        .map(|o| {
            total_amplitude(&bank.convolve_orientation(&spectrum, o))
        })
        .collect();
    Ok(OrientationAmplitude { layers })
}

/// Detection map, index maps and (for the base layer) amplitudes of one scale-space layer.
#[derive(Debug, Clone)]
pub struct LayerAnalysis {
    pub layer_id: usize,
    pub weighted_moment: Array2<f64>,
    pub index_maps: IndexMapPair,
    pub pc: Vec<Array2<f64>>,
}

/// Everything the matcher needs from one image.
#[derive(Debug, Clone)]
pub struct ImageAnalysis {
    pub dims: (usize, usize),
    pub n_octaves: usize,
    pub space: ScaleSpace,
    pub layers: Vec<LayerAnalysis>,
    pub features: Vec<FeaturePoint>,
    pub descriptors: Vec<Descriptor>,
}

/// Scale space, per-layer maps, features and descriptors of one image.
/// The octave count is reduced to what the image size admits.
pub fn analyze(img: &GrayImage, cfg: &PipelineConfig) -> Result<ImageAnalysis> {
    let n_octaves = admissible_octaves(img.rows(), img.cols(), cfg.n_octaves);
    if n_octaves == 0 {
        return Err(Error::ImageTooSmall {
            rows: img.rows(),
            cols: img.cols(),
            n_octaves: 1,
            required: crate::pyramid::required_side(1),
        });
    }
    let space = build_scale_space(img, n_octaves, PYRAMID_SIGMA)?;
    let lg = cfg.log_gabor_params();
    let pc_params = cfg.pc_params();
    let mut layers = Vec::with_capacity(space.n_layers());
    for (layer_id, layer) in space.layers() {
        let maps = filter_layer(layer, &lg, &pc_params)?;
        let moments = moment_maps(&maps.pc)?;
        let w = weighted_moment(&moments, cfg.tau, cfg.moment_weight_sign)?;
        layers.push(LayerAnalysis {
            layer_id,
            weighted_moment: w,
            index_maps: index_maps(&maps.amplitude)?,
            pc: maps.pc,
        });
    }
    let detector = cfg.detector_params();
    let per_layer: Vec<Vec<FeaturePoint>> = layers
        .par_iter()
        .map(|l| detect(&l.weighted_moment, l.layer_id, &detector))
        .collect();
    let features = collect_features(&space, per_layer, cfg.max_features);
    let maps: Vec<IndexMapPair> = layers.iter().map(|l| l.index_maps.clone()).collect();
    let descriptors = describe_features(&maps, &features, &cfg.descriptor_params());
    Ok(ImageAnalysis {
        dims: img.dims(),
        n_octaves,
        space,
        layers,
        features,
        descriptors,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StageStats {
    pub ref_octaves: usize,
    pub sen_octaves: usize,
    pub ref_features: usize,
    pub sen_features: usize,
    pub ref_descriptors: usize,
    pub sen_descriptors: usize,
    /// Mutual nearest-neighbour pairs before consensus.
    pub putative: usize,
    pub feature_inliers: usize,
    /// Template candidates accepted by the correlation test.
    pub template_candidates: usize,
    /// Template matches in the final set.
    pub template_inliers: usize,
    pub total: usize,
    /// True when the union was rejected in favour of the feature-stage result.
    pub template_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final inlier matches, feature-stage matches first.
    pub matches: Vec<Match>,
    pub transform: SimilarityTransform,
    pub stats: StageStats,
}

fn round_key(p: (f64, f64)) -> (i64, i64) {
    (p.0.round() as i64, p.1.round() as i64)
}

/// Template matches for every reference feature that is not a feature-stage inlier.
fn template_stage(
    ref_img: &ImageAnalysis,
    sen: &GrayImage,
    feature_inliers: &[Match],
    m: &SimilarityTransform,
    cfg: &PipelineConfig,
) -> Result<Vec<Match>> {
    let params = cfg.template_params();
    let resampled = resample_sensed(sen, m, ref_img.dims)?;
    // Both stacks come from the same reduced bank. The resampled sensed image
    // lacks detail finer than its own pixel grid, so scales it cannot support
    // are left out on both sides.
    let mut lg = cfg.log_gabor_params().with_orients(params.n_orients);
    let skip = template_scale_skip(&lg, m.scale);
    lg.min_wavelength *= lg.scale_step.powi(skip as i32);
    lg.n_scales -= skip;
    let (ref_ao, sen_ao) = rayon::join(
        || amplitude_only(ref_img.space.layer(0), &lg),
        || amplitude_only(&resampled.image, &lg),
    );
    let (ref_ao, sen_ao) = (ref_ao?, sen_ao?);
    let matched: std::collections::HashSet<usize> = feature_inliers.iter().filter_map(|m| m.ref_feature).collect();
    let unmatched: Vec<(f64, f64)> = ref_img
        .features
        .iter()
        .enumerate()
        .filter(|(i, _)| !matched.contains(i))
        .map(|(_, f)| f.original())
        .collect();
    let taken: std::collections::HashSet<(i64, i64)> = feature_inliers.iter().map(|m| round_key(m.ref_point)).collect();
    let mut found = rematch(&unmatched, &ref_ao, &sen_ao, &resampled.valid, m, sen.dims(), &params)?;
    found.retain(|t| !taken.contains(&round_key(t.ref_point)));
    Ok(found)
}

/// Matches `sen` against `reference` and estimates the similarity mapping sensed to reference pixels.
pub fn match_pipeline(reference: &GrayImage, sen: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (ra, sa) = rayon::join(|| analyze(reference, cfg), || analyze(sen, cfg));
    let (ra, sa) = (ra?, sa?);
    match_analyzed(&ra, &sa, sen, cfg)
}

/// Matching stages on precomputed analyses. `sen` is the sensed image behind `sa`.
pub fn match_analyzed(ra: &ImageAnalysis, sa: &ImageAnalysis, sen: &GrayImage, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let mut stats = StageStats {
        ref_octaves: ra.n_octaves,
        sen_octaves: sa.n_octaves,
        ref_features: ra.features.len(),
        sen_features: sa.features.len(),
        ref_descriptors: ra.descriptors.len(),
        sen_descriptors: sa.descriptors.len(),
        ..StageStats::default()
    };
    if ra.descriptors.is_empty() || sa.descriptors.is_empty() {
        return Err(Error::FeatureStageFailed(format!(
            "no descriptors (reference {}, sensed {})",
            ra.descriptors.len(),
            sa.descriptors.len()
        )));
    }
    let putative = nn_match(&ra.descriptors, &sa.descriptors, true)?;
    stats.putative = putative.len();
    let fsc = cfg.fsc_params();
    let feature = fsc_filter(&putative, &fsc)
        .map_err(|e| Error::FeatureStageFailed(format!("{} putative matches: {e}", putative.len())))?;
    stats.feature_inliers = feature.inliers.len();

    let mut matches = feature.inliers.clone();
    let mut transform = feature.transform;
    if cfg.template {
        let candidates = template_stage(ra, sen, &feature.inliers, &feature.transform, cfg)?;
        stats.template_candidates = candidates.len();
        let template_kept = if candidates.len() >= fsc.min_inliers {
            fsc_filter(&candidates, &fsc).map(|r| r.inliers).unwrap_or_default()
        } else {
            Vec::new()
        };
        if !template_kept.is_empty() {
            let union: Vec<Match> = feature.inliers.iter().chain(&template_kept).copied().collect();
            match fsc_filter(&union, &fsc) {
                Ok(r) if r.inliers.len() >= feature.inliers.len() => {
                    matches = r.inliers;
                    transform = r.transform;
                }
                _ => stats.template_fallback = true,
            }
        }
    }
    stats.template_inliers = matches.iter().filter(|m| m.stage == crate::matching::Stage::Template).count();
    stats.total = matches.len();
    Ok(PipelineOutput {
        matches,
        transform,
        stats,
    })
}

/// Sensed image warped into the reference frame, and an 8x8 checkerboard of the two.
pub fn register_and_fuse(reference: &GrayImage, sen: &GrayImage, m: &SimilarityTransform) -> Result<(GrayImage, GrayImage)> {
    let registered = resample_sensed(sen, m, reference.dims())?.image;
    let (rows, cols) = reference.dims();
    let (th, tw) = (rows.div_ceil(8), cols.div_ceil(8));
    let fusion = GrayImage::from_fn(rows, cols, |r, c| {
        if (r / th + c / tw) % 2 == 0 {
            reference.get(r, c)
        } else {
            registered.get(r, c)
        }
    });
    Ok((registered, fusion))
}
