//! Proposal decoding, refinement, score fusion, boundary-quality lookup,
//! and Soft-NMS.
//!
//! Offsets are predicted in level-grid units and converted to global frame
//! units by the level stride. Quality maps are indexed in map timesteps;
//! [`InferenceConfig::map_stride`] converts frame coordinates to map
//! coordinates (1.0 when the maps live on the frame grid).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::quality::{AnchorScaleSet, QualityMapPair};

/// Strides (frames per timestep) of the feature pyramid, one per level,
/// strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidConfig {
    strides: Vec<f64>,
}

impl PyramidConfig {
    pub fn new(strides: Vec<f64>) -> Result<Self> {
        if strides.is_empty() {
            return Err(Error::InvalidConfig("pyramid needs at least one level".into()));
        }
        if strides.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidConfig("pyramid strides must be positive".into()));
        }
        if strides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("pyramid strides must be strictly increasing".into()));
        }
        Ok(Self { strides })
    }

    pub fn levels(&self) -> usize {
        self.strides.len()
    }

    pub fn stride(&self, level: usize) -> Result<f64> {
        self.strides
            .get(level)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("level {level} out of range")))
    }
}

/// Raw per-location output of the coarse detection head.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarsePrediction {
    pub level: usize,
    /// Temporal location in level-grid units.
    pub location: f64,
    /// Distance to the action start, level-grid units, nonnegative.
    pub start_offset: f64,
    /// Distance to the action end, level-grid units, nonnegative.
    pub end_offset: f64,
    pub class_scores: Vec<f64>,
    pub quality: f64,
}

/// Output of the refinement stage for one coarse prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPrediction {
    /// Relative start refinement, unconstrained.
    pub start_delta: f64,
    /// Relative end refinement, unconstrained.
    pub end_delta: f64,
    pub class_scores: Vec<f64>,
    pub quality: f64,
}

/// A coarse prediction together with its refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionPair {
    pub coarse: CoarsePrediction,
    pub refined: RefinedPrediction,
}

/// A scored detection in global frame units.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub interval: Interval,
    pub label: usize,
    /// Fused class score at `label`.
    pub class_score: f64,
    /// Fused quality score.
    pub quality: f64,
    /// Interpolated start-boundary quality.
    pub start_quality: f64,
    /// Interpolated end-boundary quality.
    pub end_quality: f64,
    pub score: f64,
}

/// Score decay applied to overlapping detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NmsDecay {
    /// Multiply by `1 - overlap` when overlap exceeds the threshold.
    Linear { threshold: f64 },
    /// Multiply by `exp(-overlap^2 / sigma)` for every positive overlap.
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsConfig {
    pub decay: NmsDecay,
    /// Detections whose score falls below this are dropped.
    pub score_floor: f64,
    /// Suppress within each class independently instead of across classes.
    pub per_class: bool,
}

impl SoftNmsConfig {
    pub fn linear(threshold: f64, score_floor: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "soft-nms threshold must lie in (0, 1), got {threshold}"
            )));
        }
        if score_floor < 0.0 {
            return Err(Error::InvalidConfig("score floor must be nonnegative".into()));
        }
        Ok(Self { decay: NmsDecay::Linear { threshold }, score_floor, per_class: false })
    }

    pub fn gaussian(sigma: f64, score_floor: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::InvalidConfig(format!("gaussian sigma must be positive, got {sigma}")));
        }
        if score_floor < 0.0 {
            return Err(Error::InvalidConfig("score floor must be nonnegative".into()));
        }
        Ok(Self { decay: NmsDecay::Gaussian { sigma }, score_floor, per_class: false })
    }

    pub fn with_per_class(mut self, per_class: bool) -> Self {
        self.per_class = per_class;
        self
    }
}

impl Default for SoftNmsConfig {
    fn default() -> Self {
        Self { decay: NmsDecay::Linear { threshold: 0.5 }, score_floor: 1e-4, per_class: false }
    }
}

/// Everything the inference composition needs beyond the pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub scale_set: AnchorScaleSet,
    /// Duration-to-anchor-scale mapping coefficient.
    pub tau: f64,
    pub nms: SoftNmsConfig,
    /// Frames per quality-map timestep.
    pub map_stride: f64,
}

impl InferenceConfig {
    pub fn new(scale_set: AnchorScaleSet, tau: f64, nms: SoftNmsConfig) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
        }
        Ok(Self { scale_set, tau, nms, map_stride: 1.0 })
    }

    pub fn with_map_stride(mut self, map_stride: f64) -> Result<Self> {
        if !(map_stride.is_finite() && map_stride > 0.0) {
            return Err(Error::InvalidConfig(format!("map stride must be positive, got {map_stride}")));
        }
        self.map_stride = map_stride;
        Ok(self)
    }
}

/// Decode a coarse prediction to a global-frame interval and a class:
/// `((t - d_start) * stride, (t + d_end) * stride)`, class by argmax of the
/// coarse class scores.
pub fn decode_coarse(pred: &CoarsePrediction, cfg: &PyramidConfig) -> Result<(Interval, usize)> {
    let stride = cfg.stride(pred.level)?;
    let start = (pred.location - pred.start_offset) * stride;
    let end = (pred.location + pred.end_offset) * stride;
    Ok((Interval::new(start, end), argmax(&pred.class_scores)))
}

fn argmax(scores: &[f64]) -> usize {
    assert!(!scores.is_empty(), "class score vector is empty");
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Apply relative boundary refinements at location `t`:
/// `(t - d_s - 0.5*delta_s*w, t + d_e + 0.5*delta_e*w)` with
/// `w = d_s + d_e`. A swapped-order result clamps to a zero-length
/// interval at its midpoint — refinement deltas are unconstrained model
/// outputs, not errors.
pub fn refine(
    location: f64,
    start_offset: f64,
    end_offset: f64,
    start_delta: f64,
    end_delta: f64,
) -> Interval {
    let width = start_offset + end_offset;
    assert!(width >= 0.0, "coarse offsets must be nonnegative");
    let start = location - start_offset - 0.5 * start_delta * width;
    let end = location + end_offset + 0.5 * end_delta * width;
    if start <= end {
        Interval::new(start, end)
    } else {
        Interval::point(0.5 * (start + end))
    }
}

/// Average the coarse and refined class-score vectors and quality scores.
pub fn fuse_scores(
    coarse_scores: &[f64],
    refined_scores: &[f64],
    coarse_quality: f64,
    refined_quality: f64,
) -> (Vec<f64>, f64) {
    assert_eq!(
        coarse_scores.len(),
        refined_scores.len(),
        "class score vectors must have matching lengths"
    );
    let scores = coarse_scores
        .iter()
        .zip(refined_scores)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    (scores, 0.5 * (coarse_quality + refined_quality))
}

/// Fractional anchor-scale index for a proposal of duration `d`:
/// `r = d / tau` inverted through the evenly spaced scales, clamped to
/// `[0, I-1]`.
pub fn scale_index(duration: f64, tau: f64, scale_set: &AnchorScaleSet) -> f64 {
    assert!(duration >= 0.0, "duration must be nonnegative");
    assert!(tau > 0.0, "tau must be positive");
    let r = duration / tau;
    let spacing = scale_set.spacing();
    if spacing == 0.0 {
        return 0.0;
    }
    let idx = (r - scale_set.r_min()) / spacing;
    idx.clamp(0.0, (scale_set.count() - 1) as f64)
}

/// Bilinear lookup of `map` at real coordinates `(t, idx)` with edge
/// clamping on both axes. The result never leaves the range of the map.
pub fn boundary_quality_lookup(map: &Array2<f64>, t: f64, idx: f64) -> f64 {
    let (t_len, i_len) = map.dim();
    let tc = t.clamp(0.0, (t_len - 1) as f64);
    let ic = idx.clamp(0.0, (i_len - 1) as f64);
    let t0 = tc.floor() as usize;
    let t1 = tc.ceil() as usize;
    let i0 = ic.floor() as usize;
    let i1 = ic.ceil() as usize;
    let wt = tc - t0 as f64;
    let wi = ic - i0 as f64;
    (1.0 - wt) * (1.0 - wi) * map[[t0, i0]]
        + (1.0 - wt) * wi * map[[t0, i1]]
        + wt * (1.0 - wi) * map[[t1, i0]]
        + wt * wi * map[[t1, i1]]
}

/// Final detection score: `y * q * sqrt(p_s * p_e)`.
pub fn final_score(class_score: f64, quality: f64, start_quality: f64, end_quality: f64) -> Result<f64> {
    for (name, v) in [
        ("class score", class_score),
        ("quality", quality),
        ("start quality", start_quality),
        ("end quality", end_quality),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    Ok(class_score * quality * (start_quality * end_quality).sqrt())
}

/// Deterministic ordering for equal scores: earlier start, then earlier
/// end, then smaller label.
fn by_score_desc(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.start.total_cmp(&b.interval.start))
        .then(a.interval.end.total_cmp(&b.interval.end))
        .then(a.label.cmp(&b.label))
}

/// Soft non-maximum suppression with linear decay, class-agnostic, with an
/// overlap threshold in `(0, 1)`.
pub fn soft_nms(dets: Vec<Detection>, threshold: f64, score_floor: f64) -> Vec<Detection> {
    let cfg = SoftNmsConfig::linear(threshold, score_floor).expect("invalid soft-nms settings");
    soft_nms_with(dets, &cfg)
}

/// Soft-NMS with an explicit decay/per-class configuration.
///
/// Greedy: repeatedly keep the highest-scored remaining detection and decay
/// the scores of detections overlapping it; anything falling below the
/// score floor is dropped. Scores never increase. Output is ordered by
/// selection (score descending).
pub fn soft_nms_with(dets: Vec<Detection>, cfg: &SoftNmsConfig) -> Vec<Detection> {
    if !cfg.per_class {
        return soft_nms_group(dets, cfg);
    }
    let mut by_class: std::collections::BTreeMap<usize, Vec<Detection>> = Default::default();
    for d in dets {
        by_class.entry(d.label).or_default().push(d);
    }
    let mut out = Vec::new();
    for (_, group) in by_class {
        out.extend(soft_nms_group(group, cfg));
    }
    out.sort_by(by_score_desc);
    out
}

fn soft_nms_group(mut remaining: Vec<Detection>, cfg: &SoftNmsConfig) -> Vec<Detection> {
    let mut kept = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let best = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| by_score_desc(a, b))
            .map(|(i, _)| i)
            .unwrap();
        let selected = remaining.swap_remove(best);
        remaining.retain_mut(|other| {
            let overlap = crate::interval::tiou(&selected.interval, &other.interval);
            let factor = match cfg.decay {
                NmsDecay::Linear { threshold } => {
                    if overlap > threshold {
                        1.0 - overlap
                    } else {
                        1.0
                    }
                }
                NmsDecay::Gaussian { sigma } => {
                    if overlap > 0.0 {
                        (-overlap * overlap / sigma).exp()
                    } else {
                        1.0
                    }
                }
            };
            other.score *= factor;
            other.score >= cfg.score_floor
        });
        kept.push(selected);
    }
    kept
}

/// Full inference composition: decode, refine, fuse, look up boundary
/// quality at the scale index of the refined duration, score, and suppress.
/// Deterministic given its inputs; empty input yields empty output.
pub fn run_pipeline(
    preds: &[PredictionPair],
    maps: &QualityMapPair,
    pyramid: &PyramidConfig,
    cfg: &InferenceConfig,
) -> Result<Vec<Detection>> {
    let mut detections = Vec::with_capacity(preds.len());
    for pair in preds {
        let coarse = &pair.coarse;
        let refined = &pair.refined;
        if coarse.start_offset < 0.0 || coarse.end_offset < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coarse offsets must be nonnegative, got ({}, {})",
                coarse.start_offset, coarse.end_offset
            )));
        }
        let stride = pyramid.stride(coarse.level)?;
        let grid_interval = refine(
            coarse.location,
            coarse.start_offset,
            coarse.end_offset,
            refined.start_delta,
            refined.end_delta,
        );
        let interval = Interval::new(grid_interval.start * stride, grid_interval.end * stride);

        let (scores, quality) =
            fuse_scores(&coarse.class_scores, &refined.class_scores, coarse.quality, refined.quality);
        let label = argmax(&scores);

        let map_start = interval.start / cfg.map_stride;
        let map_end = interval.end / cfg.map_stride;
        let idx = scale_index(map_end - map_start, cfg.tau, &cfg.scale_set);
        let start_quality = boundary_quality_lookup(&maps.start, map_start, idx);
        let end_quality = boundary_quality_lookup(&maps.end, map_end, idx);

        let score = final_score(scores[label], quality, start_quality, end_quality)?;
        detections.push(Detection {
            interval,
            label,
            class_score: scores[label],
            quality,
            start_quality,
            end_quality,
            score,
        });
    }
    Ok(soft_nms_with(detections, &cfg.nms))
}
