//! Ground-truth boundary quality maps and the L2 map regression loss.
//!
//! A boundary quality map scores every (timestep, anchor scale) pair by the
//! temporal IoU between a centered anchor of that scale and the nearest
//! ground-truth boundary region of the same scale. For a single boundary at
//! distance `d`, the entry has the closed form `max(0, (r - d) / (r + d))`,
//! which the tests use as an independent oracle.
//!
//! Anchors and boundary regions are deliberately *not* clipped to `[0, T]`:
//! the overlap is well defined on the whole real line and clipping would
//! break the closed form.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::interval::{tiou, GroundTruthAction, Interval};

/// `count` evenly spaced anchor scales from `r_min` to `r_max` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorScaleSet {
    r_min: f64,
    r_max: f64,
    scales: Vec<f64>,
}

impl AnchorScaleSet {
    /// Multi-scale set with `count >= 2` scales. Requires `0 < r_min < r_max`.
    pub fn new(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(r_min.is_finite() && r_max.is_finite()) || r_min <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "anchor scales must be finite and positive, got [{r_min}, {r_max}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidConfig(format!(
                "multi-scale set needs at least 2 scales, got {count}; use AnchorScaleSet::single for one"
            )));
        }
        if r_min >= r_max {
            return Err(Error::InvalidConfig(format!(
                "r_min {r_min} must be strictly less than r_max {r_max}"
            )));
        }
        let spacing = (r_max - r_min) / (count - 1) as f64;
        let scales = (0..count).map(|i| r_min + spacing * i as f64).collect();
        Ok(Self { r_min, r_max, scales })
    }

    /// Degenerate single-scale set.
    pub fn single(r: f64) -> Result<Self> {
        if !r.is_finite() || r <= 0.0 {
            return Err(Error::InvalidConfig(format!("anchor scale must be positive, got {r}")));
        }
        Ok(Self { r_min: r, r_max: r, scales: vec![r] })
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn count(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Gap between consecutive scales; 0 for a single-scale set.
    pub fn spacing(&self) -> f64 {
        if self.scales.len() < 2 {
            0.0
        } else {
            (self.r_max - self.r_min) / (self.scales.len() - 1) as f64
        }
    }
}

/// Which boundary of an action an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    Start,
    End,
}

/// Centered anchor of length `r` at timestep `t`. Panics if `r <= 0`.
pub fn anchor_interval(t: f64, r: f64) -> Interval {
    assert!(r > 0.0, "anchor scale must be positive, got {r}");
    Interval::new(t - 0.5 * r, t + 0.5 * r)
}

fn boundary_point(action: &GroundTruthAction, side: BoundarySide) -> f64 {
    match side {
        BoundarySide::Start => action.interval.start,
        BoundarySide::End => action.interval.end,
    }
}

/// Quality of one boundary side at a single anchor scale, over the timestep
/// grid `0..len`. Entry `t` is the max over ground truths of the tIoU
/// between the anchor at `t` and that boundary's region, both of length `r`.
/// An empty ground-truth list yields all zeros.
pub fn single_scale_quality(
    gt: &[GroundTruthAction],
    len: usize,
    r: f64,
    side: BoundarySide,
) -> Vec<f64> {
    assert!(r > 0.0, "anchor scale must be positive, got {r}");
    let regions: Vec<Interval> = gt
        .iter()
        .map(|action| anchor_interval(boundary_point(action, side), r))
        .collect();
    (0..len)
        .map(|t| {
            let anchor = anchor_interval(t as f64, r);
            regions
                .iter()
                .map(|region| tiou(&anchor, region))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Start and end quality maps over timesteps × anchor scales.
///
/// Predictions and labels share this type; entries are always in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityMapPair {
    pub start: Array2<f64>,
    pub end: Array2<f64>,
    pub scale_set: AnchorScaleSet,
}

impl QualityMapPair {
    pub fn new(start: Array2<f64>, end: Array2<f64>, scale_set: AnchorScaleSet) -> Result<Self> {
        if start.dim() != end.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", start.dim()),
                got: format!("{:?}", end.dim()),
            });
        }
        if start.dim().1 != scale_set.count() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} scale columns", scale_set.count()),
                got: format!("{}", start.dim().1),
            });
        }
        Ok(Self { start, end, scale_set })
    }

    /// (timesteps, scales)
    pub fn dims(&self) -> (usize, usize) {
        self.start.dim()
    }
}

/// Label maps for every scale in the set: column `i` of each map is
/// [`single_scale_quality`] at scale `scales[i]`.
pub fn multi_scale_quality_maps(
    gt: &[GroundTruthAction],
    len: usize,
    scale_set: &AnchorScaleSet,
) -> QualityMapPair {
    let cols = scale_set.count();
    let mut start = Array2::zeros((len, cols));
    let mut end = Array2::zeros((len, cols));
    for (i, &r) in scale_set.scales().iter().enumerate() {
        for (t, v) in single_scale_quality(gt, len, r, BoundarySide::Start).into_iter().enumerate() {
            start[[t, i]] = v;
        }
        for (t, v) in single_scale_quality(gt, len, r, BoundarySide::End).into_iter().enumerate() {
            end[[t, i]] = v;
        }
    }
    QualityMapPair { start, end, scale_set: scale_set.clone() }
}

/// Indices of strictly positive label entries, per side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositiveMask {
    pub start_positives: Vec<(usize, usize)>,
    pub end_positives: Vec<(usize, usize)>,
}

impl PositiveMask {
    pub fn from_labels(labels: &QualityMapPair) -> Self {
        let collect = |map: &Array2<f64>| {
            map.indexed_iter()
                .filter(|(_, &v)| v > 0.0)
                .map(|((t, i), _)| (t, i))
                .collect()
        };
        Self {
            start_positives: collect(&labels.start),
            end_positives: collect(&labels.end),
        }
    }
}

/// Value and per-side gradients of the map regression loss.
///
/// `value = 0.5 * (start_loss + end_loss)`, where each side averages the
/// squared prediction error over its positive set (an empty positive set
/// contributes 0 — untrimmed clips without actions are legal). The gradient
/// arrays differentiate the *per-side* losses with respect to the
/// predictions, i.e. `2 * (pred - label) / |positives|` at positive entries
/// and 0 elsewhere; the gradient of `value` itself is half of that.
#[derive(Debug, Clone)]
pub struct BemLoss {
    pub value: f64,
    pub start_loss: f64,
    pub end_loss: f64,
    pub grad_start: Array2<f64>,
    pub grad_end: Array2<f64>,
}

pub fn bem_loss(pred: &QualityMapPair, label: &QualityMapPair, mask: &PositiveMask) -> Result<BemLoss> {
    if pred.dims() != label.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", label.dims()),
            got: format!("{:?}", pred.dims()),
        });
    }
    let side = |p: &Array2<f64>, o: &Array2<f64>, positives: &[(usize, usize)]| {
        let mut grad = Array2::zeros(p.dim());
        if positives.is_empty() {
            return (0.0, grad);
        }
        let n = positives.len() as f64;
        let mut sum = 0.0;
        for &(t, i) in positives {
            let diff = p[[t, i]] - o[[t, i]];
            sum += diff * diff;
            grad[[t, i]] = 2.0 * diff / n;
        }
        (sum / n, grad)
    };
    let (start_loss, grad_start) = side(&pred.start, &label.start, &mask.start_positives);
    let (end_loss, grad_end) = side(&pred.end, &label.end, &mask.end_positives);
    Ok(BemLoss {
        value: 0.5 * (start_loss + end_loss),
        start_loss,
        end_loss,
        grad_start,
        grad_end,
    })
}
