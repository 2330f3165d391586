//! Training losses with analytic gradients.
//!
//! Each loss returns its value together with the gradient with respect to
//! the prediction argument, so the gradcheck harness can verify every
//! closed-form derivative against central finite differences. No optimizer
//! lives here; the losses are the contract.

use crate::interval::{tiou, Interval};

/// Clamp applied to every probability before it reaches a logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

/// A scalar loss and its gradient, aligned with the prediction argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Weights of the combined objective: `eta` balances the map loss against
/// the region loss, `lambda` scales classification, `gamma` scales quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { eta: 5.0, lambda: 1.0, gamma: 0.5 }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Binary-per-class focal loss over a probability vector.
///
/// The target class (if any) contributes `-alpha * (1-p)^g * ln(p)`; every
/// other class contributes `-(1-alpha) * p^g * ln(1-p)`. `target = None`
/// treats all classes as background. Probabilities are clamped away from
/// 0 and 1 before taking logs; the gradient is with respect to the clamped
/// probabilities.
pub fn focal_loss(probs: &[f64], target: Option<usize>, alpha: f64, gamma: f64) -> LossResult {
    if let Some(t) = target {
        assert!(t < probs.len(), "target class {t} out of range for {} classes", probs.len());
    }
    let mut value = 0.0;
    let mut gradient = vec![0.0; probs.len()];
    for (j, &raw) in probs.iter().enumerate() {
        let p = clamp_prob(raw);
        if Some(j) == target {
            let one_minus = 1.0 - p;
            value += -alpha * one_minus.powf(gamma) * p.ln();
            gradient[j] = alpha * gamma * one_minus.powf(gamma - 1.0) * p.ln()
                - alpha * one_minus.powf(gamma) / p;
        } else {
            let one_minus = 1.0 - p;
            value += -(1.0 - alpha) * p.powf(gamma) * one_minus.ln();
            gradient[j] = -(1.0 - alpha) * gamma * p.powf(gamma - 1.0) * one_minus.ln()
                + (1.0 - alpha) * p.powf(gamma) / one_minus;
        }
    }
    LossResult { value, gradient }
}

/// One-dimensional generalized-IoU loss: `1 - (IoU - (|hull| - |union|)/|hull|)`.
///
/// Ranges over `[0, 2]` and is 0 exactly for identical intervals. The
/// gradient is with respect to `(pred.start, pred.end)`; a zero-length hull
/// falls back to `1 - IoU` with zero gradient.
pub fn giou_loss_1d(pred: &Interval, gt: &Interval) -> LossResult {
    let inter = pred.intersection_len(gt);
    let union = pred.len() + gt.len() - inter;
    let hull = pred.hull(gt).len();

    let iou = if union > 0.0 { inter / union } else { 0.0 };

    // Piecewise-linear building blocks of the loss, differentiated by case.
    let (d_inter_da, d_inter_db) = if inter > 0.0 {
        (
            if pred.start > gt.start { -1.0 } else { 0.0 },
            if pred.end < gt.end { 1.0 } else { 0.0 },
        )
    } else {
        (0.0, 0.0)
    };
    let d_union_da = -1.0 - d_inter_da;
    let d_union_db = 1.0 - d_inter_db;
    let d_hull_da = if pred.start < gt.start { -1.0 } else { 0.0 };
    let d_hull_db = if pred.end > gt.end { 1.0 } else { 0.0 };

    let (value, grad) = if hull > 0.0 {
        let penalty = (hull - union) / hull;
        let value = 1.0 - iou + penalty;
        let d_iou = |d_inter: f64, d_union: f64| {
            if union > 0.0 {
                (d_inter * union - inter * d_union) / (union * union)
            } else {
                0.0
            }
        };
        // penalty = 1 - union/hull.
        let d_pen = |d_union: f64, d_hull: f64| -(d_union * hull - union * d_hull) / (hull * hull);
        let ga = -d_iou(d_inter_da, d_union_da) + d_pen(d_union_da, d_hull_da);
        let gb = -d_iou(d_inter_db, d_union_db) + d_pen(d_union_db, d_hull_db);
        (value, vec![ga, gb])
    } else {
        (1.0 - iou, vec![0.0, 0.0])
    };
    LossResult { value, gradient: grad }
}

/// Normalized L1 refinement loss.
///
/// The target refinement is `2 * (gt_offset - coarse_offset) / coarse_len`
/// per side; the loss sums `|pred_delta - target_delta|` over start and
/// end, with subgradient `sign(pred - target)` (0 at the kink). Returns
/// `None` when `coarse_len` is 0, flagging a sample that contributes
/// nothing.
pub fn l1_refine_loss(
    pred_deltas: (f64, f64),
    gt_offsets: (f64, f64),
    coarse_offsets: (f64, f64),
    coarse_len: f64,
) -> Option<LossResult> {
    assert!(coarse_len >= 0.0, "coarse proposal length must be nonnegative");
    if coarse_len == 0.0 {
        return None;
    }
    let targets = [
        2.0 * (gt_offsets.0 - coarse_offsets.0) / coarse_len,
        2.0 * (gt_offsets.1 - coarse_offsets.1) / coarse_len,
    ];
    let preds = [pred_deltas.0, pred_deltas.1];
    let mut value = 0.0;
    let mut gradient = vec![0.0; 2];
    for k in 0..2 {
        let diff = preds[k] - targets[k];
        value += diff.abs();
        gradient[k] = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    Some(LossResult { value, gradient })
}

/// Binary cross entropy of a predicted quality against the proposal's true
/// tIoU. The gradient (one entry) is with respect to the clamped quality.
pub fn quality_bce_loss(quality: f64, proposal: &Interval, gt: &Interval) -> LossResult {
    let target = tiou(proposal, gt);
    let q = clamp_prob(quality);
    let value = -(target * q.ln() + (1.0 - target) * (1.0 - q).ln());
    let gradient = vec![-target / q + (1.0 - target) / (1.0 - q)];
    LossResult { value, gradient }
}

/// Per-positive loss terms for the region objective: localization,
/// classification, and quality for both the coarse and refined stages.
#[derive(Debug, Clone, Copy, Default)]
pub struct RemSample {
    pub coarse_loc: f64,
    pub coarse_cls: f64,
    pub coarse_quality: f64,
    pub refined_loc: f64,
    pub refined_cls: f64,
    pub refined_quality: f64,
}

/// Combined region loss:
/// `loc + lambda*cls + gamma*q` summed over the coarse and refined stages,
/// each term averaged over the positive set. Classification terms may also
/// average in focal losses from sampled background locations
/// (`background_cls` holds their (coarse, refined) pairs); all other terms
/// normalize over positives only. Empty positives yield 0.
pub fn rem_loss(positives: &[RemSample], background_cls: &[(f64, f64)], weights: &LossWeights) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let n_pos = positives.len() as f64;
    let n_cls = (positives.len() + background_cls.len()) as f64;

    let mut loc = (0.0, 0.0);
    let mut cls = (0.0, 0.0);
    let mut quality = (0.0, 0.0);
    for s in positives {
        loc.0 += s.coarse_loc;
        loc.1 += s.refined_loc;
        cls.0 += s.coarse_cls;
        cls.1 += s.refined_cls;
        quality.0 += s.coarse_quality;
        quality.1 += s.refined_quality;
    }
    for &(coarse, refined) in background_cls {
        cls.0 += coarse;
        cls.1 += refined;
    }

    (loc.0 + loc.1) / n_pos
        + weights.lambda * (cls.0 + cls.1) / n_cls
        + weights.gamma * (quality.0 + quality.1) / n_pos
}

/// Total objective: `rem + eta * bem`.
pub fn total_loss(rem: f64, bem: f64, eta: f64) -> f64 {
    rem + eta * bem
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite difference of `f` at `x` along coordinate `k`.
    pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[k] += h;
        minus[k] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        let denom = a.abs().max(b.abs()).max(1e-8);
        (a - b).abs() / denom
    }

    #[test]
    fn focal_loss_vanishes_for_confident_positive() {
        let r = focal_loss(&[1.0 - 1e-9], Some(0), 0.25, 2.0);
        assert!(r.value < 1e-12);
    }

    #[test]
    fn focal_loss_positive_half_probability() {
        let r = focal_loss(&[0.5], Some(0), 0.25, 2.0);
        let expected = 0.25 * 0.25 * 2.0f64.ln();
        assert!((r.value - expected).abs() < 1e-12);
        assert!((expected - 0.0433).abs() < 1e-4);
    }

    #[test]
    fn focal_loss_alpha_zero_ignores_positives() {
        for p in [0.1, 0.5, 0.9] {
            let r = focal_loss(&[p], Some(0), 0.0, 2.0);
            assert_eq!(r.value, 0.0);
        }
    }

    #[test]
    fn focal_reduces_to_cross_entropy() {
        let probs = [0.3, 0.6, 0.1];
        let r = focal_loss(&probs, Some(1), 1.0, 0.0);
        let ce = -(0.6f64.ln());
        assert!((r.value - ce).abs() < 1e-9);
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream_rng(17, 0);
        for _ in 0..100 {
            let n = 1 + crate::rng::uniform_index(&mut rng, 4);
            let probs: Vec<f64> =
                (0..n).map(|_| crate::rng::uniform_range(&mut rng, 0.05, 0.95)).collect();
            let target = if crate::rng::uniform(&mut rng) < 0.3 {
                None
            } else {
                Some(crate::rng::uniform_index(&mut rng, n))
            };
            let analytic = focal_loss(&probs, target, 0.25, 2.0);
            for k in 0..n {
                let fd = central_diff(
                    |x| focal_loss(x, target, 0.25, 2.0).value,
                    &probs,
                    k,
                    1e-5,
                );
                assert!(
                    rel_err(analytic.gradient[k], fd) < 1e-4,
                    "focal gradient mismatch: {} vs {}",
                    analytic.gradient[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn giou_identical_intervals() {
        let a = Interval::new(3.0, 8.0);
        let r = giou_loss_1d(&a, &a);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn giou_disjoint_intervals() {
        let r = giou_loss_1d(&Interval::new(0.0, 1.0), &Interval::new(2.0, 3.0));
        assert!((r.value - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn giou_overlapping_intervals() {
        let r = giou_loss_1d(&Interval::new(0.0, 2.0), &Interval::new(1.0, 3.0));
        assert!((r.value - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn giou_zero_length_hull() {
        let r = giou_loss_1d(&Interval::point(2.0), &Interval::point(2.0));
        assert_eq!(r.value, 1.0);
        assert_eq!(r.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn giou_range_bounds() {
        let mut rng = crate::rng::stream_rng(23, 0);
        for _ in 0..500 {
            let a = crate::rng::uniform_range(&mut rng, -20.0, 20.0);
            let b = a + crate::rng::uniform_range(&mut rng, 0.0, 15.0);
            let c = crate::rng::uniform_range(&mut rng, -20.0, 20.0);
            let d = c + crate::rng::uniform_range(&mut rng, 0.0, 15.0);
            let r = giou_loss_1d(&Interval::new(a, b), &Interval::new(c, d));
            assert!((0.0..=2.0).contains(&r.value), "giou loss {} out of range", r.value);
        }
    }

    #[test]
    fn giou_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream_rng(29, 0);
        let mut checked = 0;
        while checked < 100 {
            let a = crate::rng::uniform_range(&mut rng, -10.0, 10.0);
            let b = a + crate::rng::uniform_range(&mut rng, 0.5, 12.0);
            let c = crate::rng::uniform_range(&mut rng, -10.0, 10.0);
            let d = c + crate::rng::uniform_range(&mut rng, 0.5, 12.0);
            // Stay away from the kinks where endpoints coincide.
            let gaps = [(a - c).abs(), (b - d).abs(), (b - c).abs(), (a - d).abs()];
            if gaps.iter().any(|&g| g < 0.1) {
                continue;
            }
            checked += 1;
            let gt = Interval::new(c, d);
            let analytic = giou_loss_1d(&Interval::new(a, b), &gt);
            let f = |x: &[f64]| giou_loss_1d(&Interval::new(x[0], x[1]), &gt).value;
            for k in 0..2 {
                let fd = central_diff(f, &[a, b], k, 1e-5);
                assert!(
                    rel_err(analytic.gradient[k], fd) < 1e-4,
                    "giou gradient mismatch at ({a},{b}) vs ({c},{d}): {} vs {}",
                    analytic.gradient[k],
                    fd
                );
            }
        }
    }

    #[test]
    fn l1_refine_exact_target_contributes_zero() {
        let r = l1_refine_loss((0.2, 0.0), (12.0, 10.0), (10.0, 10.0), 20.0).unwrap();
        // Start target is 2*(12-10)/20 = 0.2, matched exactly; end matched too.
        assert_eq!(r.value, 0.0);
        assert_eq!(r.gradient, vec![0.0, 0.0]);
    }

    #[test]
    fn l1_refine_missed_target() {
        let r = l1_refine_loss((0.0, 0.0), (12.0, 10.0), (10.0, 10.0), 20.0).unwrap();
        assert!((r.value - 0.2).abs() < 1e-12);
        assert_eq!(r.gradient[0], -1.0);
        assert_eq!(r.gradient[1], 0.0);
    }

    #[test]
    fn l1_refine_zero_length_skips() {
        assert!(l1_refine_loss((0.1, 0.1), (1.0, 1.0), (0.0, 0.0), 0.0).is_none());
    }

    #[test]
    fn l1_gradient_matches_finite_differences_away_from_kinks() {
        let mut rng = crate::rng::stream_rng(31, 0);
        let mut checked = 0;
        while checked < 100 {
            let coarse = (
                crate::rng::uniform_range(&mut rng, 1.0, 10.0),
                crate::rng::uniform_range(&mut rng, 1.0, 10.0),
            );
            let w = coarse.0 + coarse.1;
            let gt = (
                coarse.0 + crate::rng::uniform_range(&mut rng, -3.0, 3.0),
                coarse.1 + crate::rng::uniform_range(&mut rng, -3.0, 3.0),
            );
            let pred = (
                crate::rng::uniform_range(&mut rng, -1.0, 1.0),
                crate::rng::uniform_range(&mut rng, -1.0, 1.0),
            );
            let targets = (2.0 * (gt.0 - coarse.0) / w, 2.0 * (gt.1 - coarse.1) / w);
            if (pred.0 - targets.0).abs() < 0.05 || (pred.1 - targets.1).abs() < 0.05 {
                continue;
            }
            checked += 1;
            let analytic = l1_refine_loss(pred, gt, coarse, w).unwrap();
            let f = |x: &[f64]| l1_refine_loss((x[0], x[1]), gt, coarse, w).unwrap().value;
            for k in 0..2 {
                let fd = central_diff(f, &[pred.0, pred.1], k, 1e-5);
                assert!(rel_err(analytic.gradient[k], fd) < 1e-4);
            }
        }
    }

    #[test]
    fn bce_exact_confident_match_is_tiny() {
        let gt = Interval::new(0.0, 10.0);
        let r = quality_bce_loss(1.0, &gt, &gt);
        assert!(r.value <= 1e-6);
    }

    #[test]
    fn bce_half_half_is_ln_two() {
        let proposal = Interval::new(0.0, 2.0);
        let gt = Interval::new(1.0, 3.0);
        // tIoU is 1/3 here; build a 0.5-target case instead.
        let gt_half = Interval::new(0.0, 1.0);
        let prop_half = Interval::new(0.0, 2.0);
        assert!((tiou(&prop_half, &gt_half) - 0.5).abs() < 1e-12);
        let r = quality_bce_loss(0.5, &prop_half, &gt_half);
        assert!((r.value - 2.0f64.ln()).abs() < 1e-12);
        assert!(r.gradient[0].abs() < 1e-9);
        // And the 1/3 case is minimized at its own target.
        let at_target = quality_bce_loss(1.0 / 3.0, &proposal, &gt);
        assert!(at_target.gradient[0].abs() < 1e-6);
    }

    #[test]
    fn bce_minimized_at_target() {
        let proposal = Interval::new(0.0, 4.0);
        let gt = Interval::new(1.0, 5.0);
        let target = tiou(&proposal, &gt);
        let at_target = quality_bce_loss(target, &proposal, &gt).value;
        for q in [0.05, 0.2, 0.4, 0.8, 0.95] {
            assert!(quality_bce_loss(q, &proposal, &gt).value >= at_target - 1e-12);
        }
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = crate::rng::stream_rng(37, 0);
        for _ in 0..100 {
            let a = crate::rng::uniform_range(&mut rng, 0.0, 10.0);
            let proposal = Interval::new(a, a + crate::rng::uniform_range(&mut rng, 0.5, 8.0));
            let c = crate::rng::uniform_range(&mut rng, 0.0, 10.0);
            let gt = Interval::new(c, c + crate::rng::uniform_range(&mut rng, 0.5, 8.0));
            let q = crate::rng::uniform_range(&mut rng, 0.05, 0.95);
            let analytic = quality_bce_loss(q, &proposal, &gt);
            let fd = central_diff(|x| quality_bce_loss(x[0], &proposal, &gt).value, &[q], 0, 1e-5);
            assert!(rel_err(analytic.gradient[0], fd) < 1e-4);
        }
    }

    #[test]
    fn rem_loss_zero_terms() {
        let samples = vec![RemSample::default(); 3];
        assert_eq!(rem_loss(&samples, &[], &LossWeights::default()), 0.0);
        assert_eq!(rem_loss(&[], &[], &LossWeights::default()), 0.0);
    }

    #[test]
    fn rem_loss_weight_arithmetic() {
        let unit = RemSample {
            coarse_loc: 1.0,
            coarse_cls: 1.0,
            coarse_quality: 1.0,
            refined_loc: 1.0,
            refined_cls: 1.0,
            refined_quality: 1.0,
        };
        let w = LossWeights { eta: 5.0, lambda: 1.0, gamma: 0.5 };
        assert!((rem_loss(&[unit], &[], &w) - 5.0).abs() < 1e-12);
        let loc_only = LossWeights { eta: 5.0, lambda: 0.0, gamma: 0.0 };
        assert!((rem_loss(&[unit], &[], &loc_only) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rem_loss_background_normalization() {
        let unit = RemSample {
            coarse_cls: 1.0,
            refined_cls: 1.0,
            ..Default::default()
        };
        let w = LossWeights { eta: 5.0, lambda: 1.0, gamma: 0.0 };
        // One positive plus one background location: cls sums 3, divides by 2.
        let v = rem_loss(&[unit], &[(0.5, 0.5)], &w);
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weighted_sum() {
        assert_eq!(total_loss(1.0, 0.2, 5.0), 2.0);
        assert_eq!(total_loss(1.0, 0.2, 0.0), 1.0);
        assert_eq!(total_loss(0.0, 0.0, 5.0), 0.0);
    }
}
