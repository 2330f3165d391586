//! Real-valued temporal intervals and temporal IoU.
//!
//! Intervals live on a continuous timestep axis. Grid positions are integer
//! timesteps 0..T-1, but interval endpoints (action boundaries, anchors,
//! decoded proposals) are arbitrary finite reals.

/// A `[start, end)` segment in real-valued timestep units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    /// Create an interval. Panics if `start > end` or either endpoint is
    /// not finite; zero-length intervals are allowed.
    pub fn new(start: f64, end: f64) -> Self {
        assert!(start.is_finite() && end.is_finite(), "interval endpoints must be finite");
        assert!(start <= end, "interval start {start} exceeds end {end}");
        Self { start, end }
    }

    /// Zero-length interval at `t`.
    pub fn point(t: f64) -> Self {
        Self::new(t, t)
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0.0
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    /// Length of the overlap with `other` (0 when disjoint).
    pub fn intersection_len(&self, other: &Interval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.start.min(other.start), self.end.max(other.end))
    }
}

/// Temporal IoU between two intervals: `|a ∩ b| / |a ∪ b|`.
///
/// Returns 0 when the union has zero length (both intervals degenerate),
/// so the result is always a well-defined value in `[0, 1]`.
pub fn tiou(a: &Interval, b: &Interval) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A ground-truth action instance: an interval plus its class id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthAction {
    pub interval: Interval,
    pub label: usize,
}

impl GroundTruthAction {
    pub fn new(interval: Interval, label: usize) -> Self {
        Self { interval, label }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tiou_partial_overlap() {
        let a = Interval::new(0.0, 4.0);
        let b = Interval::new(2.0, 6.0);
        assert!((tiou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tiou_identity() {
        let a = Interval::new(0.0, 4.0);
        assert_eq!(tiou(&a, &a), 1.0);
    }

    #[test]
    fn tiou_disjoint() {
        let a = Interval::new(0.0, 1.0);
        let b = Interval::new(2.0, 3.0);
        assert_eq!(tiou(&a, &b), 0.0);
    }

    #[test]
    fn tiou_zero_union() {
        let a = Interval::point(3.0);
        let b = Interval::point(3.0);
        assert_eq!(tiou(&a, &b), 0.0);
    }

    #[test]
    #[should_panic(expected = "exceeds end")]
    fn inverted_interval_rejected() {
        Interval::new(2.0, 1.0);
    }

    proptest! {
        #[test]
        fn tiou_bounded_and_symmetric(
            s1 in -50.0..50.0f64, l1 in 0.0..20.0f64,
            s2 in -50.0..50.0f64, l2 in 0.0..20.0f64,
        ) {
            let a = Interval::new(s1, s1 + l1);
            let b = Interval::new(s2, s2 + l2);
            let v = tiou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((v - tiou(&b, &a)).abs() < 1e-15);
        }
    }
}
