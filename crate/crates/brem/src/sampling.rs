//! Interpolated anchor feature sampling and the boundary-map head.
//!
//! Anchors of every scale are sampled with `N` uniformly spaced points via
//! linear interpolation. The interpolation weights for the whole
//! timestep × scale grid form one sparse row-stochastic matrix, so the
//! gather amounts to a single matrix product with the feature sequence;
//! [`sample_anchor_features`] is that product and the tests pin its
//! equivalence to a per-point interpolation loop.
//!
//! Out-of-range sample positions clamp to the boundary row (replicate
//! padding), which keeps every weight row a convex combination.

use ndarray::{Array1, Array2, Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::quality::{AnchorScaleSet, QualityMapPair};
use crate::rng::{stream_rng, uniform_range};

/// A temporal feature sequence: `T × C` values at `stride` frames per
/// timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Array2<f64>,
    stride: f64,
}

impl FeatureSequence {
    pub fn new(data: Array2<f64>, stride: f64) -> Result<Self> {
        let (t, c) = data.dim();
        if t == 0 || c == 0 {
            return Err(Error::InvalidConfig(format!("feature sequence must be nonempty, got {t}x{c}")));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("feature sequence contains non-finite values".into()));
        }
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::InvalidConfig(format!("stride must be positive, got {stride}")));
        }
        Ok(Self { data, stride })
    }

    pub fn len(&self) -> usize {
        self.data.dim().0
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn stride(&self) -> f64 {
        self.stride
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
}

/// Interpolation weights for one real-valued position on a grid of `len`
/// rows: `(lo, hi, w)` with value `(1-w)*row[lo] + w*row[hi]`. Positions
/// outside `[0, len-1]` clamp to the nearest row.
fn interp_weights(t: f64, len: usize) -> (usize, usize, f64) {
    let max = (len - 1) as f64;
    let tc = t.clamp(0.0, max);
    let lo = tc.floor() as usize;
    let hi = tc.ceil() as usize;
    (lo, hi, tc - lo as f64)
}

/// Linearly interpolated feature row at real position `t`.
pub fn sample_point(f: &FeatureSequence, t: f64) -> Array1<f64> {
    let (lo, hi, w) = interp_weights(t, f.len());
    let a = f.data.row(lo);
    let b = f.data.row(hi);
    Array1::from_iter(a.iter().zip(b.iter()).map(|(x, y)| (1.0 - w) * x + w * y))
}

/// Upsample by an integer factor: output row `j` samples position
/// `j / factor`, so sample 0 aligns with row 0 and trailing positions
/// replicate the last row. The stride shrinks by the same factor.
pub fn temporal_upsample(f: &FeatureSequence, factor: usize) -> FeatureSequence {
    assert!(factor >= 1, "upsampling factor must be at least 1");
    if factor == 1 {
        return f.clone();
    }
    let out_len = f.len() * factor;
    let mut data = Array2::zeros((out_len, f.channels()));
    for j in 0..out_len {
        let row = sample_point(f, j as f64 / factor as f64);
        data.row_mut(j).assign(&row);
    }
    FeatureSequence { data, stride: f.stride / factor as f64 }
}

/// Sparse `(T·I·N) × T` interpolation-weight matrix with at most two
/// nonzeros per row. Rows are ordered timestep-major, then scale, then
/// sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMatrix {
    rows: Vec<(usize, usize, f64)>,
    source_len: usize,
    scale_set: AnchorScaleSet,
    samples: usize,
}

impl SamplingMatrix {
    /// (rows, columns) of the equivalent dense matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.source_len)
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn scale_set(&self) -> &AnchorScaleSet {
        &self.scale_set
    }

    /// Nonzero `(column, weight)` entries of row `row`.
    pub fn row_entries(&self, row: usize) -> Vec<(usize, f64)> {
        let (lo, hi, w) = self.rows[row];
        if lo == hi {
            vec![(lo, 1.0)]
        } else {
            vec![(lo, 1.0 - w), (hi, w)]
        }
    }

    /// Materialize the dense matrix.
    pub fn to_dense(&self) -> Array2<f64> {
        let (n_rows, n_cols) = self.shape();
        let mut dense = Array2::zeros((n_rows, n_cols));
        for r in 0..n_rows {
            for (c, w) in self.row_entries(r) {
                dense[[r, c]] += w;
            }
        }
        dense
    }
}

/// Sample position for anchor `(t, r)` and sample index `k`:
/// `t - r/2 + k * r / (N - 1)`.
pub fn sample_positions(t: f64, r: f64, samples: usize) -> impl Iterator<Item = f64> {
    let step = r / (samples - 1) as f64;
    let first = t - 0.5 * r;
    (0..samples).map(move |k| first + step * k as f64)
}

/// Build the interpolation matrix for anchors at every integer timestep of
/// a length-`len` sequence, every scale in the set, `samples >= 2` points
/// per anchor.
pub fn build_sampling_matrix(
    len: usize,
    scale_set: &AnchorScaleSet,
    samples: usize,
) -> Result<SamplingMatrix> {
    if samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 samples per anchor, got {samples}"
        )));
    }
    if len == 0 {
        return Err(Error::InvalidConfig("cannot sample an empty sequence".into()));
    }
    let mut rows = Vec::with_capacity(len * scale_set.count() * samples);
    for t in 0..len {
        for &r in scale_set.scales() {
            for pos in sample_positions(t as f64, r, samples) {
                rows.push(interp_weights(pos, len));
            }
        }
    }
    Ok(SamplingMatrix { rows, source_len: len, scale_set: scale_set.clone(), samples })
}

/// Multi-scale anchor feature map, `T × I × N × C`.
pub type AnchorFeatureMap = Array4<f64>;

/// Gather anchor features as the matrix product of the sampling weights
/// with the feature rows, reshaped to `T × I × N × C`.
pub fn sample_anchor_features(f: &FeatureSequence, weights: &SamplingMatrix) -> Result<AnchorFeatureMap> {
    if weights.source_len != f.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("feature length {}", weights.source_len),
            got: format!("{}", f.len()),
        });
    }
    let (t_len, i_len, n_len, c_len) =
        (weights.source_len, weights.scale_set.count(), weights.samples, f.channels());
    let mut out = Array4::zeros((t_len, i_len, n_len, c_len));
    let mut row = 0usize;
    for t in 0..t_len {
        for i in 0..i_len {
            for n in 0..n_len {
                let (lo, hi, w) = weights.rows[row];
                row += 1;
                let a = f.data.row(lo);
                let b = f.data.row(hi);
                for c in 0..c_len {
                    out[[t, i, n, c]] = (1.0 - w) * a[c] + w * b[c];
                }
            }
        }
    }
    Ok(out)
}

/// How the `N` sampled features of an anchor collapse to one vector.
#[derive(Debug, Clone, PartialEq)]
pub enum ReduceMethod {
    /// Elementwise max over samples (default).
    Max,
    /// Elementwise mean over samples.
    Mean,
    /// Concatenate all `N` samples and project with a `C × (N·C)` matrix.
    Fc { projection: Array2<f64> },
    /// Concatenate mean and max and project with a `C × 2C` matrix.
    MeanAndMax { projection: Array2<f64> },
}

/// Reduce the sample axis of an anchor feature map to `T × I × C`.
pub fn reduce_anchor_features(map: &AnchorFeatureMap, method: &ReduceMethod) -> Result<Array3<f64>> {
    let (t_len, i_len, n_len, c_len) = map.dim();
    match method {
        ReduceMethod::Max => Ok(map.map_axis(Axis(2), |lane| {
            lane.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        })),
        ReduceMethod::Mean => Ok(map.map_axis(Axis(2), |lane| {
            lane.iter().sum::<f64>() / lane.len() as f64
        })),
        ReduceMethod::Fc { projection } => {
            let expected = (c_len, n_len * c_len);
            if projection.dim() != expected {
                return Err(Error::ShapeMismatch {
                    expected: format!("projection {:?}", expected),
                    got: format!("{:?}", projection.dim()),
                });
            }
            let mut out = Array3::zeros((t_len, i_len, c_len));
            for t in 0..t_len {
                for i in 0..i_len {
                    // Concatenation order is sample-major: [x_0; x_1; ...].
                    for c_out in 0..c_len {
                        let mut acc = 0.0;
                        for n in 0..n_len {
                            for c in 0..c_len {
                                acc += projection[[c_out, n * c_len + c]] * map[[t, i, n, c]];
                            }
                        }
                        out[[t, i, c_out]] = acc;
                    }
                }
            }
            Ok(out)
        }
        ReduceMethod::MeanAndMax { projection } => {
            let expected = (c_len, 2 * c_len);
            if projection.dim() != expected {
                return Err(Error::ShapeMismatch {
                    expected: format!("projection {:?}", expected),
                    got: format!("{:?}", projection.dim()),
                });
            }
            let mean = reduce_anchor_features(map, &ReduceMethod::Mean)?;
            let max = reduce_anchor_features(map, &ReduceMethod::Max)?;
            let mut out = Array3::zeros((t_len, i_len, c_len));
            for t in 0..t_len {
                for i in 0..i_len {
                    for c_out in 0..c_len {
                        let mut acc = 0.0;
                        for c in 0..c_len {
                            acc += projection[[c_out, c]] * mean[[t, i, c]];
                            acc += projection[[c_out, c_len + c]] * max[[t, i, c]];
                        }
                        out[[t, i, c_out]] = acc;
                    }
                }
            }
            Ok(out)
        }
    }
}

/// One linear score head: `weight · x + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Array1<f64>,
    pub bias: f64,
}

/// Parameters of the boundary-map head: a `C × C` projection applied after
/// max pooling, plus one linear head per boundary side.
#[derive(Debug, Clone, PartialEq)]
pub struct BemHeadParams {
    pub reduction: Array2<f64>,
    pub start: HeadParams,
    pub end: HeadParams,
}

impl BemHeadParams {
    /// Uniform random parameters in `±1/sqrt(C)`, reproducible from the seed.
    pub fn seeded(channels: usize, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0xB311);
        let bound = 1.0 / (channels as f64).sqrt();
        let mut draw = || uniform_range(&mut rng, -bound, bound);
        let reduction = Array2::from_shape_fn((channels, channels), |_| draw());
        let start = HeadParams {
            weight: Array1::from_shape_fn(channels, |_| draw()),
            bias: draw(),
        };
        let end = HeadParams {
            weight: Array1::from_shape_fn(channels, |_| draw()),
            bias: draw(),
        };
        Self { reduction, start, end }
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.reduction.dim() != (channels, channels) {
            return Err(Error::ShapeMismatch {
                expected: format!("reduction ({channels}, {channels})"),
                got: format!("{:?}", self.reduction.dim()),
            });
        }
        for (name, head) in [("start", &self.start), ("end", &self.end)] {
            if head.weight.len() != channels {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name} head weight length {channels}"),
                    got: format!("{}", head.weight.len()),
                });
            }
        }
        let finite = self.reduction.iter().all(|v| v.is_finite())
            && [&self.start, &self.end]
                .iter()
                .all(|h| h.bias.is_finite() && h.weight.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidConfig("head parameters contain non-finite values".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Predict boundary quality maps from a feature sequence:
/// sample → max-reduce → channel projection → per-side linear head →
/// logistic squashing. Outputs are `T × I` maps with entries in `(0, 1)`.
pub fn bem_forward(
    f: &FeatureSequence,
    scale_set: &AnchorScaleSet,
    samples: usize,
    params: &BemHeadParams,
) -> Result<QualityMapPair> {
    bem_forward_with_reduction(f, scale_set, samples, params, &ReduceMethod::Max)
}

/// [`bem_forward`] with a configurable sample-axis reduction, for reduction
/// ablations.
pub fn bem_forward_with_reduction(
    f: &FeatureSequence,
    scale_set: &AnchorScaleSet,
    samples: usize,
    params: &BemHeadParams,
    method: &ReduceMethod,
) -> Result<QualityMapPair> {
    params.validate(f.channels())?;
    let weights = build_sampling_matrix(f.len(), scale_set, samples)?;
    let anchor_map = sample_anchor_features(f, &weights)?;
    let pooled = reduce_anchor_features(&anchor_map, method)?;
    let (t_len, i_len, c_len) = pooled.dim();

    let mut start = Array2::zeros((t_len, i_len));
    let mut end = Array2::zeros((t_len, i_len));
    let mut projected = vec![0.0; c_len];
    for t in 0..t_len {
        for i in 0..i_len {
            for (c_out, slot) in projected.iter_mut().enumerate() {
                let mut acc = 0.0;
                for c in 0..c_len {
                    acc += params.reduction[[c_out, c]] * pooled[[t, i, c]];
                }
                *slot = acc;
            }
            let score = |head: &HeadParams| {
                let mut acc = head.bias;
                for (w, p) in head.weight.iter().zip(&projected) {
                    acc += w * p;
                }
                sigmoid(acc)
            };
            start[[t, i]] = score(&params.start);
            end[[t, i]] = score(&params.end);
        }
    }
    QualityMapPair::new(start, end, scale_set.clone())
}

/// Aligned feature for one proposal: sample at `t - start_offset`, `t`,
/// `t + end_offset`, concatenate, and fuse with a `C × 3C` matrix.
pub fn aligned_proposal_feature(
    f: &FeatureSequence,
    t: f64,
    start_offset: f64,
    end_offset: f64,
    fusion: &Array2<f64>,
) -> Result<Array1<f64>> {
    if start_offset < 0.0 || end_offset < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "proposal offsets must be nonnegative, got ({start_offset}, {end_offset})"
        )));
    }
    let c_len = f.channels();
    if fusion.dim() != (c_len, 3 * c_len) {
        return Err(Error::ShapeMismatch {
            expected: format!("fusion ({c_len}, {})", 3 * c_len),
            got: format!("{:?}", fusion.dim()),
        });
    }
    let points = [
        sample_point(f, t - start_offset),
        sample_point(f, t),
        sample_point(f, t + end_offset),
    ];
    let mut out = Array1::zeros(c_len);
    for c_out in 0..c_len {
        let mut acc = 0.0;
        for (block, point) in points.iter().enumerate() {
            for c in 0..c_len {
                acc += fusion[[c_out, block * c_len + c]] * point[c];
            }
        }
        out[c_out] = acc;
    }
    Ok(out)
}
