//! Detection matching, average precision, mAP tables, and the oracle
//! rescoring experiment.
//!
//! Matching follows the temporal-detection benchmark convention: within a
//! video and class, detections are taken in score order and each may claim
//! the unmatched ground truth with the highest tIoU at or above the
//! threshold. Score ties break by earlier start time, then lexicographic
//! video id, so tables are reproducible byte for byte.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::interval::{tiou, Interval};
use crate::io::{Corpus, DetectionRecord, DetectionSet};

/// How the precision envelope is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApInterpolation {
    /// Area under the full precision-recall step curve.
    AllPoint,
    /// Mean of interpolated precision at recalls 0, 0.1, ..., 1.0.
    ElevenPoint,
}

/// Thresholds and interpolation mode of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    thresholds: Vec<f64>,
    pub interpolation: ApInterpolation,
}

impl EvalProtocol {
    pub fn new(thresholds: Vec<f64>, interpolation: ApInterpolation) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::InvalidConfig("need at least one tIoU threshold".into()));
        }
        if thresholds.iter().any(|t| !(0.0 < *t && *t < 1.0)) {
            return Err(Error::InvalidConfig("tIoU thresholds must lie in (0, 1)".into()));
        }
        if thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("tIoU thresholds must be strictly increasing".into()));
        }
        Ok(Self { thresholds, interpolation })
    }

    /// Thresholds 0.3 through 0.7 in steps of 0.1, all-point interpolation.
    pub fn thumos() -> Self {
        Self {
            thresholds: vec![0.3, 0.4, 0.5, 0.6, 0.7],
            interpolation: ApInterpolation::AllPoint,
        }
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

/// A ranked detection outcome: its score and whether it claimed a ground
/// truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredLabel {
    pub score: f64,
    pub is_tp: bool,
}

/// One point of a precision-recall curve, tagged with the score that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub precision: f64,
    pub recall: f64,
    pub score: f64,
}

/// Precision-recall points in detection-rank order (recall non-decreasing).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
}

/// Match detections of one class in one video against its ground truths.
///
/// Detections are processed by descending score (ties by earlier start);
/// each claims the unmatched ground truth with the highest tIoU if that
/// tIoU reaches the threshold, one to one. Returns one label per detection,
/// aligned with the input order.
pub fn match_detections(
    dets: &[(Interval, f64)],
    gts: &[Interval],
    threshold: f64,
) -> Vec<ScoredLabel> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].1.total_cmp(&dets[a].1).then(dets[a].0.start.total_cmp(&dets[b].0.start))
    });
    let mut taken = vec![false; gts.len()];
    let mut out = vec![ScoredLabel { score: 0.0, is_tp: false }; dets.len()];
    for &d in &order {
        let (interval, score) = &dets[d];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let overlap = tiou(interval, gt);
            if overlap >= threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        let is_tp = if let Some((g, _)) = best {
            taken[g] = true;
            true
        } else {
            false
        };
        out[d] = ScoredLabel { score: *score, is_tp };
    }
    out
}

/// Precision-recall points of ranked labels. Labels are stably re-sorted
/// by descending score, so pre-tie-broken input keeps its order.
pub fn pr_curve(labels: &[ScoredLabel], num_gt: usize) -> PrCurve {
    let mut ranked: Vec<ScoredLabel> = labels.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for label in &ranked {
        if label.is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push(PrPoint {
            precision: tp as f64 / (tp + fp) as f64,
            recall: if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 },
            score: label.score,
        });
    }
    PrCurve { points }
}

/// Average precision of ranked detection labels against `num_gt` ground
/// truths. Zero when there are no ground truths or no detections.
pub fn average_precision(labels: &[ScoredLabel], num_gt: usize, interpolation: ApInterpolation) -> f64 {
    if num_gt == 0 || labels.is_empty() {
        return 0.0;
    }
    let curve = pr_curve(labels, num_gt);
    // Precision envelope from the right: env[k] = max precision at rank >= k.
    let n = curve.points.len();
    let mut envelope = vec![0.0; n];
    let mut running = 0.0f64;
    for k in (0..n).rev() {
        running = running.max(curve.points[k].precision);
        envelope[k] = running;
    }
    match interpolation {
        ApInterpolation::AllPoint => {
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (point, env) in curve.points.iter().zip(&envelope) {
                if point.recall > prev_recall {
                    ap += (point.recall - prev_recall) * env;
                    prev_recall = point.recall;
                }
            }
            ap
        }
        ApInterpolation::ElevenPoint => {
            let mut total = 0.0;
            for step in 0..=10 {
                let r = step as f64 / 10.0;
                let p = curve
                    .points
                    .iter()
                    .zip(&envelope)
                    .find(|(pt, _)| pt.recall >= r - 1e-12)
                    .map(|(_, &e)| e)
                    .unwrap_or(0.0);
                total += p;
            }
            total / 11.0
        }
    }
}

/// AP per (class, threshold), per-threshold mAP over classes with ground
/// truth, and the average mAP over thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct MapTable {
    pub thresholds: Vec<f64>,
    pub classes: Vec<String>,
    /// `ap[class][threshold]`
    pub ap: Vec<Vec<f64>>,
    pub per_threshold_map: Vec<f64>,
    pub average_map: f64,
}

impl MapTable {
    /// Mean AP over thresholds for one class row.
    pub fn class_average(&self, class_idx: usize) -> f64 {
        let row = &self.ap[class_idx];
        row.iter().sum::<f64>() / row.len() as f64
    }

    /// CSV rendering: one row per class, then the mAP row; the final
    /// column averages over thresholds.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("class");
        for t in &self.thresholds {
            out.push_str(&format!(",{t}"));
        }
        out.push_str(",avg\n");
        for (c, class) in self.classes.iter().enumerate() {
            out.push_str(class);
            for v in &self.ap[c] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", self.class_average(c)));
        }
        out.push_str("mAP");
        for v in &self.per_threshold_map {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", self.average_map));
        out
    }
}

struct PooledDetection<'a> {
    score: f64,
    start: f64,
    end: f64,
    video: &'a str,
    is_tp: bool,
}

/// Evaluate detections against a corpus. Classes without any ground truth
/// are excluded from the means; an annotation corpus with no actions at all
/// is an error.
pub fn map_table(dets: &DetectionSet, corpus: &Corpus, protocol: &EvalProtocol) -> Result<MapTable> {
    let mut classes: BTreeSet<&str> = BTreeSet::new();
    for video in corpus.videos.values() {
        for seg in &video.annotations {
            classes.insert(&seg.label);
        }
    }
    if classes.is_empty() {
        return Err(Error::InvalidConfig("annotation corpus contains no ground-truth actions".into()));
    }

    let mut ap = Vec::with_capacity(classes.len());
    for class in &classes {
        // Ground truths and detections for this class, grouped by video.
        let mut class_gts: BTreeMap<&str, Vec<Interval>> = BTreeMap::new();
        let mut num_gt = 0usize;
        for (id, video) in &corpus.videos {
            let gts: Vec<Interval> = video
                .annotations
                .iter()
                .filter(|seg| seg.label == *class)
                .map(|seg| Interval::new(seg.segment[0], seg.segment[1]))
                .collect();
            num_gt += gts.len();
            class_gts.insert(id, gts);
        }

        let mut row = Vec::with_capacity(protocol.thresholds.len());
        for &threshold in &protocol.thresholds {
            let mut pooled: Vec<PooledDetection> = Vec::new();
            for (id, records) in dets {
                let video_dets: Vec<(Interval, f64)> = records
                    .iter()
                    .filter(|r| r.label == *class)
                    .map(|r| (Interval::new(r.segment[0], r.segment[1]), r.score))
                    .collect();
                if video_dets.is_empty() {
                    continue;
                }
                let empty = Vec::new();
                let gts = class_gts.get(id.as_str()).unwrap_or(&empty);
                let labels = match_detections(&video_dets, gts, threshold);
                for ((interval, _), label) in video_dets.iter().zip(&labels) {
                    pooled.push(PooledDetection {
                        score: label.score,
                        start: interval.start,
                        end: interval.end,
                        video: id,
                        is_tp: label.is_tp,
                    });
                }
            }
            pooled.sort_by(|a, b| {
                b.score
                    .total_cmp(&a.score)
                    .then(a.start.total_cmp(&b.start))
                    .then(a.video.cmp(b.video))
                    .then(a.end.total_cmp(&b.end))
            });
            let labels: Vec<ScoredLabel> = pooled
                .iter()
                .map(|p| ScoredLabel { score: p.score, is_tp: p.is_tp })
                .collect();
            row.push(average_precision(&labels, num_gt, protocol.interpolation));
        }
        ap.push(row);
    }

    let n_thresholds = protocol.thresholds.len();
    let per_threshold_map: Vec<f64> = (0..n_thresholds)
        .map(|t| ap.iter().map(|row| row[t]).sum::<f64>() / ap.len() as f64)
        .collect();
    let average_map = per_threshold_map.iter().sum::<f64>() / n_thresholds as f64;

    Ok(MapTable {
        thresholds: protocol.thresholds.clone(),
        classes: classes.into_iter().map(String::from).collect(),
        ap,
        per_threshold_map,
        average_map,
    })
}

/// Replace every detection score by the maximum tIoU against same-class
/// ground truths of its video (0 when there are none).
pub fn oracle_rescore(dets: &DetectionSet, corpus: &Corpus) -> DetectionSet {
    let mut out: DetectionSet = BTreeMap::new();
    for (id, records) in dets {
        let rescored: Vec<DetectionRecord> = records
            .iter()
            .map(|r| {
                let interval = Interval::new(r.segment[0], r.segment[1]);
                let score = corpus
                    .videos
                    .get(id)
                    .map(|video| {
                        video
                            .annotations
                            .iter()
                            .filter(|seg| seg.label == r.label)
                            .map(|seg| {
                                tiou(&interval, &Interval::new(seg.segment[0], seg.segment[1]))
                            })
                            .fold(0.0, f64::max)
                    })
                    .unwrap_or(0.0);
                DetectionRecord { segment: r.segment, label: r.label.clone(), score }
            })
            .collect();
        out.insert(id.clone(), rescored);
    }
    out
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input has no rank variance.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "rank correlation needs paired samples");
    if a.len() < 2 {
        return 0.0;
    }
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[k]] {
            j += 1;
        }
        let avg_rank = (k + j) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=j] {
            out[idx] = avg_rank;
        }
        k = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{AnnotatedSegment, VideoAnnotation};

    fn label(score: f64, is_tp: bool) -> ScoredLabel {
        ScoredLabel { score, is_tp }
    }

    #[test]
    fn match_single_true_positive() {
        let dets = vec![(Interval::new(0.0, 9.0), 0.8)];
        let gts = vec![Interval::new(0.0, 10.0)];
        let labels = match_detections(&dets, &gts, 0.5);
        assert!(labels[0].is_tp);
    }

    #[test]
    fn duplicate_detection_on_matched_gt_is_fp() {
        let dets = vec![(Interval::new(0.0, 10.0), 0.9), (Interval::new(0.0, 9.5), 0.8)];
        let gts = vec![Interval::new(0.0, 10.0)];
        let labels = match_detections(&dets, &gts, 0.5);
        assert!(labels[0].is_tp);
        assert!(!labels[1].is_tp);
    }

    #[test]
    fn low_overlap_is_fp() {
        let dets = vec![(Interval::new(0.0, 4.0), 0.9)];
        let gts = vec![Interval::new(0.0, 10.0)];
        let labels = match_detections(&dets, &gts, 0.5);
        assert!(!labels[0].is_tp);
    }

    #[test]
    fn detection_prefers_highest_overlap_gt() {
        let dets = vec![(Interval::new(0.0, 10.0), 0.9)];
        let gts = vec![Interval::new(5.0, 15.0), Interval::new(0.0, 11.0)];
        let labels = match_detections(&dets, &gts, 0.3);
        assert!(labels[0].is_tp);
        // A second identical detection can still claim the lower-overlap gt.
        let dets2 = vec![(Interval::new(0.0, 10.0), 0.9), (Interval::new(0.0, 10.0), 0.8)];
        let labels2 = match_detections(&dets2, &gts, 0.3);
        assert!(labels2.iter().all(|l| l.is_tp));
    }

    #[test]
    fn ap_single_true_positive_is_one() {
        assert_eq!(average_precision(&[label(0.9, true)], 1, ApInterpolation::AllPoint), 1.0);
    }

    #[test]
    fn ap_fp_before_tp_is_half() {
        let labels = [label(0.9, false), label(0.8, true)];
        assert!((average_precision(&labels, 1, ApInterpolation::AllPoint) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ap_no_detections_is_zero() {
        assert_eq!(average_precision(&[], 3, ApInterpolation::AllPoint), 0.0);
        assert_eq!(average_precision(&[label(0.5, false)], 0, ApInterpolation::AllPoint), 0.0);
    }

    #[test]
    fn ap_invariant_to_monotone_score_transform() {
        let labels = [
            label(0.9, true),
            label(0.7, false),
            label(0.6, true),
            label(0.2, false),
            label(0.1, true),
        ];
        let squashed: Vec<ScoredLabel> =
            labels.iter().map(|l| label((10.0 * l.score).tanh(), l.is_tp)).collect();
        let a = average_precision(&labels, 4, ApInterpolation::AllPoint);
        let b = average_precision(&squashed, 4, ApInterpolation::AllPoint);
        assert!((a - b).abs() < 1e-15);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn pr_curve_recall_non_decreasing() {
        let labels = [
            label(0.9, false),
            label(0.8, true),
            label(0.7, true),
            label(0.3, false),
            label(0.2, true),
        ];
        let curve = pr_curve(&labels, 3);
        for w in curve.points.windows(2) {
            assert!(w[1].recall >= w[0].recall);
        }
        assert!((curve.points.last().unwrap().recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eleven_point_matches_all_point_on_perfect_ranking() {
        let labels = [label(0.9, true), label(0.8, true)];
        let all = average_precision(&labels, 2, ApInterpolation::AllPoint);
        let eleven = average_precision(&labels, 2, ApInterpolation::ElevenPoint);
        assert_eq!(all, 1.0);
        assert_eq!(eleven, 1.0);
    }

    fn tiny_corpus() -> Corpus {
        let mut videos = BTreeMap::new();
        videos.insert(
            "v1".to_string(),
            VideoAnnotation {
                duration: 100.0,
                fps: 1.0,
                annotations: vec![
                    AnnotatedSegment { segment: [10.0, 20.0], label: "a".into() },
                    AnnotatedSegment { segment: [40.0, 60.0], label: "b".into() },
                ],
            },
        );
        videos.insert(
            "v2".to_string(),
            VideoAnnotation {
                duration: 100.0,
                fps: 1.0,
                annotations: vec![AnnotatedSegment { segment: [5.0, 25.0], label: "a".into() }],
            },
        );
        Corpus { videos }
    }

    fn perfect_detections(corpus: &Corpus) -> DetectionSet {
        corpus
            .videos
            .iter()
            .map(|(id, video)| {
                let records = video
                    .annotations
                    .iter()
                    .map(|seg| DetectionRecord {
                        segment: seg.segment,
                        label: seg.label.clone(),
                        score: 1.0,
                    })
                    .collect();
                (id.clone(), records)
            })
            .collect()
    }

    #[test]
    fn perfect_detections_score_one_everywhere() {
        let corpus = tiny_corpus();
        let dets = perfect_detections(&corpus);
        let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
        for row in &table.ap {
            for &v in row {
                assert_eq!(v, 1.0);
            }
        }
        assert_eq!(table.average_map, 1.0);
    }

    #[test]
    fn single_class_map_equals_class_ap() {
        let mut corpus = tiny_corpus();
        corpus.videos.get_mut("v1").unwrap().annotations.retain(|s| s.label == "a");
        let dets = perfect_detections(&corpus);
        let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
        assert_eq!(table.classes, vec!["a".to_string()]);
        for (t, &m) in table.per_threshold_map.iter().enumerate() {
            assert_eq!(m, table.ap[0][t]);
        }
    }

    #[test]
    fn average_map_is_mean_of_threshold_rows() {
        let corpus = tiny_corpus();
        let mut dets = perfect_detections(&corpus);
        // Degrade one detection so the table is not all ones.
        dets.get_mut("v1").unwrap()[0].segment = [12.0, 20.0];
        let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
        let recomputed =
            table.per_threshold_map.iter().sum::<f64>() / table.per_threshold_map.len() as f64;
        assert!((table.average_map - recomputed).abs() < 1e-15);
    }

    #[test]
    fn map_table_order_invariant_to_detection_shuffle() {
        let corpus = tiny_corpus();
        let mut dets = perfect_detections(&corpus);
        dets.get_mut("v1").unwrap().push(DetectionRecord {
            segment: [11.0, 19.0],
            label: "a".into(),
            score: 0.4,
        });
        let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
        let mut shuffled = dets.clone();
        shuffled.get_mut("v1").unwrap().reverse();
        let table2 = map_table(&shuffled, &corpus, &EvalProtocol::thumos()).unwrap();
        assert_eq!(table, table2);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let corpus = Corpus::default();
        let dets = DetectionSet::new();
        assert!(map_table(&dets, &corpus, &EvalProtocol::thumos()).is_err());
    }

    #[test]
    fn no_detections_gives_all_zeros() {
        let corpus = tiny_corpus();
        let table = map_table(&DetectionSet::new(), &corpus, &EvalProtocol::thumos()).unwrap();
        assert!(table.ap.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(table.average_map, 0.0);
    }

    #[test]
    fn oracle_rescore_examples() {
        let corpus = tiny_corpus();
        let mut dets = DetectionSet::new();
        dets.insert(
            "v1".to_string(),
            vec![
                DetectionRecord { segment: [10.0, 20.0], label: "a".into(), score: 0.1 },
                DetectionRecord { segment: [70.0, 80.0], label: "a".into(), score: 0.9 },
                DetectionRecord { segment: [10.0, 25.0], label: "a".into(), score: 0.5 },
                DetectionRecord { segment: [40.0, 60.0], label: "missing".into(), score: 0.7 },
            ],
        );
        let rescored = oracle_rescore(&dets, &corpus);
        let v1 = &rescored["v1"];
        assert_eq!(v1[0].score, 1.0);
        assert_eq!(v1[1].score, 0.0);
        assert!((v1[2].score - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(v1[3].score, 0.0);
    }

    #[test]
    fn protocol_validation() {
        assert!(EvalProtocol::new(vec![], ApInterpolation::AllPoint).is_err());
        assert!(EvalProtocol::new(vec![0.5, 0.4], ApInterpolation::AllPoint).is_err());
        assert!(EvalProtocol::new(vec![0.0, 0.5], ApInterpolation::AllPoint).is_err());
        assert!(EvalProtocol::new(vec![0.3, 0.5, 0.7], ApInterpolation::AllPoint).is_ok());
    }

    #[test]
    fn spearman_basic_properties() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let up = [2.0, 4.0, 5.0, 9.0];
        let down = [9.0, 5.0, 4.0, 2.0];
        assert!((spearman(&a, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&a, &down) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&a, &[1.0; 4]), 0.0);
    }

    #[test]
    fn spearman_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 1.0, 2.0, 3.0];
        assert!((spearman(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_rendering_has_header_and_map_row() {
        let corpus = tiny_corpus();
        let dets = perfect_detections(&corpus);
        let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
        let csv = table.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,0.3,0.4,0.5,0.6,0.7,avg");
        assert!(lines.last().unwrap().starts_with("mAP,"));
        assert_eq!(lines.len(), 2 + table.classes.len());
    }
}
