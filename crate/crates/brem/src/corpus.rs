//! Seeded synthetic corpora: ground-truth actions, noisy detector outputs,
//! and boundary-correlated feature streams.
//!
//! All randomness flows through the pinned generator in [`crate::rng`]
//! (ChaCha8 keyed by SplitMix64, uniforms from 53 mantissa bits, normals by
//! inverse CDF), so a seed pins every corpus byte for byte across
//! platforms. Sizes are chosen for desk scale: hundreds of videos, seconds
//! of compute.

use crate::error::{Error, Result};
use crate::interval::{tiou, Interval};
use crate::io::{AnnotatedSegment, Corpus, DetectionRecord, DetectionSet, VideoAnnotation};
use crate::rng::{log_uniform, normal, stream_rng, uniform, uniform_index, uniform_range};
use crate::sampling::FeatureSequence;
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

const STREAM_GROUND_TRUTH: u64 = 0x47 << 32;
const STREAM_DETECTIONS: u64 = 0x44 << 32;
const PLACEMENT_ATTEMPTS: usize = 100;

/// Shape of a generated corpus. Durations are in feature timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub videos: usize,
    /// Video length bounds, timesteps.
    pub duration_range: (f64, f64),
    pub actions_per_video: (usize, usize),
    pub classes: usize,
    /// Log-uniform action length bounds, timesteps.
    pub action_duration: (f64, f64),
    /// Timesteps per second in the emitted annotations.
    pub fps: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            videos: 200,
            duration_range: (120.0, 400.0),
            actions_per_video: (1, 4),
            classes: 5,
            action_duration: (2.0, 100.0),
            fps: 1.0,
            seed: 7,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 {
            return Err(Error::InvalidConfig("need at least one video".into()));
        }
        if !(self.duration_range.0 > 0.0 && self.duration_range.0 <= self.duration_range.1) {
            return Err(Error::InvalidConfig("video duration range is invalid".into()));
        }
        if self.actions_per_video.0 > self.actions_per_video.1 {
            return Err(Error::InvalidConfig("actions-per-video range is invalid".into()));
        }
        if self.classes == 0 {
            return Err(Error::InvalidConfig("need at least one class".into()));
        }
        if !(self.action_duration.0 > 0.0 && self.action_duration.0 <= self.action_duration.1) {
            return Err(Error::InvalidConfig("action duration bounds are invalid".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidConfig("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Detector noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Boundary jitter in timesteps, or as a fraction of the action length
    /// when `proportional` is set.
    pub boundary_jitter: f64,
    pub proportional: bool,
    /// Standard deviation of the additive score noise.
    pub score_noise: f64,
    /// Probability of emitting a spurious detection per ground truth.
    pub false_positive_rate: f64,
    /// Probability of dropping the detection of a ground truth.
    pub miss_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            boundary_jitter: 0.2,
            proportional: true,
            score_noise: 0.3,
            false_positive_rate: 0.3,
            miss_rate: 0.05,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("boundary jitter", self.boundary_jitter),
            ("score noise", self.score_noise),
            ("false positive rate", self.false_positive_rate),
            ("miss rate", self.miss_rate),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.false_positive_rate > 1.0 || self.miss_rate > 1.0 {
            return Err(Error::InvalidConfig("rates must not exceed 1".into()));
        }
        Ok(())
    }
}

pub fn class_name(index: usize) -> String {
    format!("class_{index:02}")
}

/// Generate an annotation corpus. Same-class actions never overlap within
/// a video; placement retries a bounded number of times before reporting
/// an infeasible packing.
pub fn generate_ground_truth(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut corpus = Corpus::default();
    for v in 0..cfg.videos {
        let id = format!("video_{v:04}");
        let mut rng = stream_rng(cfg.seed, STREAM_GROUND_TRUTH | v as u64);
        let duration_ts = uniform_range(&mut rng, cfg.duration_range.0, cfg.duration_range.1);
        let span = cfg.actions_per_video.1 - cfg.actions_per_video.0 + 1;
        let n_actions = cfg.actions_per_video.0 + uniform_index(&mut rng, span);

        let mut placed: Vec<(usize, Interval)> = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let mut ok = false;
            for _attempt in 0..PLACEMENT_ATTEMPTS {
                let class = uniform_index(&mut rng, cfg.classes);
                let length =
                    log_uniform(&mut rng, cfg.action_duration.0, cfg.action_duration.1)
                        .min(duration_ts);
                let start = uniform_range(&mut rng, 0.0, duration_ts - length);
                let candidate = Interval::new(start, start + length);
                let overlaps = placed.iter().any(|(c, existing)| {
                    *c == class && candidate.intersection_len(existing) > 0.0
                });
                if !overlaps {
                    placed.push((class, candidate));
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::PackingFailed { video: id, attempts: PLACEMENT_ATTEMPTS });
            }
        }
        placed.sort_by(|a, b| a.1.start.total_cmp(&b.1.start));

        let annotations = placed
            .into_iter()
            .map(|(class, interval)| AnnotatedSegment {
                segment: [interval.start / cfg.fps, interval.end / cfg.fps],
                label: class_name(class),
            })
            .collect();
        corpus.videos.insert(
            id,
            VideoAnnotation { duration: duration_ts / cfg.fps, fps: cfg.fps, annotations },
        );
    }
    Ok(corpus)
}

fn jittered_boundary(rng: &mut ChaCha8Rng, value: f64, sigma: f64) -> f64 {
    value + sigma * normal(rng)
}

/// Simulate a noisy detector over a corpus: per ground truth (unless
/// missed) one detection with jittered boundaries and a score that equals
/// its true tIoU plus Gaussian noise, plus spurious detections at the
/// configured rate. Deterministic in `(corpus order, noise, seed)`.
pub fn generate_noisy_detections(
    corpus: &Corpus,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<DetectionSet> {
    noise.validate()?;
    let mut out = DetectionSet::new();
    for (v, (id, video)) in corpus.videos.iter().enumerate() {
        let mut rng = stream_rng(seed, STREAM_DETECTIONS | v as u64);
        let fps = video.fps;
        let duration_ts = video.duration * fps;
        let mut records = Vec::new();
        for seg in &video.annotations {
            let gt = Interval::new(seg.segment[0] * fps, seg.segment[1] * fps);
            if uniform(&mut rng) >= noise.miss_rate {
                let sigma = if noise.proportional {
                    noise.boundary_jitter * gt.len()
                } else {
                    noise.boundary_jitter
                };
                let mut start = jittered_boundary(&mut rng, gt.start, sigma);
                let mut end = jittered_boundary(&mut rng, gt.end, sigma);
                if start > end {
                    std::mem::swap(&mut start, &mut end);
                }
                let det = Interval::new(start, end);
                let score =
                    (tiou(&det, &gt) + noise.score_noise * normal(&mut rng)).clamp(0.0, 1.0);
                records.push(DetectionRecord {
                    segment: [det.start / fps, det.end / fps],
                    label: seg.label.clone(),
                    score,
                });
            }
            // False positives fire per ground truth, independent of misses.
            if uniform(&mut rng) < noise.false_positive_rate {
                let max_len = (duration_ts * 0.4).max(2.5);
                let length = log_uniform(&mut rng, 2.0, max_len).min(duration_ts);
                let fp_start = uniform_range(&mut rng, 0.0, duration_ts - length);
                let fp_class = uniform_index(&mut rng, class_count_upper_bound(corpus));
                let fp_score = (noise.score_noise * normal(&mut rng).abs()).clamp(0.0, 1.0);
                records.push(DetectionRecord {
                    segment: [fp_start / fps, (fp_start + length) / fps],
                    label: class_name(fp_class),
                    score: fp_score,
                });
            }
        }
        out.insert(id.clone(), records);
    }
    Ok(out)
}

/// Largest class index seen in the corpus plus one; false positives draw
/// their labels from this range.
fn class_count_upper_bound(corpus: &Corpus) -> usize {
    let max_seen = corpus
        .videos
        .values()
        .flat_map(|v| v.annotations.iter())
        .filter_map(|seg| seg.label.strip_prefix("class_"))
        .filter_map(|suffix| suffix.parse::<usize>().ok())
        .max();
    max_seen.map_or(1, |m| m + 1)
}

/// Synthesize a feature stream for one video: smooth low-frequency noise
/// plus Gaussian bumps centered on every action boundary, so boundary
/// locations are recoverable in principle. `T` is the annotated duration in
/// timesteps; the stream has stride 1.
pub fn generate_feature_stream(video: &VideoAnnotation, channels: usize, seed: u64) -> FeatureSequence {
    assert!(channels >= 1, "need at least one channel");
    let len = ((video.duration * video.fps).round() as usize).max(1);
    let mut rng = stream_rng(seed, 0xFEA7);
    let mut data = Array2::zeros((len, channels));

    // Smooth background: a few random sinusoids per channel plus faint
    // white noise.
    for c in 0..channels {
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    uniform_range(&mut rng, 0.5, 3.0),
                    uniform_range(&mut rng, 0.0, std::f64::consts::TAU),
                    uniform_range(&mut rng, 0.2, 0.6),
                )
            })
            .collect();
        for t in 0..len {
            let x = t as f64 / len as f64;
            let mut v = 0.0;
            for &(freq, phase, amp) in &waves {
                v += amp * (std::f64::consts::TAU * freq * x + phase).sin();
            }
            data[[t, c]] = v + 0.1 * normal(&mut rng);
        }
    }

    // Boundary bumps, width fixed, per-channel signed amplitude.
    let width = 1.5f64;
    for seg in &video.annotations {
        for boundary in [seg.segment[0] * video.fps, seg.segment[1] * video.fps] {
            for c in 0..channels {
                let amp = uniform_range(&mut rng, 1.5, 3.0)
                    * if uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 };
                for t in 0..len {
                    let d = t as f64 - boundary;
                    data[[t, c]] += amp * (-d * d / (2.0 * width * width)).exp();
                }
            }
        }
    }

    FeatureSequence::new(data, 1.0).expect("generated features are finite and nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::spearman;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            videos: 12,
            duration_range: (60.0, 120.0),
            actions_per_video: (1, 3),
            classes: 4,
            action_duration: (4.0, 30.0),
            fps: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn same_seed_gives_identical_corpora() {
        let cfg = small_config();
        let a = generate_ground_truth(&cfg).unwrap();
        let b = generate_ground_truth(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let different = generate_ground_truth(&CorpusConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a, different);
    }

    #[test]
    fn fixed_action_count_is_respected() {
        let cfg = CorpusConfig { actions_per_video: (1, 1), ..small_config() };
        let corpus = generate_ground_truth(&cfg).unwrap();
        assert!(corpus.videos.values().all(|v| v.annotations.len() == 1));
    }

    #[test]
    fn action_durations_stay_within_bounds() {
        let cfg = CorpusConfig { action_duration: (2.0, 4.0), ..small_config() };
        let corpus = generate_ground_truth(&cfg).unwrap();
        for video in corpus.videos.values() {
            for seg in &video.annotations {
                let len = (seg.segment[1] - seg.segment[0]) * video.fps;
                assert!((2.0..=4.0 + 1e-9).contains(&len), "length {len} out of bounds");
            }
        }
    }

    #[test]
    fn same_class_actions_never_overlap() {
        let cfg = CorpusConfig { videos: 30, actions_per_video: (3, 6), ..small_config() };
        let corpus = generate_ground_truth(&cfg).unwrap();
        for video in corpus.videos.values() {
            for (i, a) in video.annotations.iter().enumerate() {
                for b in &video.annotations[i + 1..] {
                    if a.label == b.label {
                        let ia = Interval::new(a.segment[0], a.segment[1]);
                        let ib = Interval::new(b.segment[0], b.segment[1]);
                        assert_eq!(ia.intersection_len(&ib), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_packing_is_reported() {
        let cfg = CorpusConfig {
            videos: 1,
            duration_range: (10.0, 10.0),
            actions_per_video: (2, 2),
            classes: 1,
            action_duration: (9.0, 10.0),
            fps: 1.0,
            seed: 1,
        };
        assert!(matches!(generate_ground_truth(&cfg), Err(Error::PackingFailed { .. })));
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let corpus = generate_ground_truth(&small_config()).unwrap();
        let noise = NoiseConfig {
            boundary_jitter: 0.0,
            proportional: false,
            score_noise: 0.0,
            false_positive_rate: 0.0,
            miss_rate: 0.0,
        };
        let dets = generate_noisy_detections(&corpus, &noise, 3).unwrap();
        for (id, video) in &corpus.videos {
            let records = &dets[id];
            assert_eq!(records.len(), video.annotations.len());
            for (r, seg) in records.iter().zip(&video.annotations) {
                assert_eq!(r.segment, seg.segment);
                assert_eq!(r.label, seg.label);
                assert_eq!(r.score, 1.0);
            }
        }
    }

    #[test]
    fn full_miss_rate_leaves_only_false_positives() {
        let corpus = generate_ground_truth(&small_config()).unwrap();
        let noise = NoiseConfig { miss_rate: 1.0, false_positive_rate: 0.0, ..Default::default() };
        let dets = generate_noisy_detections(&corpus, &noise, 3).unwrap();
        assert!(dets.values().all(|records| records.is_empty()));
        let with_fp = NoiseConfig { miss_rate: 1.0, false_positive_rate: 1.0, ..Default::default() };
        let dets_fp = generate_noisy_detections(&corpus, &with_fp, 3).unwrap();
        assert!(dets_fp.values().any(|records| !records.is_empty()));
    }

    /// Rank correlation between score and true tIoU per noise level.
    fn score_quality_correlation(score_noise: f64) -> f64 {
        let cfg = CorpusConfig { videos: 60, ..small_config() };
        let corpus = generate_ground_truth(&cfg).unwrap();
        let noise = NoiseConfig {
            boundary_jitter: 0.15,
            proportional: true,
            score_noise,
            false_positive_rate: 0.0,
            miss_rate: 0.0,
        };
        let dets = generate_noisy_detections(&corpus, &noise, 5).unwrap();
        let rescored = crate::eval::oracle_rescore(&dets, &corpus);
        let mut scores = Vec::new();
        let mut quality = Vec::new();
        for (id, records) in &dets {
            for (r, o) in records.iter().zip(&rescored[id]) {
                scores.push(r.score);
                quality.push(o.score);
            }
        }
        spearman(&scores, &quality)
    }

    #[test]
    fn score_noise_degrades_rank_correlation() {
        let c0 = score_quality_correlation(0.0);
        let c2 = score_quality_correlation(0.2);
        let c5 = score_quality_correlation(0.5);
        assert!(c0 > 0.999, "noiseless correlation {c0}");
        assert!(c0 > c2 && c2 > c5, "correlations not monotone: {c0}, {c2}, {c5}");
    }

    #[test]
    fn detections_are_deterministic_per_seed() {
        let corpus = generate_ground_truth(&small_config()).unwrap();
        let a = generate_noisy_detections(&corpus, &NoiseConfig::default(), 9).unwrap();
        let b = generate_noisy_detections(&corpus, &NoiseConfig::default(), 9).unwrap();
        let c = generate_noisy_detections(&corpus, &NoiseConfig::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn feature_stream_shape_and_determinism() {
        let corpus = generate_ground_truth(&small_config()).unwrap();
        let video = corpus.videos.values().next().unwrap();
        let a = generate_feature_stream(video, 6, 21);
        let b = generate_feature_stream(video, 6, 21);
        assert_eq!(a, b);
        assert_eq!(a.len(), (video.duration * video.fps).round() as usize);
        assert_eq!(a.channels(), 6);
    }

    #[test]
    fn boundary_energy_exceeds_background() {
        let cfg = CorpusConfig { videos: 1, ..small_config() };
        let corpus = generate_ground_truth(&cfg).unwrap();
        let video = corpus.videos.values().next().unwrap();
        let mut wins = 0;
        for seed in 0..100u64 {
            let f = generate_feature_stream(video, 4, seed);
            let energy: Vec<f64> = (0..f.len())
                .map(|t| f.data().row(t).iter().map(|v| v * v).sum::<f64>())
                .collect();
            let boundary_ts: Vec<usize> = video
                .annotations
                .iter()
                .flat_map(|seg| {
                    [seg.segment[0] * video.fps, seg.segment[1] * video.fps]
                })
                .map(|b| (b.round() as usize).min(f.len() - 1))
                .collect();
            let boundary_mean = boundary_ts.iter().map(|&t| energy[t]).sum::<f64>()
                / boundary_ts.len() as f64;
            let background_mean = energy.iter().sum::<f64>() / energy.len() as f64;
            if boundary_mean > background_mean {
                wins += 1;
            }
        }
        assert!(wins >= 95, "boundary energy won only {wins}/100 seeds");
    }
}
