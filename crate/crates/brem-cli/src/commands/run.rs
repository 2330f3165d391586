//! `pipeline` and `sweep`: rescore candidate detections with boundary
//! quality maps, suppress, and evaluate.
//!
//! Each candidate detection becomes one prediction pair (its own score as
//! both the coarse and refined class/quality scores, zero refinement
//! deltas), so the composition runs the full decode → refine → fuse →
//! lookup → final-score → Soft-NMS path. Quality maps come either from the
//! ground-truth labels (`--bem label`, the oracle head) or from a seeded
//! forward pass over synthetic features (`--bem seeded`).

use std::path::Path;

use anyhow::{bail, Context, Result};
use brem::corpus::generate_feature_stream;
use brem::eval::{map_table, EvalProtocol};
use brem::io::{load_corpus, load_detections, save_detections, Corpus, DetectionRecord, DetectionSet};
use brem::pipeline::{
    run_pipeline, CoarsePrediction, InferenceConfig, PredictionPair, PyramidConfig,
    RefinedPrediction, SoftNmsConfig,
};
use brem::quality::{multi_scale_quality_maps, AnchorScaleSet};
use brem::rng::{splitmix64, stream_rng, uniform_range};
use brem::sampling::{bem_forward_with_reduction, BemHeadParams, ReduceMethod};
use ndarray::Array2;

use crate::commands::{
    check_video_ids, class_list, format_anchor_set, parse_anchor_set, video_actions, video_len,
};
use crate::manifest::{sibling_manifest_path, RunManifest};

/// Where the quality maps come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapSource {
    /// Ground-truth label maps (the oracle head).
    Labels,
    /// Seeded forward pass over generated features.
    Seeded,
}

impl MapSource {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "label" => Ok(Self::Labels),
            "seeded" => Ok(Self::Seeded),
            other => bail!("bem source must be `label` or `seeded`, got {other:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceKind {
    Max,
    Mean,
    Fc,
    MeanAndMax,
}

impl ReduceKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            "fc" => Ok(Self::Fc),
            "mean_and_max" => Ok(Self::MeanAndMax),
            other => bail!("reduction must be max, mean, fc, or mean_and_max, got {other:?}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Max => "max",
            Self::Mean => "mean",
            Self::Fc => "fc",
            Self::MeanAndMax => "mean_and_max",
        }
    }

    /// Build the method, with seeded projections where one is needed.
    fn method(self, channels: usize, samples: usize, seed: u64) -> ReduceMethod {
        match self {
            Self::Max => ReduceMethod::Max,
            Self::Mean => ReduceMethod::Mean,
            Self::Fc => {
                let mut rng = stream_rng(seed, 0xFC);
                let bound = 1.0 / (samples as f64 * channels as f64).sqrt();
                ReduceMethod::Fc {
                    projection: Array2::from_shape_fn((channels, samples * channels), |_| {
                        uniform_range(&mut rng, -bound, bound)
                    }),
                }
            }
            Self::MeanAndMax => {
                let mut rng = stream_rng(seed, 0x33A);
                let bound = 1.0 / (2.0 * channels as f64).sqrt();
                ReduceMethod::MeanAndMax {
                    projection: Array2::from_shape_fn((channels, 2 * channels), |_| {
                        uniform_range(&mut rng, -bound, bound)
                    }),
                }
            }
        }
    }
}

/// Resolved settings of one rescoring run.
#[derive(Debug, Clone)]
pub struct RescoreSettings {
    pub scale_set: AnchorScaleSet,
    pub tau: f64,
    pub nms: SoftNmsConfig,
    pub map_source: MapSource,
    pub reduction: ReduceKind,
    pub samples: usize,
    pub channels: usize,
    pub params: Option<BemHeadParams>,
    pub seed: u64,
}

impl RescoreSettings {
    pub fn record(&self, manifest: &mut RunManifest) {
        manifest
            .setting("anchor-set", format_anchor_set(&self.scale_set))
            .setting("tau", self.tau)
            .setting(
                "nms",
                match self.nms.decay {
                    brem::pipeline::NmsDecay::Linear { threshold } => {
                        format!("linear({threshold})")
                    }
                    brem::pipeline::NmsDecay::Gaussian { sigma } => format!("gaussian({sigma})"),
                },
            )
            .setting("score-floor", self.nms.score_floor)
            .setting("per-class-nms", self.nms.per_class)
            .setting(
                "bem",
                match self.map_source {
                    MapSource::Labels => "label",
                    MapSource::Seeded => "seeded",
                },
            )
            .setting("bem-samples", self.samples)
            .setting("channels", self.channels)
            .setting("reduction", self.reduction.name());
    }
}

/// Rescore every detection through the full pipeline; output stays in the
/// detection JSON schema.
pub fn rescore(corpus: &Corpus, dets: &DetectionSet, settings: &RescoreSettings) -> Result<DetectionSet> {
    let classes = class_list(corpus, dets);
    let pyramid = PyramidConfig::new(vec![1.0])?;
    let cfg = InferenceConfig::new(settings.scale_set.clone(), settings.tau, settings.nms)?;
    let head = match settings.map_source {
        MapSource::Seeded => Some(match &settings.params {
            Some(p) => p.clone(),
            None => BemHeadParams::seeded(settings.channels, settings.seed),
        }),
        MapSource::Labels => None,
    };
    let reduce = settings.reduction.method(settings.channels, settings.samples, settings.seed);

    let mut out = DetectionSet::new();
    for (v, (id, video)) in corpus.videos.iter().enumerate() {
        let Some(records) = dets.get(id) else {
            continue;
        };
        let len = video_len(video);
        let maps = match &head {
            None => {
                let actions = video_actions(video, &classes);
                multi_scale_quality_maps(&actions, len, &settings.scale_set)
            }
            Some(params) => {
                let mut state = settings.seed ^ v as u64;
                let features = generate_feature_stream(video, settings.channels, splitmix64(&mut state));
                bem_forward_with_reduction(
                    &features,
                    &settings.scale_set,
                    settings.samples,
                    params,
                    &reduce,
                )?
            }
        };

        let fps = video.fps;
        let preds: Vec<PredictionPair> = records
            .iter()
            .map(|r| {
                let start = r.segment[0] * fps;
                let end = r.segment[1] * fps;
                let location = 0.5 * (start + end);
                let class = classes.iter().position(|c| c == &r.label).expect("class in list");
                let mut class_scores = vec![0.0; classes.len()];
                class_scores[class] = r.score;
                PredictionPair {
                    coarse: CoarsePrediction {
                        level: 0,
                        location,
                        start_offset: location - start,
                        end_offset: end - location,
                        class_scores: class_scores.clone(),
                        quality: r.score,
                    },
                    refined: RefinedPrediction {
                        start_delta: 0.0,
                        end_delta: 0.0,
                        class_scores,
                        quality: r.score,
                    },
                }
            })
            .collect();

        let detections = run_pipeline(&preds, &maps, &pyramid, &cfg)?;
        out.insert(
            id.clone(),
            detections
                .into_iter()
                .map(|d| DetectionRecord {
                    segment: [d.interval.start / fps, d.interval.end / fps],
                    label: classes[d.label].clone(),
                    score: d.score,
                })
                .collect(),
        );
    }
    Ok(out)
}

pub fn run_pipeline_cmd(
    annotations: &Path,
    detections: &Path,
    settings: &RescoreSettings,
    out: &Path,
) -> Result<()> {
    let corpus = load_corpus(annotations)?;
    let dets = load_detections(detections)?;
    check_video_ids(&corpus, &dets)?;
    let rescored = rescore(&corpus, &dets, settings)?;
    save_detections(&rescored, out)?;

    let mut manifest = RunManifest::new("pipeline", settings.seed);
    settings.record(&mut manifest);
    manifest.input(annotations).input(detections).output(out);
    manifest.write(&sibling_manifest_path(out))?;
    let n: usize = rescored.values().map(Vec::len).sum();
    eprintln!("wrote {n} detections to {}", out.display());
    Ok(())
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Tau,
    AnchorSet,
    Nms,
    Reduction,
}

impl SweepKind {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "tau" => Ok(Self::Tau),
            "anchor-set" => Ok(Self::AnchorSet),
            "nms" => Ok(Self::Nms),
            "reduction" => Ok(Self::Reduction),
            other => bail!("sweep must be tau, anchor-set, nms, or reduction, got {other:?}"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tau => "tau",
            Self::AnchorSet => "anchor-set",
            Self::Nms => "nms",
            Self::Reduction => "reduction",
        }
    }
}

/// One grid point: its CSV label and the settings variant it induces.
fn grid_points(
    kind: SweepKind,
    grid: &str,
    base: &RescoreSettings,
) -> Result<Vec<(String, RescoreSettings)>> {
    let mut points = Vec::new();
    match kind {
        SweepKind::Tau => {
            for tok in grid.split(',') {
                let tau: f64 = tok.trim().parse().with_context(|| format!("tau grid {tok:?}"))?;
                if tau <= 0.0 {
                    bail!("tau grid values must be positive, got {tau}");
                }
                points.push((tok.trim().to_string(), RescoreSettings { tau, ..base.clone() }));
            }
        }
        SweepKind::AnchorSet => {
            for tok in grid.split(';') {
                let set = parse_anchor_set(tok.trim())?;
                points.push((
                    tok.trim().to_string(),
                    RescoreSettings { scale_set: set, ..base.clone() },
                ));
            }
        }
        SweepKind::Nms => {
            for tok in grid.split(',') {
                let threshold: f64 =
                    tok.trim().parse().with_context(|| format!("nms grid {tok:?}"))?;
                let nms = SoftNmsConfig::linear(threshold, base.nms.score_floor)?
                    .with_per_class(base.nms.per_class);
                points.push((tok.trim().to_string(), RescoreSettings { nms, ..base.clone() }));
            }
        }
        SweepKind::Reduction => {
            for tok in grid.split(',') {
                let reduction = ReduceKind::parse(tok.trim())?;
                points.push((
                    tok.trim().to_string(),
                    RescoreSettings { reduction, map_source: MapSource::Seeded, ..base.clone() },
                ));
            }
        }
    }
    if points.is_empty() {
        bail!("empty sweep grid");
    }
    Ok(points)
}

pub fn run_sweep(
    annotations: &Path,
    detections: &Path,
    kind: SweepKind,
    grid: &str,
    base: &RescoreSettings,
    protocol: &EvalProtocol,
    out: &Path,
) -> Result<()> {
    let corpus = load_corpus(annotations)?;
    let dets = load_detections(detections)?;
    check_video_ids(&corpus, &dets)?;
    let points = grid_points(kind, grid, base)?;

    let mut csv = String::from("param");
    for t in protocol.thresholds() {
        csv.push_str(&format!(",{t}"));
    }
    csv.push_str(",avg\n");
    for (label, settings) in &points {
        let rescored = rescore(&corpus, &dets, settings)?;
        let table = map_table(&rescored, &corpus, protocol)?;
        csv.push_str(label);
        for v in &table.per_threshold_map {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{}\n", table.average_map));
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = RunManifest::new("sweep", base.seed);
    base.record(&mut manifest);
    manifest
        .setting("sweep", kind.name())
        .setting("grid", grid)
        .input(annotations)
        .input(detections)
        .output(out);
    manifest.write(&sibling_manifest_path(out))?;
    eprintln!("swept {} over {} grid points", kind.name(), points.len());
    Ok(())
}
