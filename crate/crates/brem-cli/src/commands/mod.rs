//! Subcommand implementations and shared plumbing.

pub mod corpus;
pub mod evaluate;
pub mod gradcheck;
pub mod maps;
pub mod run;

use std::collections::BTreeSet;

use anyhow::{bail, Context, Result};
use brem::eval::{ApInterpolation, EvalProtocol};
use brem::interval::{GroundTruthAction, Interval};
use brem::io::{Corpus, DetectionSet, VideoAnnotation};
use brem::quality::AnchorScaleSet;

pub fn parse_pair_f64(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("expected `lo,hi`, got {text:?}");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

pub fn parse_pair_usize(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        bail!("expected `lo,hi`, got {text:?}");
    }
    Ok((parts[0].trim().parse()?, parts[1].trim().parse()?))
}

/// An anchor-scale set written as `r_min,r_max,count`; a single number or
/// `r,r,1` denotes a single-scale set.
pub fn parse_anchor_set(text: &str) -> Result<AnchorScaleSet> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let set = match parts.as_slice() {
        [r] => AnchorScaleSet::single(r.parse()?),
        [r_min, r_max, count] => {
            let (r_min, r_max): (f64, f64) = (r_min.parse()?, r_max.parse()?);
            let count: usize = count.parse()?;
            if count == 1 {
                if r_min != r_max {
                    bail!("single-scale set needs r_min == r_max, got {text:?}");
                }
                AnchorScaleSet::single(r_min)
            } else {
                AnchorScaleSet::new(r_min, r_max, count)
            }
        }
        _ => bail!("expected `r_min,r_max,count` or a single scale, got {text:?}"),
    };
    set.with_context(|| format!("anchor set {text:?}"))
}

pub fn format_anchor_set(set: &AnchorScaleSet) -> String {
    format!("{},{},{}", set.r_min(), set.r_max(), set.count())
}

pub fn parse_thresholds(text: &str) -> Result<Vec<f64>> {
    let values: Result<Vec<f64>, _> =
        text.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
    values.with_context(|| format!("thresholds {text:?}"))
}

pub fn parse_interpolation(text: &str) -> Result<ApInterpolation> {
    match text {
        "all" => Ok(ApInterpolation::AllPoint),
        "eleven" => Ok(ApInterpolation::ElevenPoint),
        other => bail!("interpolation must be `all` or `eleven`, got {other:?}"),
    }
}

pub fn protocol_from(thresholds: &str, interpolation: &str) -> Result<EvalProtocol> {
    Ok(EvalProtocol::new(parse_thresholds(thresholds)?, parse_interpolation(interpolation)?)?)
}

/// Stable class list: every label in the annotations or detections, sorted.
pub fn class_list(corpus: &Corpus, dets: &DetectionSet) -> Vec<String> {
    let mut labels: BTreeSet<&str> = BTreeSet::new();
    for video in corpus.videos.values() {
        for seg in &video.annotations {
            labels.insert(&seg.label);
        }
    }
    for records in dets.values() {
        for r in records {
            labels.insert(&r.label);
        }
    }
    labels.into_iter().map(String::from).collect()
}

/// Ground-truth actions of one video in timestep units, with labels mapped
/// through `classes`.
pub fn video_actions(video: &VideoAnnotation, classes: &[String]) -> Vec<GroundTruthAction> {
    video
        .annotations
        .iter()
        .map(|seg| {
            let label = classes.iter().position(|c| c == &seg.label).expect("label in class list");
            GroundTruthAction::new(
                Interval::new(seg.segment[0] * video.fps, seg.segment[1] * video.fps),
                label,
            )
        })
        .collect()
}

/// Timestep count of a video on its feature grid.
pub fn video_len(video: &VideoAnnotation) -> usize {
    ((video.duration * video.fps).round() as usize).max(1)
}

/// Every detection must reference an annotated video.
pub fn check_video_ids(corpus: &Corpus, dets: &DetectionSet) -> Result<()> {
    for id in dets.keys() {
        if !corpus.videos.contains_key(id) {
            bail!(brem::Error::UnknownVideo(id.clone()));
        }
    }
    Ok(())
}
