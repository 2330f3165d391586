//! `corpus`: generate a seeded synthetic corpus with noisy detections.

use std::path::Path;

use anyhow::{Context, Result};
use brem::corpus::{generate_ground_truth, generate_noisy_detections, CorpusConfig, NoiseConfig};
use brem::io::{save_corpus, save_detections};

use crate::manifest::RunManifest;

pub struct CorpusSettings {
    pub config: CorpusConfig,
    pub noise: NoiseConfig,
}

pub fn run(settings: &CorpusSettings, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let corpus = generate_ground_truth(&settings.config)?;
    let detections = generate_noisy_detections(&corpus, &settings.noise, settings.config.seed)?;

    let annotations_path = out_dir.join("annotations.json");
    let detections_path = out_dir.join("detections.json");
    save_corpus(&corpus, &annotations_path)?;
    save_detections(&detections, &detections_path)?;

    let cfg = &settings.config;
    let noise = &settings.noise;
    let mut manifest = RunManifest::new("corpus", cfg.seed);
    manifest
        .setting("videos", cfg.videos)
        .setting("classes", cfg.classes)
        .setting("duration-range", format!("{},{}", cfg.duration_range.0, cfg.duration_range.1))
        .setting("actions", format!("{},{}", cfg.actions_per_video.0, cfg.actions_per_video.1))
        .setting(
            "action-duration",
            format!("{},{}", cfg.action_duration.0, cfg.action_duration.1),
        )
        .setting("fps", cfg.fps)
        .setting("sigma-b", noise.boundary_jitter)
        .setting("proportional-jitter", noise.proportional)
        .setting("sigma-s", noise.score_noise)
        .setting("fp-rate", noise.false_positive_rate)
        .setting("miss-rate", noise.miss_rate)
        .output(&annotations_path)
        .output(&detections_path);
    manifest.write(&out_dir.join("manifest.json"))?;

    eprintln!(
        "wrote {} videos to {}",
        corpus.videos.len(),
        out_dir.display()
    );
    Ok(())
}
