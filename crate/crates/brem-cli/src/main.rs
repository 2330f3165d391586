//! Command-line front end: reproducible corpora, quality-map dumps,
//! pipeline runs, parameter sweeps, evaluation tables, and gradient checks.
//!
//! Every subcommand resolves its settings from command-line flags, then the
//! optional `--config` key-value file, then built-in defaults, and writes a
//! run manifest next to its outputs. Diagnostics go to stderr; data goes to
//! files only.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::run::{MapSource, ReduceKind, RescoreSettings, SweepKind};
use commands::{corpus as corpus_cmd, evaluate, gradcheck, maps, run as run_cmd};
use config::{resolve, resolve_with, ConfigFile};

#[derive(Parser)]
#[command(name = "brem", version, about = "Temporal action detection post-processing toolkit")]
struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Key-value config file mirroring the flags; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic annotation corpus with noisy detections.
    Corpus {
        /// Output directory for annotations.json and detections.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        videos: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        /// Video length bounds in timesteps, `lo,hi`.
        #[arg(long, value_name = "LO,HI")]
        duration_range: Option<String>,
        /// Actions per video, `lo,hi`.
        #[arg(long, value_name = "LO,HI")]
        actions: Option<String>,
        /// Log-uniform action length bounds in timesteps, `lo,hi`.
        #[arg(long, value_name = "LO,HI")]
        action_duration: Option<String>,
        #[arg(long)]
        fps: Option<f64>,
        /// Boundary jitter (timesteps, or fraction of action length).
        #[arg(long)]
        sigma_b: Option<f64>,
        /// Interpret the jitter as a fraction of the action length.
        #[arg(long)]
        proportional_jitter: Option<bool>,
        /// Score noise standard deviation.
        #[arg(long)]
        sigma_s: Option<f64>,
        #[arg(long)]
        fp_rate: Option<f64>,
        #[arg(long)]
        miss_rate: Option<f64>,
    },
    /// Dump ground-truth boundary quality maps per video.
    LabelMaps {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Anchor scales as `r_min,r_max,count` (count 1 for single-scale).
        #[arg(long, value_name = "RMIN,RMAX,COUNT")]
        anchor_set: Option<String>,
        /// Dump format: csv or bin.
        #[arg(long)]
        format: Option<String>,
    },
    /// Evaluate detections: AP per class and threshold, mAP, average mAP.
    Eval {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated tIoU thresholds.
        #[arg(long)]
        thresholds: Option<String>,
        /// AP interpolation: all or eleven.
        #[arg(long)]
        interpolation: Option<String>,
    },
    /// Compare raw scores against oracle tIoU rescoring.
    Oracle {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        interpolation: Option<String>,
    },
    /// Rescore detections through the full pipeline and Soft-NMS.
    Pipeline {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Output detection JSON path.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        rescore: RescoreArgs,
    },
    /// Evaluate a parameter grid; one CSV row per grid point.
    Sweep {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Parameter to vary: tau, anchor-set, nms, or reduction.
        #[arg(long)]
        sweep: String,
        /// Grid values: commas within a value set, semicolons between
        /// anchor sets (e.g. `1,10,20;1,50,20`).
        #[arg(long)]
        grid: String,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        interpolation: Option<String>,
        #[command(flatten)]
        rescore: RescoreArgs,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Random points per loss.
        #[arg(long)]
        points: Option<usize>,
        /// Relative-error tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
        /// Testing hook: corrupt one gradient so a FAIL row appears.
        #[arg(long, hide = true)]
        inject_wrong_sign: bool,
    },
}

#[derive(Args)]
struct RescoreArgs {
    /// Duration-to-scale mapping coefficient.
    #[arg(long)]
    tau: Option<f64>,
    /// Anchor scales as `r_min,r_max,count`.
    #[arg(long, value_name = "RMIN,RMAX,COUNT")]
    anchor_set: Option<String>,
    /// Soft-NMS overlap threshold (linear decay).
    #[arg(long)]
    nms_threshold: Option<f64>,
    /// Soft-NMS decay: linear or gaussian.
    #[arg(long)]
    nms_decay: Option<String>,
    /// Gaussian decay width.
    #[arg(long)]
    nms_sigma: Option<f64>,
    /// Drop detections whose score falls below this.
    #[arg(long)]
    score_floor: Option<f64>,
    /// Suppress per class instead of across classes.
    #[arg(long)]
    per_class_nms: Option<bool>,
    /// Quality map source: label (ground truth) or seeded (forward pass).
    #[arg(long)]
    bem: Option<String>,
    /// Samples per anchor in the sampling matrix.
    #[arg(long)]
    bem_samples: Option<usize>,
    /// Feature channels for the seeded forward pass.
    #[arg(long)]
    channels: Option<usize>,
    /// Load head parameters from a tensor container instead of seeding.
    #[arg(long)]
    bem_params: Option<PathBuf>,
    /// Sample-axis reduction: max, mean, fc, or mean_and_max.
    #[arg(long)]
    reduction: Option<String>,
}

impl RescoreArgs {
    fn resolve(self, cfg: &ConfigFile, seed: u64) -> Result<RescoreSettings> {
        let tau = resolve(self.tau, cfg, "tau", 2.0)?;
        let scale_set = resolve_with(self.anchor_set, cfg, "anchor-set", "1,50,20", |s| {
            commands::parse_anchor_set(s)
        })?;
        let threshold = resolve(self.nms_threshold, cfg, "nms-threshold", 0.5)?;
        let decay = resolve_with(self.nms_decay, cfg, "nms-decay", "linear", |s| {
            match s {
                "linear" | "gaussian" => Ok(s.to_string()),
                other => anyhow::bail!("nms decay must be linear or gaussian, got {other:?}"),
            }
        })?;
        let sigma = resolve(self.nms_sigma, cfg, "nms-sigma", 0.5)?;
        let floor = resolve(self.score_floor, cfg, "score-floor", 1e-4)?;
        let per_class = resolve(self.per_class_nms, cfg, "per-class-nms", false)?;
        let nms = match decay.as_str() {
            "linear" => brem::pipeline::SoftNmsConfig::linear(threshold, floor)?,
            _ => brem::pipeline::SoftNmsConfig::gaussian(sigma, floor)?,
        }
        .with_per_class(per_class);
        let map_source =
            resolve_with(self.bem, cfg, "bem", "label", MapSource::parse)?;
        let reduction =
            resolve_with(self.reduction, cfg, "reduction", "max", ReduceKind::parse)?;
        let samples = resolve(self.bem_samples, cfg, "bem-samples", 16)?;
        let channels = resolve(self.channels, cfg, "channels", 8)?;
        let params = match self.bem_params {
            Some(path) => Some(brem::io::load_bem_params(&path)?),
            None => None,
        };
        Ok(RescoreSettings {
            scale_set,
            tau,
            nms,
            map_source,
            reduction,
            samples,
            channels,
            params,
            seed,
        })
    }
}

fn main() -> std::process::ExitCode {
    match run() {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let seed = resolve(cli.seed, &cfg, "seed", 7u64)?;

    match cli.command {
        Command::Corpus {
            out,
            videos,
            classes,
            duration_range,
            actions,
            action_duration,
            fps,
            sigma_b,
            proportional_jitter,
            sigma_s,
            fp_rate,
            miss_rate,
        } => {
            let defaults = brem::corpus::CorpusConfig::default();
            let noise_defaults = brem::corpus::NoiseConfig::default();
            let settings = corpus_cmd::CorpusSettings {
                config: brem::corpus::CorpusConfig {
                    videos: resolve(videos, &cfg, "videos", defaults.videos)?,
                    classes: resolve(classes, &cfg, "classes", defaults.classes)?,
                    duration_range: resolve_with(
                        duration_range,
                        &cfg,
                        "duration-range",
                        "120,400",
                        commands::parse_pair_f64,
                    )?,
                    actions_per_video: resolve_with(actions, &cfg, "actions", "1,4", |s| {
                        commands::parse_pair_usize(s)
                    })?,
                    action_duration: resolve_with(
                        action_duration,
                        &cfg,
                        "action-duration",
                        "2,100",
                        commands::parse_pair_f64,
                    )?,
                    fps: resolve(fps, &cfg, "fps", defaults.fps)?,
                    seed,
                },
                noise: brem::corpus::NoiseConfig {
                    boundary_jitter: resolve(sigma_b, &cfg, "sigma-b", noise_defaults.boundary_jitter)?,
                    proportional: resolve(
                        proportional_jitter,
                        &cfg,
                        "proportional-jitter",
                        noise_defaults.proportional,
                    )?,
                    score_noise: resolve(sigma_s, &cfg, "sigma-s", noise_defaults.score_noise)?,
                    false_positive_rate: resolve(
                        fp_rate,
                        &cfg,
                        "fp-rate",
                        noise_defaults.false_positive_rate,
                    )?,
                    miss_rate: resolve(miss_rate, &cfg, "miss-rate", noise_defaults.miss_rate)?,
                },
            };
            corpus_cmd::run(&settings, &out)
        }
        Command::LabelMaps { annotations, out, anchor_set, format } => {
            let scale_set = resolve_with(anchor_set, &cfg, "anchor-set", "1,50,20", |s| {
                commands::parse_anchor_set(s)
            })?;
            let format =
                resolve_with(format, &cfg, "format", "csv", maps::MapFormat::parse)?;
            maps::run(&annotations, &scale_set, format, &out, seed)
        }
        Command::Eval { annotations, detections, out, thresholds, interpolation } => {
            let protocol = resolve_protocol(thresholds, interpolation, &cfg)?;
            evaluate::run_eval(&annotations, &detections, &protocol, &out, seed)
        }
        Command::Oracle { annotations, detections, out, thresholds, interpolation } => {
            let protocol = resolve_protocol(thresholds, interpolation, &cfg)?;
            evaluate::run_oracle(&annotations, &detections, &protocol, &out, seed)
        }
        Command::Pipeline { annotations, detections, out, rescore } => {
            let settings = rescore.resolve(&cfg, seed)?;
            run_cmd::run_pipeline_cmd(&annotations, &detections, &settings, &out)
        }
        Command::Sweep {
            annotations,
            detections,
            sweep,
            grid,
            out,
            thresholds,
            interpolation,
            rescore,
        } => {
            let protocol = resolve_protocol(thresholds, interpolation, &cfg)?;
            let kind = SweepKind::parse(&sweep)?;
            let settings = rescore.resolve(&cfg, seed)?;
            run_cmd::run_sweep(&annotations, &detections, kind, &grid, &settings, &protocol, &out)
        }
        Command::Gradcheck { out, points, tolerance, inject_wrong_sign } => {
            let settings = gradcheck::GradcheckSettings {
                points: resolve(points, &cfg, "points", 100)?,
                tolerance: resolve(tolerance, &cfg, "tolerance", 1e-4)?,
                seed,
                inject_wrong_sign,
            };
            gradcheck::run(&settings, &out)
        }
    }
}

fn resolve_protocol(
    thresholds: Option<String>,
    interpolation: Option<String>,
    cfg: &ConfigFile,
) -> Result<brem::eval::EvalProtocol> {
    let thresholds = thresholds
        .or_else(|| cfg.raw("thresholds").map(String::from))
        .unwrap_or_else(|| "0.3,0.4,0.5,0.6,0.7".to_string());
    let interpolation = interpolation
        .or_else(|| cfg.raw("interpolation").map(String::from))
        .unwrap_or_else(|| "all".to_string());
    commands::protocol_from(&thresholds, &interpolation)
}
