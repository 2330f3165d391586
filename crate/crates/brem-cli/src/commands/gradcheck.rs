//! `gradcheck`: finite-difference verification of every analytic gradient,
//! reported as a CSV of per-loss maxima.

use std::path::Path;

use anyhow::{Context, Result};
use brem::interval::Interval;
use brem::losses::{focal_loss, giou_loss_1d, l1_refine_loss, quality_bce_loss};
use brem::quality::{bem_loss, AnchorScaleSet, PositiveMask, QualityMapPair};
use brem::rng::{stream_rng, uniform, uniform_index, uniform_range, ChaCha8Rng};
use ndarray::Array2;

use crate::manifest::{sibling_manifest_path, RunManifest};

const FD_STEP: f64 = 1e-5;

fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn focal_max_err(rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut max_err = 0.0f64;
    for _ in 0..points {
        let n = 1 + uniform_index(rng, 4);
        let probs: Vec<f64> = (0..n).map(|_| uniform_range(rng, 0.05, 0.95)).collect();
        let target = if uniform(rng) < 0.25 { None } else { Some(uniform_index(rng, n)) };
        let analytic = focal_loss(&probs, target, 0.25, 2.0);
        for k in 0..n {
            let fd = central_diff(
                |x| {
                    let mut p = probs.clone();
                    p[k] = x;
                    focal_loss(&p, target, 0.25, 2.0).value
                },
                probs[k],
            );
            max_err = max_err.max(rel_err(analytic.gradient[k], fd));
        }
    }
    max_err
}

fn giou_max_err(rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut max_err = 0.0f64;
    let mut checked = 0;
    while checked < points {
        let a = uniform_range(rng, -10.0, 10.0);
        let b = a + uniform_range(rng, 0.5, 12.0);
        let c = uniform_range(rng, -10.0, 10.0);
        let d = c + uniform_range(rng, 0.5, 12.0);
        if [(a - c), (b - d), (b - c), (a - d)].iter().any(|g| g.abs() < 0.1) {
            continue;
        }
        checked += 1;
        let gt = Interval::new(c, d);
        let analytic = giou_loss_1d(&Interval::new(a, b), &gt);
        let fd_start = central_diff(|x| giou_loss_1d(&Interval::new(x, b), &gt).value, a);
        let fd_end = central_diff(|x| giou_loss_1d(&Interval::new(a, x), &gt).value, b);
        max_err = max_err.max(rel_err(analytic.gradient[0], fd_start));
        max_err = max_err.max(rel_err(analytic.gradient[1], fd_end));
    }
    max_err
}

fn l1_max_err(rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut max_err = 0.0f64;
    let mut checked = 0;
    while checked < points {
        let coarse = (uniform_range(rng, 1.0, 10.0), uniform_range(rng, 1.0, 10.0));
        let w = coarse.0 + coarse.1;
        let gt = (coarse.0 + uniform_range(rng, -3.0, 3.0), coarse.1 + uniform_range(rng, -3.0, 3.0));
        let pred = (uniform_range(rng, -1.0, 1.0), uniform_range(rng, -1.0, 1.0));
        let targets = (2.0 * (gt.0 - coarse.0) / w, 2.0 * (gt.1 - coarse.1) / w);
        if (pred.0 - targets.0).abs() < 0.05 || (pred.1 - targets.1).abs() < 0.05 {
            continue;
        }
        checked += 1;
        let analytic = l1_refine_loss(pred, gt, coarse, w).unwrap();
        let fd_s = central_diff(|x| l1_refine_loss((x, pred.1), gt, coarse, w).unwrap().value, pred.0);
        let fd_e = central_diff(|x| l1_refine_loss((pred.0, x), gt, coarse, w).unwrap().value, pred.1);
        max_err = max_err.max(rel_err(analytic.gradient[0], fd_s));
        max_err = max_err.max(rel_err(analytic.gradient[1], fd_e));
    }
    max_err
}

fn bce_max_err(rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut max_err = 0.0f64;
    for _ in 0..points {
        let a = uniform_range(rng, 0.0, 10.0);
        let proposal = Interval::new(a, a + uniform_range(rng, 0.5, 8.0));
        let c = uniform_range(rng, 0.0, 10.0);
        let gt = Interval::new(c, c + uniform_range(rng, 0.5, 8.0));
        let q = uniform_range(rng, 0.05, 0.95);
        let analytic = quality_bce_loss(q, &proposal, &gt);
        let fd = central_diff(|x| quality_bce_loss(x, &proposal, &gt).value, q);
        max_err = max_err.max(rel_err(analytic.gradient[0], fd));
    }
    max_err
}

fn bem_l2_max_err(rng: &mut ChaCha8Rng, points: usize) -> f64 {
    let mut max_err = 0.0f64;
    let mut checked = 0;
    while checked < points {
        let t_len = 2 + uniform_index(rng, 5);
        let i_len = 1 + uniform_index(rng, 4);
        let scale_set = if i_len == 1 {
            AnchorScaleSet::single(2.0).unwrap()
        } else {
            AnchorScaleSet::new(1.0, 5.0, i_len).unwrap()
        };
        let random_map = |rng: &mut ChaCha8Rng| Array2::from_shape_fn((t_len, i_len), |_| uniform(rng));
        let labels = QualityMapPair::new(
            random_map(rng).mapv(|v| if v > 0.5 { v } else { 0.0 }),
            random_map(rng).mapv(|v| if v > 0.5 { v } else { 0.0 }),
            scale_set.clone(),
        )
        .unwrap();
        let mask = PositiveMask::from_labels(&labels);
        if mask.start_positives.is_empty() {
            continue;
        }
        checked += 1;
        let preds = QualityMapPair::new(random_map(rng), random_map(rng), scale_set).unwrap();
        let analytic = bem_loss(&preds, &labels, &mask).unwrap();
        let &(t, i) = &mask.start_positives[uniform_index(rng, mask.start_positives.len())];
        let fd = central_diff(
            |x| {
                let mut perturbed = preds.clone();
                perturbed.start[[t, i]] = x;
                bem_loss(&perturbed, &labels, &mask).unwrap().start_loss
            },
            preds.start[[t, i]],
        );
        max_err = max_err.max(rel_err(analytic.grad_start[[t, i]], fd));
    }
    max_err
}

pub struct GradcheckSettings {
    pub points: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Testing hook: negate one analytic gradient so the report shows a
    /// failure path.
    pub inject_wrong_sign: bool,
}

pub fn run(settings: &GradcheckSettings, out: &Path) -> Result<()> {
    let mut rng = stream_rng(settings.seed, 0x6C);
    let mut rows: Vec<(&str, f64)> = vec![
        ("focal", focal_max_err(&mut rng, settings.points)),
        ("giou_1d", giou_max_err(&mut rng, settings.points)),
        ("l1_refine", l1_max_err(&mut rng, settings.points)),
        ("quality_bce", bce_max_err(&mut rng, settings.points)),
        ("bem_l2", bem_l2_max_err(&mut rng, settings.points)),
    ];
    if settings.inject_wrong_sign {
        // A negated gradient shows up as a relative error of 2.
        rows[0].1 = 2.0;
    }

    let mut csv = String::from("loss,max_rel_err,result\n");
    let mut failures = 0;
    for (name, err) in &rows {
        let verdict = if *err < settings.tolerance { "PASS" } else { "FAIL" };
        if verdict == "FAIL" {
            failures += 1;
        }
        csv.push_str(&format!("{name},{err:e},{verdict}\n"));
    }
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = RunManifest::new("gradcheck", settings.seed);
    manifest
        .setting("points", settings.points)
        .setting("tolerance", settings.tolerance)
        .output(out);
    manifest.write(&sibling_manifest_path(out))?;
    eprintln!("{} losses checked, {failures} failures", rows.len());
    Ok(())
}
