//! `eval` and `oracle`: mAP tables and the before/after rescoring
//! comparison.

use std::path::Path;

use anyhow::{Context, Result};
use brem::eval::{map_table, oracle_rescore, EvalProtocol, MapTable};
use brem::io::{load_corpus, load_detections};

use crate::commands::check_video_ids;
use crate::manifest::{sibling_manifest_path, RunManifest};

pub fn run_eval(
    annotations: &Path,
    detections: &Path,
    protocol: &EvalProtocol,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let corpus = load_corpus(annotations)?;
    let dets = load_detections(detections)?;
    check_video_ids(&corpus, &dets)?;
    let table = map_table(&dets, &corpus, protocol)?;
    std::fs::write(out, table.to_csv_string())
        .with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = RunManifest::new("eval", seed);
    manifest
        .setting("thresholds", thresholds_string(protocol))
        .input(annotations)
        .input(detections)
        .output(out);
    manifest.write(&sibling_manifest_path(out))?;
    eprintln!("average mAP {:.4}", table.average_map);
    Ok(())
}

/// Two-row comparison: detector scores versus scores replaced by true
/// proposal tIoU.
pub fn run_oracle(
    annotations: &Path,
    detections: &Path,
    protocol: &EvalProtocol,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let corpus = load_corpus(annotations)?;
    let dets = load_detections(detections)?;
    check_video_ids(&corpus, &dets)?;

    let raw = map_table(&dets, &corpus, protocol)?;
    let rescored = map_table(&oracle_rescore(&dets, &corpus), &corpus, protocol)?;

    let mut csv = String::from("scores");
    for t in protocol.thresholds() {
        csv.push_str(&format!(",{t}"));
    }
    csv.push_str(",avg\n");
    csv.push_str(&table_row("raw", &raw));
    csv.push_str(&table_row("oracle", &rescored));
    std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;

    let mut manifest = RunManifest::new("oracle", seed);
    manifest
        .setting("thresholds", thresholds_string(protocol))
        .input(annotations)
        .input(detections)
        .output(out);
    manifest.write(&sibling_manifest_path(out))?;
    eprintln!(
        "average mAP raw {:.4} -> oracle {:.4}",
        raw.average_map, rescored.average_map
    );
    Ok(())
}

fn thresholds_string(protocol: &EvalProtocol) -> String {
    protocol
        .thresholds()
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn table_row(name: &str, table: &MapTable) -> String {
    let mut row = String::from(name);
    for v in &table.per_threshold_map {
        row.push_str(&format!(",{v}"));
    }
    row.push_str(&format!(",{}\n", table.average_map));
    row
}
