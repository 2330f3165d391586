//! Cross-module integration: generated corpora survive their file formats
//! and feed the downstream stages.

use brem::corpus::{generate_ground_truth, generate_noisy_detections, CorpusConfig, NoiseConfig};
use brem::eval::{map_table, EvalProtocol};
use brem::io::{
    load_corpus, load_detections, read_matrix_bin, read_matrix_csv, save_corpus, save_detections,
    write_matrix_bin, write_matrix_csv,
};
use brem::quality::{multi_scale_quality_maps, AnchorScaleSet};
use brem::{GroundTruthAction, Interval};

fn small_corpus() -> brem::io::Corpus {
    generate_ground_truth(&CorpusConfig {
        videos: 15,
        duration_range: (80.0, 200.0),
        actions_per_video: (1, 3),
        classes: 4,
        action_duration: (3.0, 60.0),
        fps: 2.0,
        seed: 99,
    })
    .unwrap()
}

#[test]
fn generated_corpus_round_trips_through_json() {
    let corpus = small_corpus();
    let dets = generate_noisy_detections(&corpus, &NoiseConfig::default(), 99).unwrap();
    let dir = tempfile::tempdir().unwrap();

    let ann_path = dir.path().join("annotations.json");
    save_corpus(&corpus, &ann_path).unwrap();
    assert_eq!(load_corpus(&ann_path).unwrap(), corpus);

    let det_path = dir.path().join("detections.json");
    save_detections(&dets, &det_path).unwrap();
    assert_eq!(load_detections(&det_path).unwrap(), dets);

    // Writing again produces identical bytes.
    let first = std::fs::read(&ann_path).unwrap();
    save_corpus(&corpus, &ann_path).unwrap();
    assert_eq!(first, std::fs::read(&ann_path).unwrap());
}

#[test]
fn quality_map_dumps_round_trip_in_both_formats() {
    let corpus = small_corpus();
    let video = corpus.videos.values().next().unwrap();
    let actions: Vec<GroundTruthAction> = video
        .annotations
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            GroundTruthAction::new(
                Interval::new(seg.segment[0] * video.fps, seg.segment[1] * video.fps),
                k,
            )
        })
        .collect();
    let len = (video.duration * video.fps).round() as usize;
    let maps = multi_scale_quality_maps(&actions, len, &AnchorScaleSet::new(1.0, 50.0, 20).unwrap());

    let mut csv = Vec::new();
    write_matrix_csv(&maps.start, &mut csv).unwrap();
    assert_eq!(read_matrix_csv(&csv[..]).unwrap(), maps.start);

    let mut bin = Vec::new();
    write_matrix_bin(&maps.end, &mut bin).unwrap();
    assert_eq!(read_matrix_bin(&bin[..]).unwrap(), maps.end);
}

#[test]
fn generated_corpus_evaluates_end_to_end() {
    let corpus = small_corpus();
    let dets = generate_noisy_detections(&corpus, &NoiseConfig::default(), 99).unwrap();
    let table = map_table(&dets, &corpus, &EvalProtocol::thumos()).unwrap();
    assert!(table.average_map > 0.0 && table.average_map < 1.0);
    assert_eq!(table.per_threshold_map.len(), 5);
}
