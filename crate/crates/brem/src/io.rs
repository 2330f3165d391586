//! File formats: annotation and detection JSON, matrix dumps, and the
//! named-tensor parameter container.
//!
//! Annotation JSON:
//! `{"videos": {id: {"duration": sec, "fps": real, "annotations":
//! [{"segment": [s, e], "label": str}]}}}` with segments in seconds.
//!
//! Detection JSON maps each video id to a list of
//! `{"segment": [start_sec, end_sec], "label": str, "score": real}`.
//!
//! Matrix dumps are row-major (one row per timestep, one column per anchor
//! scale), either CSV or a little-endian binary layout
//! `[u32 rows][u32 cols][f64 × rows·cols]`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{BemHeadParams, HeadParams};

/// One annotated action segment, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSegment {
    pub segment: [f64; 2],
    pub label: String,
}

/// Annotations of a single video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    /// Video duration in seconds.
    pub duration: f64,
    /// Feature timesteps per second.
    pub fps: f64,
    pub annotations: Vec<AnnotatedSegment>,
}

/// An annotation corpus keyed by video id (ordered for reproducible output).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub videos: BTreeMap<String, VideoAnnotation>,
}

/// One scored detection, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub segment: [f64; 2],
    pub label: String,
    pub score: f64,
}

/// Detections per video id.
pub type DetectionSet = BTreeMap<String, Vec<DetectionRecord>>;

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    let corpus: Corpus = serde_json::from_str(&text)?;
    for (id, video) in &corpus.videos {
        if !(video.duration.is_finite() && video.duration > 0.0) {
            return Err(Error::InvalidConfig(format!("video {id}: duration must be positive")));
        }
        if !(video.fps.is_finite() && video.fps > 0.0) {
            return Err(Error::InvalidConfig(format!("video {id}: fps must be positive")));
        }
        for seg in &video.annotations {
            if seg.segment[0] > seg.segment[1] {
                return Err(Error::InvalidConfig(format!(
                    "video {id}: segment [{}, {}] is inverted",
                    seg.segment[0], seg.segment[1]
                )));
            }
        }
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(corpus)?)?;
    Ok(())
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_detections(dets: &DetectionSet, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(dets)?)?;
    Ok(())
}

/// Write a matrix as CSV, one timestep row per line.
pub fn write_matrix_csv<W: Write>(matrix: &Array2<f64>, mut out: W) -> Result<()> {
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|tok| tok.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            Error::InvalidConfig(format!("csv line {}: {e}", lineno + 1))
        })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidConfig(format!(
                    "csv line {}: expected {} columns, got {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n_rows, n_cols), flat)
        .map_err(|e| Error::InvalidConfig(format!("csv shape: {e}")))
}

/// Write a matrix in the binary layout `[u32 rows][u32 cols][f64 ...]`,
/// little-endian, row-major.
pub fn write_matrix_bin<W: Write>(matrix: &Array2<f64>, mut out: W) -> Result<()> {
    let (rows, cols) = matrix.dim();
    out.write_all(&(rows as u32).to_le_bytes())?;
    out.write_all(&(cols as u32).to_le_bytes())?;
    for v in matrix.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_bin<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut header = [0u8; 8];
    input.read_exact(&mut header)?;
    let rows = u32::from_le_bytes(header[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = [0u8; 8];
    for slot in data.iter_mut() {
        input.read_exact(&mut buf)?;
        *slot = f64::from_le_bytes(buf);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::InvalidConfig(format!("binary matrix shape: {e}")))
}

/// JSON container of named arrays with explicit shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorContainer {
    arrays: BTreeMap<String, NamedArray>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NamedArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl NamedArray {
    fn scalar(v: f64) -> Self {
        Self { shape: vec![], data: vec![v] }
    }

    fn vector(v: &Array1<f64>) -> Self {
        Self { shape: vec![v.len()], data: v.to_vec() }
    }

    fn matrix(m: &Array2<f64>) -> Self {
        Self { shape: vec![m.dim().0, m.dim().1], data: m.iter().copied().collect() }
    }
}

pub fn save_bem_params(params: &BemHeadParams, path: &Path) -> Result<()> {
    let mut arrays = BTreeMap::new();
    arrays.insert("reduction".to_string(), NamedArray::matrix(&params.reduction));
    arrays.insert("start_weight".to_string(), NamedArray::vector(&params.start.weight));
    arrays.insert("start_bias".to_string(), NamedArray::scalar(params.start.bias));
    arrays.insert("end_weight".to_string(), NamedArray::vector(&params.end.weight));
    arrays.insert("end_bias".to_string(), NamedArray::scalar(params.end.bias));
    let container = TensorContainer { arrays };
    std::fs::write(path, serde_json::to_string_pretty(&container)?)?;
    Ok(())
}

pub fn load_bem_params(path: &Path) -> Result<BemHeadParams> {
    let text = std::fs::read_to_string(path)?;
    let container: TensorContainer = serde_json::from_str(&text)?;
    let get = |name: &str| {
        container
            .arrays
            .get(name)
            .ok_or_else(|| Error::InvalidConfig(format!("missing array {name:?}")))
    };
    let matrix = |name: &str| -> Result<Array2<f64>> {
        let a = get(name)?;
        if a.shape.len() != 2 {
            return Err(Error::InvalidConfig(format!("{name:?} must be 2-d")));
        }
        Array2::from_shape_vec((a.shape[0], a.shape[1]), a.data.clone())
            .map_err(|e| Error::InvalidConfig(format!("{name:?}: {e}")))
    };
    let vector = |name: &str| -> Result<Array1<f64>> {
        let a = get(name)?;
        if a.shape.len() != 1 || a.shape[0] != a.data.len() {
            return Err(Error::InvalidConfig(format!("{name:?} must be 1-d")));
        }
        Ok(Array1::from_vec(a.data.clone()))
    };
    let scalar = |name: &str| -> Result<f64> {
        let a = get(name)?;
        if a.data.len() != 1 {
            return Err(Error::InvalidConfig(format!("{name:?} must hold one value")));
        }
        Ok(a.data[0])
    };
    Ok(BemHeadParams {
        reduction: matrix("reduction")?,
        start: HeadParams { weight: vector("start_weight")?, bias: scalar("start_bias")? },
        end: HeadParams { weight: vector("end_weight")?, bias: scalar("end_bias")? },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn corpus_round_trips_losslessly() {
        let mut videos = BTreeMap::new();
        videos.insert(
            "video_0001".to_string(),
            VideoAnnotation {
                duration: 120.5,
                fps: 1.0,
                annotations: vec![AnnotatedSegment {
                    segment: [3.0000000001, 17.25],
                    label: "class_02".to_string(),
                }],
            },
        );
        let corpus = Corpus { videos };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.json");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert_eq!(corpus, loaded);
    }

    #[test]
    fn malformed_json_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, "{\"videos\": [not json").unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::Json(_))));
    }

    #[test]
    fn inverted_segment_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"videos": {"v": {"duration": 10.0, "fps": 1.0,
                "annotations": [{"segment": [5.0, 2.0], "label": "a"}]}}}"#,
        )
        .unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = array![[0.25, 1.0 / 3.0], [1e-9, 0.999999]];
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let back = read_matrix_csv(&buf[..]).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn matrix_bin_round_trip() {
        let m = array![[0.25, -1.5, 3.0], [1e-300, 0.0, 7.125]];
        let mut buf = Vec::new();
        write_matrix_bin(&m, &mut buf).unwrap();
        let back = read_matrix_bin(&buf[..]).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn bem_params_round_trip() {
        let params = BemHeadParams::seeded(4, 123);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        save_bem_params(&params, &path).unwrap();
        let back = load_bem_params(&path).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn bem_params_missing_array_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        std::fs::write(&path, r#"{"arrays": {}}"#).unwrap();
        let err = load_bem_params(&path).unwrap_err();
        assert!(err.to_string().contains("reduction"));
    }
}
