//! `label-maps`: dump ground-truth boundary quality maps per video.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use brem::io::{load_corpus, write_matrix_bin, write_matrix_csv};
use brem::quality::{multi_scale_quality_maps, AnchorScaleSet};

use crate::commands::{class_list, format_anchor_set, video_actions, video_len};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Csv,
    Bin,
}

impl MapFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "csv" => Ok(Self::Csv),
            "bin" => Ok(Self::Bin),
            other => bail!("format must be `csv` or `bin`, got {other:?}"),
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Bin => "bin",
        }
    }
}

pub fn run(
    annotations: &Path,
    scale_set: &AnchorScaleSet,
    format: MapFormat,
    out_dir: &Path,
    seed: u64,
) -> Result<()> {
    let corpus = load_corpus(annotations)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let classes = class_list(&corpus, &Default::default());
    let mut manifest = RunManifest::new("label-maps", seed);
    manifest
        .setting("anchor-set", format_anchor_set(scale_set))
        .setting("format", format.extension())
        .input(annotations);

    for (id, video) in &corpus.videos {
        let actions = video_actions(video, &classes);
        let maps = multi_scale_quality_maps(&actions, video_len(video), scale_set);
        for (side, map) in [("start", &maps.start), ("end", &maps.end)] {
            let path = out_dir.join(format!("{id}_{side}.{}", format.extension()));
            let file = BufWriter::new(
                File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            match format {
                MapFormat::Csv => write_matrix_csv(map, file)?,
                MapFormat::Bin => write_matrix_bin(map, file)?,
            }
            manifest.output(&path);
        }
    }
    manifest.write(&out_dir.join("manifest.json"))?;
    eprintln!("wrote {} map pairs to {}", corpus.videos.len(), out_dir.display());
    Ok(())
}
