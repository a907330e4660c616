//! Self-describing dataset directories: four IDX files, `manifest.json` and
//! a JSON-lines generation log with the anchors of every image.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{PixelGrid, Point, StampKind};
use crate::generator::{DatasetPair, DatasetSpec, Exhaustion, Histogram, LabeledSet, Placement, Split};
use crate::idx::{self, IdxError, IdxImageSet, IdxLabelSet};
use crate::sampler::PixelPartition;
use crate::trainer::Samples;

pub const MANIFEST: &str = "manifest.json";
pub const GENERATION_LOG: &str = "generation.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Idx { path: PathBuf, source: IdxError },
    #[error("no {0} file (plain or .gz) in the directory")]
    Missing(&'static str),
    #[error("{0}: {1}")]
    Json(PathBuf, serde_json::Error),
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub width: usize,
    pub height: usize,
    pub partition: Option<PixelPartition>,
    pub train_histogram: Histogram,
    pub test_histogram: Histogram,
    pub exhaustion: Vec<Exhaustion>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LogLine {
    split: Split,
    index: usize,
    label: u8,
    centers: Vec<Point>,
    /// One glyph symbol per center.
    stamps: String,
}

fn file_names(gzip: bool) -> [(String, &'static str); 4] {
    let ext = if gzip { ".gz" } else { "" };
    [
        (format!("{}{ext}", idx::TRAIN_IMAGES), idx::TRAIN_IMAGES),
        (format!("{}{ext}", idx::TRAIN_LABELS), idx::TRAIN_LABELS),
        (format!("{}{ext}", idx::TEST_IMAGES), idx::TEST_IMAGES),
        (format!("{}{ext}", idx::TEST_LABELS), idx::TEST_LABELS),
    ]
}

fn to_idx(set: &LabeledSet) -> Result<(IdxImageSet, IdxLabelSet), IdxError> {
    let pixels = set.images.iter().flat_map(|g| g.data().iter().copied()).collect();
    Ok((
        IdxImageSet::new(set.len() as u32, set.height as u32, set.width as u32, pixels)?,
        IdxLabelSet::new(set.labels.clone())?,
    ))
}

/// Writes `pair` into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, pair: &DatasetPair, gzip: bool) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir)?;
    let names = file_names(gzip);
    let idx_err = |path: PathBuf| move |source| DatasetError::Idx { path, source };
    for (split, [(img_name, _), (lbl_name, _)]) in [
        (Split::Train, [names[0].clone(), names[1].clone()]),
        (Split::Test, [names[2].clone(), names[3].clone()]),
    ] {
        let (images, labels) = to_idx(pair.split(split)).map_err(idx_err(dir.join(&img_name)))?;
        let bytes = idx::write_images(&images).map_err(idx_err(dir.join(&img_name)))?;
        idx::write_file_bytes(&dir.join(&img_name), &bytes, gzip).map_err(idx_err(dir.join(&img_name)))?;
        let bytes = idx::write_labels(&labels).map_err(idx_err(dir.join(&lbl_name)))?;
        idx::write_file_bytes(&dir.join(&lbl_name), &bytes, gzip).map_err(idx_err(dir.join(&lbl_name)))?;
    }

    let mut log = BufWriter::new(fs::File::create(dir.join(GENERATION_LOG))?);
    for split in [Split::Train, Split::Test] {
        let set = pair.split(split);
        for (index, (p, &label)) in set.placements.iter().zip(&set.labels).enumerate() {
            let line = LogLine {
                split,
                index,
                label,
                centers: p.centers.clone(),
                stamps: p.stamps.iter().map(|s| s.symbol()).collect(),
            };
            serde_json::to_writer(&mut log, &line).expect("log lines serialize");
            log.write_all(b"\n")?;
        }
    }
    log.flush()?;

    let manifest = Manifest {
        spec: pair.spec.clone(),
        width: pair.train.width,
        height: pair.train.height,
        partition: pair.partition.clone(),
        train_histogram: pair.train.histogram(),
        test_histogram: pair.test.histogram(),
        exhaustion: pair.exhaustion.clone(),
        files: names.iter().map(|(n, _)| n.clone()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join(MANIFEST), text + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Json(path, e))
}

fn load_split(dir: &Path, images: &'static str, labels: &'static str) -> Result<(IdxImageSet, IdxLabelSet), DatasetError> {
    let img_path = idx::locate(dir, images).ok_or(DatasetError::Missing(images))?;
    let lbl_path = idx::locate(dir, labels).ok_or(DatasetError::Missing(labels))?;
    let imgs = idx::load_images(&img_path).map_err(|source| DatasetError::Idx {
        path: img_path.clone(),
        source,
    })?;
    let lbls = idx::load_labels(&lbl_path).map_err(|source| DatasetError::Idx {
        path: lbl_path.clone(),
        source,
    })?;
    if imgs.count as usize != lbls.count() {
        return Err(DatasetError::Inconsistent(format!(
            "{} images but {} labels",
            imgs.count,
            lbls.count()
        )));
    }
    Ok((imgs, lbls))
}

/// Training and test samples of a directory; no manifest needed, so plain
/// MNIST directories load too.
pub fn load_samples(dir: &Path) -> Result<(Samples, Samples), DatasetError> {
    let mut out = Vec::new();
    for (images, labels) in [
        (idx::TRAIN_IMAGES, idx::TRAIN_LABELS),
        (idx::TEST_IMAGES, idx::TEST_LABELS),
    ] {
        let (i, l) = load_split(dir, images, labels)?;
        out.push(Samples::from_idx(&i, &l).map_err(|e| DatasetError::Inconsistent(e.to_string()))?);
    }
    let test = out.pop().unwrap();
    Ok((out.pop().unwrap(), test))
}

fn labeled_set(images: IdxImageSet, labels: IdxLabelSet) -> LabeledSet {
    let (w, h) = (images.cols as usize, images.rows as usize);
    let grids = images
        .images()
        .map(|px| PixelGrid::from_raw(w, h, px.to_vec()).expect("image length checked by reader"))
        .collect();
    LabeledSet {
        width: w,
        height: h,
        images: grids,
        labels: labels.labels,
        placements: Vec::new(),
    }
}

fn read_log(path: &Path, pair: &mut DatasetPair) -> Result<(), DatasetError> {
    for set in [&mut pair.train, &mut pair.test] {
        set.placements = vec![Placement::default(); set.len()];
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut seen = [0usize; 2];
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogLine =
            serde_json::from_str(&line).map_err(|e| DatasetError::Json(path.to_path_buf(), e))?;
        let set = match entry.split {
            Split::Train => &mut pair.train,
            Split::Test => &mut pair.test,
        };
        let Some(slot) = set.placements.get_mut(entry.index) else {
            return Err(DatasetError::Inconsistent(format!(
                "log names {} image {} of {}",
                entry.split,
                entry.index,
                set.len()
            )));
        };
        if set.labels[entry.index] != entry.label {
            return Err(DatasetError::Inconsistent(format!(
                "log label {} differs from IDX label {} at {} image {}",
                entry.label, set.labels[entry.index], entry.split, entry.index
            )));
        }
        let stamps: Option<Vec<StampKind>> = entry.stamps.chars().map(StampKind::from_symbol).collect();
        let stamps = stamps
            .filter(|s| s.len() == entry.centers.len())
            .ok_or_else(|| DatasetError::Inconsistent(format!("bad stamps {:?}", entry.stamps)))?;
        *slot = Placement {
            centers: entry.centers,
            stamps,
        };
        seen[entry.split as usize] += 1;
    }
    if seen != [pair.train.len(), pair.test.len()] {
        return Err(DatasetError::Inconsistent(format!(
            "generation log covers {seen:?} images, IDX files hold {}/{}",
            pair.train.len(),
            pair.test.len()
        )));
    }
    Ok(())
}

/// Reloads a directory written by [`write_dataset`].
pub fn load_dataset(dir: &Path) -> Result<DatasetPair, DatasetError> {
    let manifest = read_manifest(dir)?;
    let (ti, tl) = load_split(dir, idx::TRAIN_IMAGES, idx::TRAIN_LABELS)?;
    let (ei, el) = load_split(dir, idx::TEST_IMAGES, idx::TEST_LABELS)?;
    let mut pair = DatasetPair {
        spec: manifest.spec,
        train: labeled_set(ti, tl),
        test: labeled_set(ei, el),
        partition: manifest.partition,
        exhaustion: manifest.exhaustion,
    };
    if (pair.train.width, pair.train.height) != (manifest.width, manifest.height)
        || (pair.test.width, pair.test.height) != (manifest.width, manifest.height)
    {
        return Err(DatasetError::Inconsistent("image size differs from manifest".into()));
    }
    if pair.train.histogram() != manifest.train_histogram || pair.test.histogram() != manifest.test_histogram {
        return Err(DatasetError::Inconsistent("label histogram differs from manifest".into()));
    }
    let log = dir.join(GENERATION_LOG);
    if log.exists() {
        read_log(&log, &mut pair)?;
    }
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_pair, Series, Variant};

    #[test]
    fn directory_round_trip() {
        let spec = DatasetSpec::new(Series::A2, Variant::Hard)
            .with_m(3)
            .with_counts(300, 100)
            .with_seed(4);
        let pair = generate_pair(&spec).unwrap();
        for gzip in [false, true] {
            let dir = tempfile::tempdir().unwrap();
            let manifest = write_dataset(dir.path(), &pair, gzip).unwrap();
            assert_eq!(manifest.files[0].ends_with(".gz"), gzip);
            assert_eq!(load_dataset(dir.path()).unwrap(), pair);
            let (train, test) = load_samples(dir.path()).unwrap();
            assert_eq!((train.len(), test.len()), (300, 100));
        }
    }

    #[test]
    fn tampered_label_is_caught() {
        let pair = generate_pair(&DatasetSpec::new(Series::M2, Variant::Disjunct).with_counts(50, 20)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &pair, false).unwrap();
        let path = dir.path().join(idx::TEST_LABELS);
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] = (bytes[last] + 1) % 10;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DatasetError::Inconsistent(_))));
    }
}
