//! Folder + manifest corpus layout.
//!
//! The manifest is tab-separated, one record per line:
//! `relative_path  patient_id  label  split`. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datamodel::{
    denormalize_image, normalize_image, DatasetSplit, ImageTensor, Label, LabeledExample, RawImage,
    SplitName,
};
use crate::error::{Error, Result};

use super::{resize_image, Corpus};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub path: String,
    pub patient_id: u64,
    pub label: Label,
    pub split: SplitName,
}

impl ManifestRecord {
    /// Source id: the relative path without its extension.
    pub fn source_id(&self) -> String {
        match self.path.rsplit_once('.') {
            Some((stem, ext)) if !ext.contains('/') => stem.to_string(),
            _ => self.path.clone(),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 tab-separated fields, got {}", fields.len())));
        }
        let patient_id = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad patient id `{}`", fields[1])))?;
        let label = fields[2].parse().map_err(|e: Error| bad(e.to_string()))?;
        let split = fields[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        records.push(ManifestRecord {
            path: fields[0].to_string(),
            patient_id,
            label,
            split,
        });
    }
    Ok(records)
}

fn decode(path: &Path) -> Result<RawImage> {
    let img = image::open(path)
        .map_err(|source| Error::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    RawImage::from_rgb8(h as usize, w as usize, img.as_raw())
}

/// Decode, resize and normalize every manifest entry under `root`.
///
/// Fails on unreadable files, abnormal train/validation entries, and
/// patients shared between the test split and the others.
pub fn ingest_folder(root: &Path, manifest: &[ManifestRecord], image_size: usize) -> Result<Corpus> {
    let mut by_split: BTreeMap<SplitName, Vec<LabeledExample>> = BTreeMap::new();
    for record in manifest {
        let raw = decode(&root.join(&record.path))?;
        let raw = resize_image(&raw, image_size)?;
        by_split.entry(record.split).or_default().push(LabeledExample {
            image: normalize_image(&raw)?,
            label: record.label,
            patient_id: record.patient_id,
            source_id: record.source_id(),
        });
    }
    let mut take = |name| DatasetSplit::new(name, by_split.remove(&name).unwrap_or_default());
    Corpus::new(
        take(SplitName::Train)?,
        take(SplitName::Validation)?,
        take(SplitName::Test)?,
    )
}

/// Write `image` as an 8-bit PNG.
pub fn write_png(path: &Path, image: &ImageTensor) -> Result<()> {
    let raw = denormalize_image(image);
    let buf = image::RgbImage::from_raw(raw.width as u32, raw.height as u32, raw.to_rgb8())
        .expect("buffer matches dimensions");
    buf.save(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a corpus as `<source_id>.png` files plus a manifest, in split
/// order. Returns the manifest path.
pub fn write_corpus(corpus: &Corpus, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::new();
    for name in SplitName::ALL {
        for ex in &corpus.split(name).examples {
            let rel = format!("{}.png", ex.source_id);
            let path = root.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_png(&path, &ex.image)?;
            manifest.push_str(&format!("{rel}\t{}\t{}\t{}\n", ex.patient_id, ex.label, name));
        }
    }
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};

    fn write_manifest(dir: &Path, lines: &[String]) -> PathBuf {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, lines.join("\n")).unwrap();
        path
    }

    fn write_solid(dir: &Path, name: &str, size: u32, v: u8) {
        image::RgbImage::from_pixel(size, size, image::Rgb([v, v / 2, v / 3]))
            .save(dir.join(name))
            .unwrap();
    }

    #[test]
    fn empty_manifest_gives_empty_splits() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &[]);
        let corpus = ingest_folder(dir.path(), &read_manifest(&path).unwrap(), 16).unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn shared_patient_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_solid(dir.path(), "a.png", 20, 100);
        write_solid(dir.path(), "b.png", 20, 50);
        let path = write_manifest(
            dir.path(),
            &["a.png\t7\tnormal\ttrain".into(), "b.png\t7\tabnormal\ttest".into()],
        );
        let err = ingest_folder(dir.path(), &read_manifest(&path).unwrap(), 16).unwrap_err();
        assert!(err.to_string().contains("patient 7"));
    }

    #[test]
    fn label_counts_follow_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut lines = Vec::new();
        for i in 0..10 {
            let name = format!("f{i}.png");
            write_solid(dir.path(), &name, 24, (i * 20) as u8);
            let label = if i < 7 { "normal" } else { "abnormal" };
            lines.push(format!("{name}\t{}\t{label}\ttest", 100 + i));
        }
        let path = write_manifest(dir.path(), &lines);
        let corpus = ingest_folder(dir.path(), &read_manifest(&path).unwrap(), 16).unwrap();
        assert_eq!(corpus.test.len(), 10);
        assert_eq!(corpus.test.count(Label::Abnormal), 3);
        assert_eq!(corpus.test.image_size(), Some(16));
        assert_eq!(corpus.test.examples[0].source_id, "f0");
    }

    #[test]
    fn missing_file_and_bad_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(dir.path(), &["gone.png\t1\tnormal\ttrain".into()]);
        assert!(ingest_folder(dir.path(), &read_manifest(&path).unwrap(), 16).is_err());
        let path = write_manifest(dir.path(), &["x.png\t1\tweird\ttrain".into()]);
        assert!(matches!(read_manifest(&path), Err(Error::Manifest { line: 1, .. })));
        let path = write_manifest(dir.path(), &["x.png\t1\tnormal".into()]);
        assert!(read_manifest(&path).is_err());
    }

    #[test]
    fn abnormal_train_entry_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_solid(dir.path(), "a.png", 16, 10);
        let path = write_manifest(dir.path(), &["a.png\t1\tabnormal\ttrain".into()]);
        assert!(ingest_folder(dir.path(), &read_manifest(&path).unwrap(), 16).is_err());
    }

    #[test]
    fn synthetic_corpus_round_trips() {
        let cfg = SynthConfig {
            n_normal: 12,
            n_abnormal: 3,
            n_validation: 2,
            n_test_normal: 4,
            image_size: 16,
            lesion_radius_range: (2.0, 4.0),
            ..SynthConfig::default()
        };
        let corpus = synth_generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(&corpus, dir.path()).unwrap();
        let back = ingest_folder(dir.path(), &read_manifest(&manifest).unwrap(), 16).unwrap();
        for name in SplitName::ALL {
            let (a, b) = (corpus.split(name), back.split(name));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.examples.iter().zip(&b.examples) {
                assert_eq!(x.label, y.label);
                assert_eq!(x.patient_id, y.patient_id);
                assert_eq!(x.source_id, y.source_id);
                // 8-bit quantization error is at most half a grey level.
                for (p, q) in x.image.pixels().iter().zip(y.image.pixels()) {
                    assert!((p - q).abs() <= 0.5 / 127.5 + 1e-6);
                }
            }
        }
    }
}
