//! Reconstruction-error anomaly scores, score files and triptych dumps.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::images_to_tensor;
use crate::datamodel::{DatasetSplit, ImageTensor, Label, CHANNELS};
use crate::error::{Error, Result};
use crate::networks::{tensor_to_f32, ImageEncoder, ImageGenerator};

/// Examples per forward pass when scoring a split.
pub const SCORE_BATCH: usize = 64;

/// How per-pixel squared errors are reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Squared L2 norm over all pixels and channels.
    #[default]
    Sum,
    /// The sum divided by the number of values.
    Mean,
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
        })
    }
}

impl FromStr for Reduction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Reduction::Sum),
            "mean" => Ok(Reduction::Mean),
            _ => Err(Error::config("score_reduction", format!("expected sum or mean, got `{s}`"))),
        }
    }
}

/// Anything that maps an image batch to per-example anomaly scores.
pub trait Scorer {
    /// Reconstructions `(B, 3, S, S)` of a batch.
    fn reconstruct(&self, x: &Tensor) -> Tensor;

    /// Per-example scores `(B)` in double precision, summed squared error by
    /// default.
    fn score(&self, x: &Tensor) -> Tensor {
        squared_error(x, &self.reconstruct(x))
    }
}

/// Encoder followed by generator, scored by `||x - G(E(x))||^2`.
pub struct Pipeline<'a> {
    pub encoder: &'a dyn ImageEncoder,
    pub generator: &'a dyn ImageGenerator,
}

impl Scorer for Pipeline<'_> {
    fn reconstruct(&self, x: &Tensor) -> Tensor {
        self.generator.generate(&self.encoder.encode(x))
    }
}

/// Per-example sum of squared differences, computed in `f64`.
pub fn squared_error(x: &Tensor, y: &Tensor) -> Tensor {
    (x.to_kind(Kind::Double) - y.to_kind(Kind::Double))
        .square()
        .flatten(1, -1)
        .sum_dim_intlist([1i64].as_slice(), false, None::<Kind>)
}

fn to_image(t: &Tensor) -> Result<ImageTensor> {
    let size = t.size()[2] as usize;
    ImageTensor::from_clamped(size, tensor_to_f32(t))
}

/// `G_v(G_l(x))` for a single image.
pub fn reconstruct<E, G>(x: &ImageTensor, gl: &E, gv: &G) -> Result<ImageTensor>
where
    E: ImageEncoder,
    G: ImageGenerator,
{
    let batch = images_to_tensor([x], Kind::Float);
    let out = tch::no_grad(|| gv.generate(&gl.encode(&batch)));
    to_image(&out.get(0))
}

/// Squared reconstruction error of a single image.
pub fn anomaly_score<E, G>(x: &ImageTensor, gl: &E, gv: &G) -> f64
where
    E: ImageEncoder,
    G: ImageGenerator,
{
    let batch = images_to_tensor([x], Kind::Float);
    let scorer = Pipeline {
        encoder: gl,
        generator: gv,
    };
    tch::no_grad(|| scorer.score(&batch)).double_value(&[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredExample {
    pub source_id: String,
    pub label: Label,
    pub score: f64,
    pub reconstruction: Option<ImageTensor>,
}

/// Score every example of `split` in order.
pub fn score_dataset(
    split: &DatasetSplit,
    scorer: &dyn Scorer,
    dump_reconstructions: bool,
    reduction: Reduction,
) -> Result<Vec<ScoredExample>> {
    let mut out = Vec::with_capacity(split.len());
    for chunk in split.examples.chunks(SCORE_BATCH) {
        let x = images_to_tensor(chunk.iter().map(|e| &e.image), Kind::Float);
        let (scores, recon) = tch::no_grad(|| {
            let scores = scorer.score(&x);
            let recon = dump_reconstructions.then(|| scorer.reconstruct(&x));
            (scores, recon)
        });
        let per_example = (x.numel() / chunk.len()) as f64;
        let scores = Vec::<f64>::try_from(&scores.to_kind(Kind::Double))?;
        for (i, (ex, mut score)) in chunk.iter().zip(scores).enumerate() {
            if reduction == Reduction::Mean {
                score /= per_example;
            }
            if !(score.is_finite() && score >= 0.0) {
                return Err(Error::Eval(format!("score of {} is {score}", ex.source_id)));
            }
            let reconstruction = match &recon {
                Some(r) => Some(to_image(&r.get(i as i64))?),
                None => None,
            };
            out.push(ScoredExample {
                source_id: ex.source_id.clone(),
                label: ex.label,
                score,
                reconstruction,
            });
        }
    }
    Ok(out)
}

/// Header line of a score file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoresHeader {
    pub method: String,
    pub config_hash: String,
    pub reduction: Reduction,
    pub seed: u64,
}

/// Write `# method=.. config_hash=.. reduction=.. seed=..` then one
/// `source_id<TAB>label<TAB>score` row per example. Scores use the shortest
/// representation that parses back to the same `f64`.
pub fn write_scores(path: &Path, header: &ScoresHeader, scored: &[ScoredExample]) -> Result<()> {
    let mut text = format!(
        "# method={} config_hash={} reduction={} seed={}\n",
        header.method, header.config_hash, header.reduction, header.seed
    );
    for s in scored {
        text.push_str(&format!("{}\t{}\t{:?}\n", s.source_id, s.label, s.score));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_scores(path: &Path) -> Result<(ScoresHeader, Vec<ScoredExample>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut header = ScoresHeader {
        method: String::new(),
        config_hash: String::new(),
        reduction: Reduction::Sum,
        seed: 0,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("method", v)) => header.method = v.to_string(),
                    Some(("config_hash", v)) => header.config_hash = v.to_string(),
                    Some(("reduction", v)) => header.reduction = v.parse()?,
                    Some(("seed", v)) => {
                        header.seed = v.parse().map_err(|_| bad(i + 1, format!("bad seed `{v}`")))?
                    }
                    _ => {}
                }
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 fields, got {}", fields.len())));
        }
        rows.push(ScoredExample {
            source_id: fields[0].to_string(),
            label: fields[1].parse().map_err(|e: Error| bad(i + 1, e.to_string()))?,
            score: fields[2]
                .parse()
                .map_err(|_| bad(i + 1, format!("bad score `{}`", fields[2])))?,
            reconstruction: None,
        });
    }
    Ok((header, rows))
}

/// Input, reconstruction and absolute difference side by side as 8-bit RGB.
/// The difference `|x - r|` in `[0, 2]` is mapped linearly onto `[0, 255]`.
pub fn triptych(input: &ImageTensor, recon: &ImageTensor) -> Result<image::RgbImage> {
    let s = input.size();
    if recon.size() != s {
        return Err(Error::Shape(format!("triptych of {s}px input and {}px reconstruction", recon.size())));
    }
    let to_u8 = |v: f32| ((v.clamp(0.0, 1.0) * 255.0).round()) as u8;
    let mut img = image::RgbImage::new(3 * s as u32, s as u32);
    for y in 0..s {
        for x in 0..s {
            let mut px = [[0u8; 3]; 3];
            for c in 0..CHANNELS {
                let a = input.at(c, y, x);
                let b = recon.at(c, y, x);
                px[0][c] = to_u8((a + 1.0) / 2.0);
                px[1][c] = to_u8((b + 1.0) / 2.0);
                px[2][c] = to_u8((a - b).abs() / 2.0);
            }
            for (k, p) in px.iter().enumerate() {
                img.put_pixel((k * s + x) as u32, y as u32, image::Rgb(*p));
            }
        }
    }
    Ok(img)
}

/// Write `<source_id>_triptych.png` for every scored example carrying a
/// reconstruction. Returns the number of files written.
pub fn write_triptychs(dir: &Path, split: &DatasetSplit, scored: &[ScoredExample]) -> Result<usize> {
    let mut written = 0;
    for (ex, s) in split.examples.iter().zip(scored) {
        let Some(recon) = &s.reconstruction else { continue };
        let path = dir.join(format!("{}_triptych.png", s.source_id));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        triptych(&ex.image, recon)?
            .save(&path)
            .map_err(|source| Error::Decode { path: path.clone(), source })?;
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthConfig};
    use crate::datamodel::{LabeledExample, SplitName};
    use crate::networks::{Architecture, LatentGenerator, VisualGenerator};

    /// Returns its input, or a constant image when `fill` is set.
    struct Stub {
        fill: Option<f64>,
    }

    impl Scorer for Stub {
        fn reconstruct(&self, x: &Tensor) -> Tensor {
            match self.fill {
                Some(v) => x.ones_like() * v,
                None => x.shallow_clone(),
            }
        }
    }

    fn split(n: usize, size: usize) -> DatasetSplit {
        let corpus = synth_generate(&SynthConfig {
            n_normal: n.max(1) + 2,
            n_abnormal: 1,
            n_validation: 1,
            n_test_normal: 1,
            image_size: size,
            lesion_radius_range: (2.0, 4.0),
            ..SynthConfig::default()
        })
        .unwrap();
        DatasetSplit::new(SplitName::Train, corpus.train.examples[..n].to_vec()).unwrap()
    }

    #[test]
    fn identity_scores_zero_and_inverse_scores_closed_form() {
        let s = split(3, 16);
        let zero = score_dataset(&s, &Stub { fill: None }, false, Reduction::Sum).unwrap();
        assert!(zero.iter().all(|r| r.score == 0.0 && r.reconstruction.is_none()));

        let ones = ImageTensor::filled(64, 1.0).unwrap();
        let ex = LabeledExample {
            image: ones,
            label: Label::Normal,
            patient_id: 1,
            source_id: "ones".into(),
        };
        let s = DatasetSplit::new(SplitName::Test, vec![ex]).unwrap();
        let r = score_dataset(&s, &Stub { fill: Some(-1.0) }, false, Reduction::Sum).unwrap();
        assert_eq!(r[0].score, 49152.0);
        let r = score_dataset(&s, &Stub { fill: Some(-1.0) }, false, Reduction::Mean).unwrap();
        assert_eq!(r[0].score, 4.0);
    }

    #[test]
    fn empty_split_gives_no_rows() {
        let s = DatasetSplit::empty(SplitName::Test);
        assert!(score_dataset(&s, &Stub { fill: None }, true, Reduction::Sum).unwrap().is_empty());
    }

    #[test]
    fn batched_scores_match_single_scores() {
        let arch = Architecture::reduced();
        let gl = LatentGenerator::new(arch, 3, Kind::Float);
        let gv = VisualGenerator::new(arch, 3, Kind::Float);
        let s = split(70, 16);
        let scorer = Pipeline {
            encoder: &gl,
            generator: &gv,
        };
        let batched = score_dataset(&s, &scorer, true, Reduction::Sum).unwrap();
        assert_eq!(batched.len(), 70);
        for (ex, row) in s.examples.iter().zip(&batched) {
            let single = anomaly_score(&ex.image, &gl, &gv);
            assert!((single - row.score).abs() < 1e-6, "{single} vs {}", row.score);
            let recon = reconstruct(&ex.image, &gl, &gv).unwrap();
            assert!(recon.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
            let batched_recon = row.reconstruction.as_ref().unwrap();
            assert!(recon.pixels().iter().zip(batched_recon.pixels()).all(|(a, b)| (a - b).abs() < 1e-6));
            assert_eq!(row.source_id, ex.source_id);
        }
        let again = score_dataset(&s, &scorer, false, Reduction::Sum).unwrap();
        assert!(again.iter().zip(&batched).all(|(a, b)| a.score == b.score));
    }

    #[test]
    fn score_file_round_trip_is_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let rows: Vec<ScoredExample> = [0.1 + 0.2, 1e-300, 12345.678901234567, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &score)| ScoredExample {
                source_id: format!("test_{i:05}"),
                label: if i % 2 == 0 { Label::Normal } else { Label::Abnormal },
                score,
                reconstruction: None,
            })
            .collect();
        let header = ScoresHeader {
            method: "adgan".into(),
            config_hash: "abc".into(),
            reduction: Reduction::Sum,
            seed: 7,
        };
        let path = tmp.path().join("s.tsv");
        write_scores(&path, &header, &rows).unwrap();
        let (h, back) = read_scores(&path).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, rows);
    }

    #[test]
    fn triptych_layout() {
        let a = ImageTensor::filled(4, 1.0).unwrap();
        let b = ImageTensor::filled(4, -1.0).unwrap();
        let img = triptych(&a, &b).unwrap();
        assert_eq!(img.dimensions(), (12, 4));
        assert_eq!(img.get_pixel(0, 0).0, [255; 3]);
        assert_eq!(img.get_pixel(4, 0).0, [0; 3]);
        assert_eq!(img.get_pixel(8, 0).0, [255; 3]);
        assert!(triptych(&a, &ImageTensor::filled(8, 0.0).unwrap()).is_err());
    }

    #[test]
    fn triptych_files_only_when_dumped() {
        let tmp = tempfile::tempdir().unwrap();
        let s = split(2, 16);
        let plain = score_dataset(&s, &Stub { fill: None }, false, Reduction::Sum).unwrap();
        assert_eq!(write_triptychs(tmp.path(), &s, &plain).unwrap(), 0);
        let dumped = score_dataset(&s, &Stub { fill: None }, true, Reduction::Sum).unwrap();
        assert_eq!(write_triptychs(tmp.path(), &s, &dumped).unwrap(), 2);
        assert!(tmp.path().join(format!("{}_triptych.png", s.examples[0].source_id)).exists());
    }
}
