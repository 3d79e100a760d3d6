//! Synthetic one-class corpus: smooth mucosa-like textures for normal frames
//! and the same textures carrying one smooth-edged circular lesion for
//! abnormal frames.
//!
//! Every image is a pure function of `(seed, split, index)`, so corpora are
//! reproducible and can be generated in any order.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetSplit, ImageTensor, Label, LabeledExample, SplitName, CHANNELS};
use crate::error::{Error, Result};
use crate::seed;

use super::Corpus;

/// Base colour of the texture, in `[0, 1]` intensity units.
const BASE_COLOR: [f64; 3] = [0.72, 0.42, 0.38];
const LUMA_AMPLITUDE: f64 = 0.12;
const LUMA_COLOR: [f64; 3] = [1.0, 0.8, 0.8];
const TINT_AMPLITUDE: f64 = 0.05;
const TINT_COLOR: [f64; 3] = [0.2, -0.5, -0.5];
const LESION_COLOR: [f64; 3] = [0.9, 0.7, 0.3];

/// Patients hold this many consecutive frames each.
const FRAMES_PER_PATIENT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Normal images across all three splits.
    pub n_normal: usize,
    /// Abnormal images, all in the test split.
    pub n_abnormal: usize,
    pub image_size: usize,
    /// Correlation length of the texture, in pixels.
    pub texture_scale: f64,
    pub lesion_radius_range: (f64, f64),
    pub lesion_contrast: f64,
    pub seed: u64,
    /// Normals reserved for validation.
    pub n_validation: usize,
    /// Normals reserved for the test split.
    pub n_test_normal: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_normal: 2300,
            n_abnormal: 86,
            image_size: 32,
            texture_scale: 6.0,
            lesion_radius_range: (3.0, 6.0),
            lesion_contrast: 0.25,
            seed: 0,
            n_validation: 100,
            n_test_normal: 200,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::config("image_size", "must be positive"));
        }
        if !(self.texture_scale.is_finite() && self.texture_scale > 0.0) {
            return Err(Error::config("texture_scale", "must be positive"));
        }
        let (lo, hi) = self.lesion_radius_range;
        if !(lo > 0.0 && lo <= hi && hi < self.image_size as f64 / 2.0) {
            return Err(Error::config(
                "lesion_radius_range",
                format!(
                    "need 0 < min <= max < image_size/2, got ({lo}, {hi}) for size {}",
                    self.image_size
                ),
            ));
        }
        if !(self.lesion_contrast > 0.0 && self.lesion_contrast <= 1.0) {
            return Err(Error::config("lesion_contrast", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Split sizes `(train, validation, test normal)`; test and validation
    /// normals are reserved first.
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let test = self.n_test_normal.min(self.n_normal);
        let validation = self.n_validation.min(self.n_normal - test);
        (self.n_normal - test - validation, validation, test)
    }
}

/// A circular lesion with a cosine-tapered rim that stays inside its radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lesion {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
    pub contrast: f64,
}

impl Lesion {
    /// Weight in `[0, 1]` at pixel centre `(x + 0.5, y + 0.5)`; zero at and
    /// beyond the radius.
    pub fn weight(&self, y: usize, x: usize) -> f64 {
        let d = ((x as f64 + 0.5 - self.cx).powi(2) + (y as f64 + 0.5 - self.cy).powi(2)).sqrt();
        let rim = (self.radius / 2.0).min(2.0);
        let t = ((self.radius - d) / rim).clamp(0.0, 1.0);
        0.5 - 0.5 * (std::f64::consts::PI * t).cos()
    }

    /// Whether pixel `(y, x)` has its centre inside the disc.
    pub fn contains(&self, y: usize, x: usize) -> bool {
        ((x as f64 + 0.5 - self.cx).powi(2) + (y as f64 + 0.5 - self.cy).powi(2)).sqrt() < self.radius
    }

    /// Add the lesion to a normalized image, saturating at +1.
    pub fn apply(&self, image: &ImageTensor) -> ImageTensor {
        let n = image.size();
        let mut px = image.pixels().to_vec();
        for (c, colour) in LESION_COLOR.iter().enumerate() {
            for y in 0..n {
                for x in 0..n {
                    let w = self.weight(y, x);
                    if w > 0.0 {
                        let i = (c * n + y) * n + x;
                        // Intensity offsets double when mapped onto [-1, 1].
                        let v = f64::from(px[i]) + 2.0 * self.contrast * colour * w;
                        px[i] = v.clamp(-1.0, 1.0) as f32;
                    }
                }
            }
        }
        ImageTensor::new(n, px).expect("lesion keeps pixels in range")
    }
}

/// Smoothly interpolated lattice noise with unit-variance lattice values.
fn value_noise<R: Rng>(rng: &mut R, size: usize, scale: f64) -> Vec<f64> {
    let cells = (size as f64 / scale).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..cells * cells)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let taps: Vec<(usize, f64)> = (0..size)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale;
            let i0 = u.floor() as usize;
            let t = u - i0 as f64;
            (i0, t * t * (3.0 - 2.0 * t))
        })
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for &(y0, ty) in &taps {
        for &(x0, tx) in &taps {
            let g = |y: usize, x: usize| lattice[y * cells + x];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// A normal texture drawn from `rng`.
pub fn texture<R: Rng>(rng: &mut R, size: usize, scale: f64) -> ImageTensor {
    let coarse = value_noise(rng, size, scale);
    let fine = value_noise(rng, size, scale / 2.0);
    let tint = value_noise(rng, size, scale * 1.5);
    let plane = size * size;
    let mut px = vec![0.0f32; CHANNELS * plane];
    for c in 0..CHANNELS {
        for i in 0..plane {
            let luma = 0.7 * coarse[i] + 0.3 * fine[i];
            let v = BASE_COLOR[c]
                + LUMA_AMPLITUDE * luma * LUMA_COLOR[c]
                + TINT_AMPLITUDE * tint[i] * TINT_COLOR[c];
            px[c * plane + i] = (v.clamp(0.0, 1.0) * 2.0 - 1.0) as f32;
        }
    }
    ImageTensor::new(size, px).expect("texture in range")
}

/// Draw lesion geometry with the disc fully inside the frame.
pub fn sample_lesion<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Lesion {
    let (lo, hi) = cfg.lesion_radius_range;
    let radius = if hi > lo { rng.random_range(lo..hi) } else { lo };
    let n = cfg.image_size as f64;
    let cx = rng.random_range(radius..=n - radius);
    let cy = rng.random_range(radius..=n - radius);
    Lesion {
        cx,
        cy,
        radius,
        contrast: cfg.lesion_contrast,
    }
}

/// A normal frame and its lesioned twin sharing one texture.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub normal: ImageTensor,
    pub abnormal: ImageTensor,
    pub lesion: Lesion,
}

/// Generate the pair for `texture_seed` under `cfg`.
pub fn synth_pair(cfg: &SynthConfig, texture_seed: u64) -> SynthPair {
    let mut rng = seed::rng(texture_seed, "synth/texture");
    let normal = texture(&mut rng, cfg.image_size, cfg.texture_scale);
    let lesion = sample_lesion(&mut rng, cfg);
    let abnormal = lesion.apply(&normal);
    SynthPair {
        normal,
        abnormal,
        lesion,
    }
}

fn texture_seed(cfg: &SynthConfig, split: SplitName, index: usize) -> u64 {
    seed::derive(cfg.seed, &format!("synth/{split}/{index}"))
}

fn example(split: SplitName, label: Label, index: usize, image: ImageTensor) -> LabeledExample {
    let offset = match split {
        SplitName::Train => 0,
        SplitName::Validation => 1_000_000,
        SplitName::Test => 2_000_000,
    };
    let kind = match (split, label) {
        (SplitName::Test, Label::Normal) => "test_normal".to_string(),
        (SplitName::Test, Label::Abnormal) => "test_abnormal".to_string(),
        (s, _) => s.to_string(),
    };
    LabeledExample {
        image,
        label,
        patient_id: offset + (index / FRAMES_PER_PATIENT) as u64,
        source_id: format!("{kind}_{index:05}"),
    }
}

/// Generate train, validation and test splits.
///
/// Test abnormal `i` shares its texture with test normal `i` while such a
/// normal exists, which gives paired (normal, lesioned) test images.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let (n_train, n_val, n_test) = cfg.split_sizes();
    let normals = |split: SplitName, n: usize| -> Vec<LabeledExample> {
        (0..n)
            .map(|i| {
                let pair = synth_pair(cfg, texture_seed(cfg, split, i));
                example(split, Label::Normal, i, pair.normal)
            })
            .collect()
    };
    let train = normals(SplitName::Train, n_train);
    let validation = normals(SplitName::Validation, n_val);
    let mut test = normals(SplitName::Test, n_test);
    for i in 0..cfg.n_abnormal {
        let pair = synth_pair(cfg, texture_seed(cfg, SplitName::Test, i));
        test.push(example(SplitName::Test, Label::Abnormal, i, pair.abnormal));
    }
    Corpus::new(
        DatasetSplit::new(SplitName::Train, train)?,
        DatasetSplit::new(SplitName::Validation, validation)?,
        DatasetSplit::new(SplitName::Test, test)?,
    )
}

/// Indices `(normal, abnormal)` into the test split of texture-sharing pairs.
pub fn test_pairs(cfg: &SynthConfig) -> Vec<(usize, usize)> {
    let (_, _, n_test) = cfg.split_sizes();
    (0..cfg.n_abnormal.min(n_test)).map(|i| (i, n_test + i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_normal: 30,
            n_abnormal: 6,
            n_validation: 5,
            n_test_normal: 10,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn split_sizes_and_labels() {
        let corpus = synth_generate(&small()).unwrap();
        assert_eq!(corpus.train.len(), 15);
        assert_eq!(corpus.validation.len(), 5);
        assert_eq!(corpus.test.len(), 16);
        assert_eq!(corpus.test.count(Label::Abnormal), 6);
    }

    #[test]
    fn no_abnormals_means_all_normal_test() {
        let cfg = SynthConfig {
            n_abnormal: 0,
            ..small()
        };
        let corpus = synth_generate(&cfg).unwrap();
        assert!(corpus.test.examples.iter().all(|e| e.label == Label::Normal));
    }

    #[test]
    fn same_seed_bit_identical() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&SynthConfig { seed: 12, ..small() }).unwrap();
        assert_ne!(a.train.examples[0].image, c.train.examples[0].image);
    }

    #[test]
    fn lesion_difference_stays_in_disc() {
        let cfg = SynthConfig {
            image_size: 32,
            lesion_radius_range: (8.0, 8.0),
            lesion_contrast: 1.0,
            ..small()
        };
        let gray = ImageTensor::filled(32, 0.0).unwrap();
        let mut rng = seed::rng(3, "lesion-test");
        for _ in 0..20 {
            let lesion = sample_lesion(&mut rng, &cfg);
            let lesioned = lesion.apply(&gray);
            let (mut inside, mut outside) = (0.0, 0.0);
            for c in 0..3 {
                for y in 0..32 {
                    for x in 0..32 {
                        let d = f64::from((lesioned.at(c, y, x) - gray.at(c, y, x)).abs());
                        if lesion.contains(y, x) {
                            inside += d;
                        } else {
                            outside += d;
                        }
                    }
                }
            }
            assert!(inside > 0.0);
            assert!(inside / (inside + outside) >= 0.95);
        }
    }

    #[test]
    fn pairs_share_texture() {
        let cfg = small();
        let corpus = synth_generate(&cfg).unwrap();
        for (n, a) in test_pairs(&cfg) {
            let normal = &corpus.test.examples[n];
            let abnormal = &corpus.test.examples[a];
            assert_eq!(normal.label, Label::Normal);
            assert_eq!(abnormal.label, Label::Abnormal);
            let differing = normal
                .image
                .pixels()
                .iter()
                .zip(abnormal.image.pixels())
                .filter(|(p, q)| p != q)
                .count();
            assert!(differing > 0);
            assert!(differing < 3 * 32 * 32 / 2);
        }
    }

    #[test]
    fn radius_range_validated() {
        let cfg = SynthConfig {
            lesion_radius_range: (3.0, 16.0),
            ..small()
        };
        assert!(synth_generate(&cfg).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn images_in_range(seed in 0u64..1000, contrast in 0.05f64..=1.0) {
            let cfg = SynthConfig { lesion_contrast: contrast, ..SynthConfig::default() };
            let pair = synth_pair(&cfg, seed);
            for img in [&pair.normal, &pair.abnormal] {
                proptest::prop_assert!(img.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
            }
        }
    }
}
