//! Domain types shared by every stage of the pipeline: images, latent codes,
//! labelled examples, dataset splits and the experiment configuration.
//!
//! Images are stored channel-first `(3, H, W)` with intensities normalized to
//! `[-1, 1]`, which matches the saturating output of the visual generator.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of colour channels in every image.
pub const CHANNELS: usize = 3;

/// A raster in raw 8-bit intensity units, channel-first.
///
/// Values are `f32` so that resampled (non-integral) intensities survive
/// between pipeline stages; the nominal range is `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RawImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "raw image buffer has {} values, expected {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Build from interleaved 8-bit RGB (the layout image decoders produce).
    pub fn from_rgb8(height: usize, width: usize, interleaved: &[u8]) -> Result<Self> {
        if interleaved.len() != CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "rgb buffer has {} bytes, expected {}",
                interleaved.len(),
                CHANNELS * height * width
            )));
        }
        let plane = height * width;
        let mut data = vec![0.0; CHANNELS * plane];
        for (i, px) in interleaved.chunks_exact(CHANNELS).enumerate() {
            for c in 0..CHANNELS {
                data[c * plane + i] = f32::from(px[c]);
            }
        }
        Self::new(CHANNELS, height, width, data)
    }

    /// Interleaved 8-bit RGB, rounding and clamping to `[0, 255]`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..plane {
            for c in 0..self.channels {
                out.push(self.data[c * plane + i].round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }
}

/// A square RGB image with intensities in `[-1, 1]`, channel-first.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    size: usize,
    pixels: Vec<f32>,
}

impl ImageTensor {
    /// Wrap already-normalized pixels, checking shape and range.
    pub fn new(size: usize, pixels: Vec<f32>) -> Result<Self> {
        if size == 0 {
            return Err(Error::Image("image size must be positive".into()));
        }
        if pixels.len() != CHANNELS * size * size {
            return Err(Error::Shape(format!(
                "image buffer has {} values, expected 3x{size}x{size}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Image(format!("pixel value {bad} outside [-1, 1]")));
        }
        Ok(Self { size, pixels })
    }

    /// Like [`ImageTensor::new`] but clamps into range instead of rejecting.
    /// Used for network outputs, which are bounded up to float rounding.
    pub fn from_clamped(size: usize, mut pixels: Vec<f32>) -> Result<Self> {
        for p in &mut pixels {
            if !p.is_finite() {
                return Err(Error::Image("non-finite pixel".into()));
            }
            *p = p.clamp(-1.0, 1.0);
        }
        Self::new(size, pixels)
    }

    pub fn filled(size: usize, value: f32) -> Result<Self> {
        Self::new(size, vec![value; CHANNELS * size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    /// Value at channel `c`, row `y`, column `x`.
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.size + y) * self.size + x]
    }

    /// Channel-mean grayscale plane, row-major.
    pub fn grayscale(&self) -> Vec<f64> {
        let plane = self.size * self.size;
        (0..plane)
            .map(|i| {
                (0..CHANNELS)
                    .map(|c| f64::from(self.pixels[c * plane + i]))
                    .sum::<f64>()
                    / CHANNELS as f64
            })
            .collect()
    }
}

/// Map raw `[0, 255]` intensities to `[-1, 1]` via `v / 127.5 - 1`.
pub fn normalize_image(raw: &RawImage) -> Result<ImageTensor> {
    if raw.channels != CHANNELS {
        return Err(Error::Image(format!(
            "expected {CHANNELS} channels, got {}",
            raw.channels
        )));
    }
    if !raw.is_square() {
        return Err(Error::Image(format!(
            "expected a square image, got {}x{}",
            raw.height, raw.width
        )));
    }
    if let Some(bad) = raw
        .data
        .iter()
        .find(|v| !v.is_finite() || !(0.0..=255.0).contains(*v))
    {
        return Err(Error::Image(format!("raw value {bad} outside [0, 255]")));
    }
    let pixels = raw
        .data
        .iter()
        .map(|&v| ((f64::from(v) / 127.5) - 1.0) as f32)
        .collect();
    ImageTensor::new(raw.height, pixels)
}

/// Inverse of [`normalize_image`].
pub fn denormalize_image(image: &ImageTensor) -> RawImage {
    let data = image
        .pixels
        .iter()
        .map(|&v| ((f64::from(v) + 1.0) * 127.5) as f32)
        .collect();
    RawImage {
        channels: CHANNELS,
        height: image.size,
        width: image.size,
        data,
    }
}

/// A point in the latent code space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f32>);

impl LatentVector {
    /// Draw each coordinate from the uniform prior on `[-1, 1]`.
    pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        LatentVector((0..dim).map(|_| rng.random_range(-1.0f32..=1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::Dataset(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Dataset(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub image: ImageTensor,
    pub label: Label,
    pub patient_id: u64,
    pub source_id: String,
}

/// An ordered list of examples belonging to one split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub examples: Vec<LabeledExample>,
}

impl DatasetSplit {
    /// Build a split, rejecting abnormal examples in train/validation splits.
    pub fn new(name: SplitName, examples: Vec<LabeledExample>) -> Result<Self> {
        let split = Self { name, examples };
        split.check_labels()?;
        Ok(split)
    }

    pub fn empty(name: SplitName) -> Self {
        Self {
            name,
            examples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Common image size, or `None` for an empty split.
    pub fn image_size(&self) -> Option<usize> {
        self.examples.first().map(|e| e.image.size())
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    pub fn patient_ids(&self) -> BTreeSet<u64> {
        self.examples.iter().map(|e| e.patient_id).collect()
    }

    /// Train and validation splits hold normal examples only.
    pub fn check_labels(&self) -> Result<()> {
        if self.name == SplitName::Test {
            return Ok(());
        }
        if let Some(bad) = self.examples.iter().find(|e| e.label != Label::Normal) {
            return Err(Error::Dataset(format!(
                "{} split contains abnormal example `{}`",
                self.name, bad.source_id
            )));
        }
        Ok(())
    }
}

/// The test split must not share patients with train or validation.
pub fn check_patient_disjoint(splits: &[&DatasetSplit]) -> Result<()> {
    let mut fit = BTreeSet::new();
    let mut test = BTreeSet::new();
    for split in splits {
        match split.name {
            SplitName::Test => test.extend(split.patient_ids()),
            _ => fit.extend(split.patient_ids()),
        }
    }
    if let Some(p) = fit.intersection(&test).next() {
        return Err(Error::Dataset(format!(
            "patient {p} appears in both test and train/validation splits"
        )));
    }
    Ok(())
}

/// Where the gradient penalty is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpAt {
    /// Random convex combinations of real and generated images.
    #[default]
    Interpolates,
    /// The generated images themselves.
    Fakes,
}

/// How the latent generator turns its last feature map into a code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentHead {
    /// Global average pool, then a linear map.
    #[default]
    Pool,
    /// Linear map of the whole flattened feature map.
    Flatten,
}

fn default_gp_at() -> GpAt {
    GpAt::Interpolates
}

fn default_kappa() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the latent generator's adversarial term.
    pub alpha: f64,
    /// Weight of the latent-cycle MSE term.
    pub beta: f64,
    /// Gradient-penalty weight.
    pub lambda_gp: f64,
    #[serde(default = "default_gp_at")]
    pub gp_at: GpAt,
    /// Weight of the critic-feature residual in the f-AnoGAN hybrid score.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            lambda_gp: 10.0,
            gp_at: GpAt::Interpolates,
            kappa: 1.0,
        }
    }
}

fn default_latent_beta1() -> f64 {
    0.5
}
fn default_latent_beta2() -> f64 {
    0.999
}
fn default_image_size() -> usize {
    64
}
fn default_width_divisor() -> usize {
    1
}
fn default_checkpoint_every() -> u64 {
    500
}

/// Full description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total iterations `N`.
    pub total_iters: u64,
    /// Visual-only iterations `T`, must be `< N`.
    pub phase1_iters: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Adam constants for the visual pair.
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub loss: LossConfig,
    /// Adam constants for the latent pair.
    #[serde(default = "default_latent_beta1")]
    pub latent_adam_beta1: f64,
    #[serde(default = "default_latent_beta2")]
    pub latent_adam_beta2: f64,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    /// Divides every filter count of every network (1 = full width).
    #[serde(default = "default_width_divisor")]
    pub width_divisor: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    /// Also used by the encoders of the baselines.
    #[serde(default)]
    pub latent_head: LatentHead,
    /// Step size of the latent pair; `learning_rate` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_learning_rate: Option<f64>,
}

impl Default for TrainConfig {
    /// Full-scale schedule: 80k visual-only iterations followed by 20k joint ones.
    fn default() -> Self {
        Self {
            total_iters: 100_000,
            phase1_iters: 80_000,
            batch_size: 64,
            learning_rate: 1e-4,
            adam_beta1: 0.0,
            adam_beta2: 0.9,
            critic_steps: 5,
            latent_dim: 128,
            seed: 0,
            loss: LossConfig::default(),
            latent_adam_beta1: default_latent_beta1(),
            latent_adam_beta2: default_latent_beta2(),
            image_size: default_image_size(),
            width_divisor: default_width_divisor(),
            checkpoint_every: default_checkpoint_every(),
            latent_head: LatentHead::Pool,
            latent_learning_rate: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale schedule that trains on a single CPU in minutes.
    ///
    /// With only a thousand joint iterations, a pooled head and the shared
    /// step size leave the latent generator far from inverting the visual
    /// one, so the desk preset flattens and steps ten times faster.
    pub fn desk() -> Self {
        Self {
            total_iters: 3000,
            phase1_iters: 2000,
            image_size: 32,
            width_divisor: 8,
            latent_head: LatentHead::Flatten,
            latent_learning_rate: Some(1e-3),
            ..Self::default()
        }
    }

    pub fn latent_lr(&self) -> f64 {
        self.latent_learning_rate.unwrap_or(self.learning_rate)
    }

    /// Parse a JSON document; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        validate_config(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Filter ladder `(64, 128, 256, 512)` scaled by the width divisor.
    pub fn filters(&self) -> [i64; 4] {
        [64, 128, 256, 512].map(|f| (f / self.width_divisor) as i64)
    }

    /// Latent discriminator hidden widths `(256, 128, 64)` scaled by the width divisor.
    pub fn latent_hidden(&self) -> [i64; 3] {
        [256, 128, 64].map(|f| (f / self.width_divisor) as i64)
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<()> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1), got {v}")))
    }
}

/// Check every configuration invariant, returning the config unchanged.
pub fn validate_config(cfg: TrainConfig) -> Result<TrainConfig> {
    if cfg.total_iters == 0 {
        return Err(Error::config("total_iters", "must be positive"));
    }
    if cfg.phase1_iters == 0 {
        return Err(Error::config("phase1_iters", "must be positive"));
    }
    if cfg.phase1_iters >= cfg.total_iters {
        return Err(Error::config(
            "phase1_iters",
            format!(
                "must be smaller than total_iters ({} >= {})",
                cfg.phase1_iters, cfg.total_iters
            ),
        ));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size", "must be positive"));
    }
    positive("learning_rate", cfg.learning_rate)?;
    if let Some(lr) = cfg.latent_learning_rate {
        positive("latent_learning_rate", lr)?;
    }
    unit_interval("adam_beta1", cfg.adam_beta1)?;
    unit_interval("adam_beta2", cfg.adam_beta2)?;
    unit_interval("latent_adam_beta1", cfg.latent_adam_beta1)?;
    unit_interval("latent_adam_beta2", cfg.latent_adam_beta2)?;
    if cfg.critic_steps == 0 {
        return Err(Error::config("critic_steps", "must be positive"));
    }
    if cfg.latent_dim == 0 {
        return Err(Error::config("latent_dim", "must be positive"));
    }
    positive("alpha", cfg.loss.alpha)?;
    positive("beta", cfg.loss.beta)?;
    positive("lambda_gp", cfg.loss.lambda_gp)?;
    if !(cfg.loss.kappa.is_finite() && cfg.loss.kappa >= 0.0) {
        return Err(Error::config("kappa", "must be nonnegative"));
    }
    if cfg.image_size < 16 || !cfg.image_size.is_multiple_of(16) {
        return Err(Error::config(
            "image_size",
            format!("must be a positive multiple of 16, got {}", cfg.image_size),
        ));
    }
    if cfg.width_divisor == 0 || 64 % cfg.width_divisor != 0 {
        return Err(Error::config(
            "width_divisor",
            format!("must divide 64, got {}", cfg.width_divisor),
        ));
    }
    if cfg.checkpoint_every == 0 {
        return Err(Error::config("checkpoint_every", "must be positive"));
    }
    Ok(cfg)
}
