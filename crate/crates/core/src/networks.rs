//! The four networks of the dual GAN and the parameter storage they share.
//!
//! * [`VisualGenerator`]: latent code to image, residual up-sampling stages.
//! * [`VisualDiscriminator`]: Wasserstein critic, residual down-sampling stages,
//!   linear output and no batch-coupled layers.
//! * [`LatentGenerator`]: image to latent code, strided convolutions, global
//!   average pooling and a linear head.
//! * [`LatentDiscriminator`]: MLP on latent codes with a sigmoid output.
//!
//! Layers are plain functions over `tch` tensors so that every parameter is
//! owned by a [`ParameterSet`] with a stable, layer-scoped name.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tch::{Kind, Tensor};

use crate::datamodel::{LatentHead, TrainConfig, CHANNELS};
use crate::error::{Error, Result};
use crate::seed;

const LEAK: f64 = 0.2;

fn leaky_relu(x: &Tensor) -> Tensor {
    x.maximum(&(x * LEAK))
}

/// Named trainable arrays of one network.
#[derive(Debug)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    fn push(&mut self, name: String, tensor: Tensor) -> Tensor {
        assert!(
            self.entries.iter().all(|(n, _)| *n != name),
            "duplicate parameter `{name}`"
        );
        let tensor = tensor.set_requires_grad(true);
        let handle = tensor.shallow_clone();
        self.entries.push((name, tensor));
        handle
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.entries.iter().map(|(_, t)| t).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Number of scalar parameters.
    pub fn total_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn kind(&self) -> Kind {
        self.entries.first().map_or(Kind::Float, |(_, t)| t.kind())
    }

    pub fn is_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|(_, t)| t.isfinite().all().int64_value(&[]) != 0)
    }

    /// SHA-256 over names, shapes and little-endian `f32` values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in &self.entries {
            h.update(name.as_bytes());
            for d in t.size() {
                h.update(d.to_le_bytes());
            }
            for v in tensor_to_f32(t) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Overwrite values in place from `other`, which must have identical names and shapes.
    pub fn copy_from(&self, other: &ParameterSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape("parameter sets differ in length".into()));
        }
        tch::no_grad(|| {
            for ((n, dst), (m, src)) in self.entries.iter().zip(&other.entries) {
                if n != m || dst.size() != src.size() {
                    return Err(Error::Shape(format!("parameter `{n}` does not match `{m}`")));
                }
                dst.shallow_clone().copy_(src);
            }
            Ok(())
        })
    }

    /// Overwrite the named entry from little-endian float data.
    pub fn load(&self, name: &str, shape: &[i64], values: &[f32]) -> Result<()> {
        let dst = self
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if dst.size() != shape {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {:?}, checkpoint has {shape:?}",
                dst.size()
            )));
        }
        let src = Tensor::from_slice(values).reshape(shape).to_kind(dst.kind());
        tch::no_grad(|| dst.shallow_clone().copy_(&src));
        Ok(())
    }

    /// Set every entry to zero.
    pub fn zero(&self) {
        tch::no_grad(|| {
            for (_, t) in &self.entries {
                let _ = t.shallow_clone().zero_();
            }
        });
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Flatten any tensor to `f32` values.
pub fn tensor_to_f32(t: &Tensor) -> Vec<f32> {
    let flat = t.detach().to_kind(Kind::Float).contiguous().view(-1);
    Vec::<f32>::try_from(&flat).expect("float tensor converts")
}

/// Builds layers into a [`ParameterSet`] with fan-in scaled uniform
/// weights (bound `1/sqrt(fan_in)`) and zero biases.
struct Builder {
    params: ParameterSet,
    rng: ChaCha8Rng,
    kind: Kind,
    prefix: &'static str,
}

impl Builder {
    fn new(prefix: &'static str, seed: u64, kind: Kind) -> Self {
        Self {
            params: ParameterSet::new(),
            rng: seed::rng(seed, &format!("init/{prefix}")),
            kind,
            prefix,
        }
    }

    fn uniform(&mut self, name: &str, shape: &[i64], fan_in: i64) -> Tensor {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: i64 = shape.iter().product();
        let values: Vec<f64> = (0..n)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        let t = Tensor::from_slice(&values).reshape(shape).to_kind(self.kind);
        self.params.push(format!("{}.{name}", self.prefix), t)
    }

    fn zeros(&mut self, name: &str, shape: &[i64]) -> Tensor {
        let t = Tensor::zeros(shape, (self.kind, tch::Device::Cpu));
        self.params.push(format!("{}.{name}", self.prefix), t)
    }

    fn conv(&mut self, name: &str, c_in: i64, c_out: i64, k: i64, stride: i64, pad: i64) -> Conv {
        Conv {
            weight: self.uniform(&format!("{name}.weight"), &[c_out, c_in, k, k], c_in * k * k),
            bias: self.zeros(&format!("{name}.bias"), &[c_out]),
            stride,
            pad,
        }
    }

    fn linear(&mut self, name: &str, d_in: i64, d_out: i64) -> Linear {
        Linear {
            weight: self.uniform(&format!("{name}.weight"), &[d_out, d_in], d_in),
            bias: self.zeros(&format!("{name}.bias"), &[d_out]),
        }
    }
}

#[derive(Debug)]
struct Conv {
    weight: Tensor,
    bias: Tensor,
    stride: i64,
    pad: i64,
}

impl Conv {
    fn forward(&self, x: &Tensor) -> Tensor {
        x.conv2d(
            &self.weight,
            Some(&self.bias),
            [self.stride, self.stride],
            [self.pad, self.pad],
            [1, 1],
            1,
        )
    }
}

#[derive(Debug)]
struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    fn forward(&self, x: &Tensor) -> Tensor {
        x.linear(&self.weight, Some(&self.bias))
    }
}

/// Sizes shared by all four networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub image_size: i64,
    pub latent_dim: i64,
    /// Critic and latent-generator filters per stage; the visual generator
    /// uses them in reverse order.
    pub filters: [i64; 4],
    pub latent_hidden: [i64; 3],
    pub latent_head: LatentHead,
}

impl Architecture {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            image_size: cfg.image_size as i64,
            latent_dim: cfg.latent_dim as i64,
            filters: cfg.filters(),
            latent_hidden: cfg.latent_hidden(),
            latent_head: cfg.latent_head,
        }
    }

    /// The smallest instance: 16x16 images, 8-d latents, filters divided by 8.
    pub fn reduced() -> Self {
        Self {
            image_size: 16,
            latent_dim: 8,
            filters: [8, 16, 32, 64],
            latent_hidden: [32, 16, 8],
            latent_head: LatentHead::Pool,
        }
    }

    /// Spatial size at the deepest stage.
    pub fn base_size(&self) -> i64 {
        self.image_size / 16
    }
}

/// Critic: images `(B, 3, S, S)` to unbounded scores `(B)`.
pub trait Critic {
    fn critic(&self, x: &Tensor) -> Tensor;
}

/// Images from latent codes `(B, Z)`.
pub trait ImageGenerator {
    fn generate(&self, z: &Tensor) -> Tensor;
}

/// Latent codes `(B, Z)` from images.
pub trait ImageEncoder {
    fn encode(&self, x: &Tensor) -> Tensor;
}

/// Logits `(B)` of "drawn from the prior" for latent codes.
pub trait LatentCritic {
    fn logits(&self, z: &Tensor) -> Tensor;
}

/// Pre-activation residual block that doubles spatial size.
#[derive(Debug)]
struct UpBlock {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
}

impl UpBlock {
    fn forward(&self, x: &Tensor) -> Tensor {
        let size = x.size();
        let up = x.upsample_nearest2d([size[2] * 2, size[3] * 2], None, None);
        let h = self.conv1.forward(&up.relu());
        let h = self.conv2.forward(&h.relu());
        h + self.skip.forward(&up)
    }
}

/// Pre-activation residual block that halves spatial size with a strided
/// convolution; the skip path average-pools then projects.
#[derive(Debug)]
struct DownBlock {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
    preactivate: bool,
}

impl DownBlock {
    fn forward(&self, x: &Tensor) -> Tensor {
        let a = if self.preactivate {
            leaky_relu(x)
        } else {
            x.shallow_clone()
        };
        let h = self.conv1.forward(&a);
        let h = self.conv2.forward(&leaky_relu(&h));
        let pooled = x.avg_pool2d([2, 2], [2, 2], [0, 0], false, true, None);
        h + self.skip.forward(&pooled)
    }
}

fn check_latent(z: &Tensor, dim: i64) -> Result<()> {
    let s = z.size();
    if s.len() != 2 || s[1] != dim {
        return Err(Error::Shape(format!("expected latent batch (B, {dim}), got {s:?}")));
    }
    Ok(())
}

fn check_images(x: &Tensor, size: i64) -> Result<()> {
    let s = x.size();
    if s.len() != 4 || s[1] != CHANNELS as i64 || s[2] != size || s[3] != size {
        return Err(Error::Shape(format!(
            "expected image batch (B, 3, {size}, {size}), got {s:?}"
        )));
    }
    Ok(())
}

/// Latent code to image, four residual up-sampling stages and a tanh output.
#[derive(Debug)]
pub struct VisualGenerator {
    params: ParameterSet,
    arch: Architecture,
    project: Linear,
    blocks: Vec<UpBlock>,
    out: Conv,
}

impl VisualGenerator {
    pub fn new(arch: Architecture, seed: u64, kind: Kind) -> Self {
        Self::with_prefix("gv", arch, seed, kind)
    }

    /// Same network under another parameter prefix (used as a decoder).
    pub fn with_prefix(prefix: &'static str, arch: Architecture, seed: u64, kind: Kind) -> Self {
        let mut b = Builder::new(prefix, seed, kind);
        let [f0, f1, f2, f3] = arch.filters;
        // Widths run deepest-first: (512, 256, 128, 64) at full size.
        let ladder = [f3, f3, f2, f1, f0];
        let base = arch.base_size();
        let project = b.linear("project", arch.latent_dim, f3 * base * base);
        let blocks = (0..4)
            .map(|i| UpBlock {
                conv1: b.conv(&format!("up{i}.conv1"), ladder[i], ladder[i + 1], 3, 1, 1),
                conv2: b.conv(&format!("up{i}.conv2"), ladder[i + 1], ladder[i + 1], 3, 1, 1),
                skip: b.conv(&format!("up{i}.skip"), ladder[i], ladder[i + 1], 1, 1, 0),
            })
            .collect();
        let out = b.conv("out", f0, CHANNELS as i64, 3, 1, 1);
        Self {
            params: b.params,
            arch,
            project,
            blocks,
            out,
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    /// Shape-checked forward pass.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        check_latent(z, self.arch.latent_dim)?;
        Ok(self.generate(z))
    }
}

impl ImageGenerator for VisualGenerator {
    fn generate(&self, z: &Tensor) -> Tensor {
        let base = self.arch.base_size();
        let mut h = self
            .project
            .forward(z)
            .view([-1, self.arch.filters[3], base, base]);
        for block in &self.blocks {
            h = block.forward(&h);
        }
        self.out.forward(&h.relu()).tanh()
    }
}

/// Wasserstein critic over images.
#[derive(Debug)]
pub struct VisualDiscriminator {
    params: ParameterSet,
    arch: Architecture,
    blocks: Vec<DownBlock>,
    head: Linear,
}

impl VisualDiscriminator {
    pub fn new(arch: Architecture, seed: u64, kind: Kind) -> Self {
        let mut b = Builder::new("dv", seed, kind);
        let [f0, f1, f2, f3] = arch.filters;
        let ladder = [CHANNELS as i64, f0, f1, f2, f3];
        let blocks = (0..4)
            .map(|i| DownBlock {
                conv1: b.conv(&format!("down{i}.conv1"), ladder[i], ladder[i + 1], 4, 2, 1),
                conv2: b.conv(&format!("down{i}.conv2"), ladder[i + 1], ladder[i + 1], 3, 1, 1),
                skip: b.conv(&format!("down{i}.skip"), ladder[i], ladder[i + 1], 1, 1, 0),
                preactivate: i > 0,
            })
            .collect();
        let base = arch.base_size();
        let head = b.linear("head", f3 * base * base, 1);
        Self {
            params: b.params,
            arch,
            blocks,
            head,
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    /// Penultimate activations `(B, F)`, the input of the linear head.
    pub fn features(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for block in &self.blocks {
            h = block.forward(&h);
        }
        leaky_relu(&h).flatten(1, -1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_images(x, self.arch.image_size)?;
        Ok(self.critic(x))
    }
}

impl Critic for VisualDiscriminator {
    fn critic(&self, x: &Tensor) -> Tensor {
        self.head.forward(&self.features(x)).squeeze_dim(1)
    }
}

/// Image to latent code.
#[derive(Debug)]
pub struct LatentGenerator {
    params: ParameterSet,
    arch: Architecture,
    convs: Vec<Conv>,
    head: Linear,
    out_dim: i64,
}

impl LatentGenerator {
    pub fn new(arch: Architecture, seed: u64, kind: Kind) -> Self {
        Self::with_output("gl", arch, arch.latent_dim, seed, kind)
    }

    /// Same trunk with a different prefix and output width (used by the
    /// auto-encoder baselines).
    pub fn with_output(prefix: &'static str, arch: Architecture, out_dim: i64, seed: u64, kind: Kind) -> Self {
        let mut b = Builder::new(prefix, seed, kind);
        let [f0, f1, f2, f3] = arch.filters;
        let ladder = [CHANNELS as i64, f0, f1, f2, f3];
        let convs = (0..4)
            .map(|i| b.conv(&format!("conv{i}"), ladder[i], ladder[i + 1], 4, 2, 1))
            .collect();
        let base = arch.base_size();
        let head_in = match arch.latent_head {
            LatentHead::Pool => f3,
            LatentHead::Flatten => f3 * base * base,
        };
        let head = b.linear("head", head_in, out_dim);
        Self {
            params: b.params,
            arch,
            convs,
            head,
            out_dim,
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn out_dim(&self) -> i64 {
        self.out_dim
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        check_images(x, self.arch.image_size)?;
        Ok(self.encode(x))
    }
}

impl ImageEncoder for LatentGenerator {
    fn encode(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for conv in &self.convs {
            h = leaky_relu(&conv.forward(&h));
        }
        let features = match self.arch.latent_head {
            LatentHead::Pool => h.mean_dim([2i64, 3].as_slice(), false, None::<Kind>),
            LatentHead::Flatten => h.flatten(1, -1),
        };
        self.head.forward(&features)
    }
}

/// Probability that a latent code was drawn from the prior.
#[derive(Debug)]
pub struct LatentDiscriminator {
    params: ParameterSet,
    arch: Architecture,
    hidden: Vec<Linear>,
    out: Linear,
}

impl LatentDiscriminator {
    pub fn new(arch: Architecture, seed: u64, kind: Kind) -> Self {
        let mut b = Builder::new("dl", seed, kind);
        let [h0, h1, h2] = arch.latent_hidden;
        let widths = [arch.latent_dim, h0, h1, h2];
        let hidden = (0..3)
            .map(|i| b.linear(&format!("fc{i}"), widths[i], widths[i + 1]))
            .collect();
        let out = b.linear("out", h2, 1);
        Self {
            params: b.params,
            arch,
            hidden,
            out,
        }
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    /// Probabilities in `(0, 1)`.
    pub fn forward(&self, z: &Tensor) -> Result<Tensor> {
        check_latent(z, self.arch.latent_dim)?;
        Ok(self.logits(z).sigmoid())
    }
}

impl LatentCritic for LatentDiscriminator {
    fn logits(&self, z: &Tensor) -> Tensor {
        let mut h = z.shallow_clone();
        for layer in &self.hidden {
            h = leaky_relu(&layer.forward(&h));
        }
        self.out.forward(&h).squeeze_dim(1)
    }
}

/// The four networks of the dual GAN.
#[derive(Debug)]
pub struct Networks {
    pub gv: VisualGenerator,
    pub dv: VisualDiscriminator,
    pub gl: LatentGenerator,
    pub dl: LatentDiscriminator,
}

impl Networks {
    /// Deterministic initialization; each network draws from its own named stream.
    pub fn init(arch: Architecture, seed: u64, kind: Kind) -> Self {
        Self {
            gv: VisualGenerator::new(arch, seed, kind),
            dv: VisualDiscriminator::new(arch, seed, kind),
            gl: LatentGenerator::new(arch, seed, kind),
            dl: LatentDiscriminator::new(arch, seed, kind),
        }
    }

    pub fn arch(&self) -> Architecture {
        self.gv.arch
    }

    /// Parameter sets in checkpoint order.
    pub fn param_sets(&self) -> [&ParameterSet; 4] {
        [&self.gv.params, &self.dv.params, &self.gl.params, &self.dl.params]
    }
}

/// Initialize all four parameter sets for `seed`.
pub fn init_params(cfg: &TrainConfig, kind: Kind) -> Networks {
    Networks::init(Architecture::from_config(cfg), seed::derive(cfg.seed, "init"), kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::reduced()
    }

    fn uniform(shape: &[i64], seed: i64, kind: Kind) -> Tensor {
        tch::manual_seed(seed);
        Tensor::rand(shape, (kind, tch::Device::Cpu)) * 2.0 - 1.0
    }

    #[test]
    fn generator_batch_shape_and_range() {
        let gv = VisualGenerator::new(arch(), 1, Kind::Float);
        let z = uniform(&[5, 8], 0, Kind::Float);
        let x = gv.forward(&z).unwrap();
        assert_eq!(x.size(), vec![5, 3, 16, 16]);
        assert!(gv.forward(&uniform(&[5, 7], 0, Kind::Float)).is_err());
    }

    #[test]
    fn generator_range_over_many_latents() {
        let full = Architecture {
            image_size: 32,
            latent_dim: 128,
            filters: [8, 16, 32, 64],
            latent_hidden: [32, 16, 8],
            latent_head: LatentHead::Pool,
        };
        let gv = VisualGenerator::new(full, 2, Kind::Float);
        // Scale latents up to push the tanh towards saturation.
        let z = uniform(&[1000, 128], 3, Kind::Float) * 50.0;
        let x = tch::no_grad(|| gv.generate(&z));
        assert!(x.max().double_value(&[]) <= 1.0);
        assert!(x.min().double_value(&[]) >= -1.0);
    }

    #[test]
    fn duplicated_inputs_give_duplicated_outputs() {
        let nets = Networks::init(arch(), 4, Kind::Float);
        let z = uniform(&[1, 8], 1, Kind::Float).repeat([3, 1]);
        let x = uniform(&[1, 3, 16, 16], 2, Kind::Float).repeat([3, 1, 1, 1]);
        tch::no_grad(|| {
            let outs = [
                nets.gv.generate(&z).flatten(1, -1),
                nets.gl.encode(&x),
                nets.dv.critic(&x).unsqueeze(1),
                nets.dl.logits(&z).unsqueeze(1),
            ];
            for o in outs {
                assert_eq!(o.size()[0], 3);
                assert!(o.get(0).equal(&o.get(1)));
                assert!(o.get(0).equal(&o.get(2)));
            }
        });
    }

    #[test]
    fn output_shapes() {
        let nets = Networks::init(arch(), 5, Kind::Float);
        let x = uniform(&[4, 3, 16, 16], 1, Kind::Float);
        let z = uniform(&[4, 8], 2, Kind::Float);
        assert_eq!(nets.gl.forward(&x).unwrap().size(), vec![4, 8]);
        assert_eq!(nets.dv.forward(&x).unwrap().size(), vec![4]);
        let p = nets.dl.forward(&z).unwrap();
        assert_eq!(p.size(), vec![4]);
        assert!(p.min().double_value(&[]) > 0.0 && p.max().double_value(&[]) < 1.0);
        assert!(nets.gl.forward(&uniform(&[4, 3, 8, 8], 1, Kind::Float)).is_err());
        assert!(nets.dl.forward(&uniform(&[4, 9], 1, Kind::Float)).is_err());
    }

    #[test]
    fn flatten_head_sees_every_position() {
        let flat = Architecture {
            image_size: 32,
            latent_head: LatentHead::Flatten,
            ..arch()
        };
        let gl = LatentGenerator::new(flat, 5, Kind::Float);
        // 64 channels on a 2x2 map feed the head.
        assert_eq!(gl.params().get("gl.head.weight").unwrap().size(), vec![8, 256]);
        let x = uniform(&[3, 3, 32, 32], 1, Kind::Float);
        assert_eq!(gl.forward(&x).unwrap().size(), vec![3, 8]);
    }

    #[test]
    fn zero_latent_discriminator_gives_one_half() {
        let dl = LatentDiscriminator::new(arch(), 6, Kind::Float);
        dl.params().zero();
        let p = dl.forward(&uniform(&[7, 8], 3, Kind::Float)).unwrap();
        assert!(p.eq(0.5).all().int64_value(&[]) != 0);
    }

    #[test]
    fn critic_has_no_batch_coupling() {
        let dv = VisualDiscriminator::new(arch(), 7, Kind::Double);
        let x = uniform(&[4, 3, 16, 16], 4, Kind::Double);
        let alone = dv.critic(&x);
        let dup = Tensor::cat(&[x.shallow_clone(), x.narrow(0, 2, 1)], 0);
        let with_dup = dv.critic(&dup).narrow(0, 0, 4);
        assert!(alone.allclose(&with_dup, 0.0, 1e-12, false));
    }

    #[test]
    fn init_is_deterministic() {
        let a = Networks::init(arch(), 9, Kind::Float);
        let b = Networks::init(arch(), 9, Kind::Float);
        let c = Networks::init(arch(), 10, Kind::Float);
        for i in 0..4 {
            assert_eq!(a.param_sets()[i].digest(), b.param_sets()[i].digest());
            assert_ne!(a.param_sets()[i].digest(), c.param_sets()[i].digest());
        }
    }

    #[test]
    fn init_std_matches_fan_in_scheme() {
        let nets = Networks::init(Architecture::from_config(&TrainConfig::default()), 11, Kind::Float);
        let mut checked = 0;
        for set in nets.param_sets() {
            for (name, t) in set.iter() {
                let size = t.size();
                if !name.ends_with(".weight") || t.numel() < 1024 {
                    continue;
                }
                let fan_in: i64 = size[1..].iter().product();
                let target = 1.0 / (3.0 * fan_in as f64).sqrt();
                let std = t.to_kind(Kind::Double).std(true).double_value(&[]);
                let mean = t.to_kind(Kind::Double).mean(None::<Kind>).double_value(&[]);
                assert!((std / target - 1.0).abs() < 0.2, "{name}: std {std} target {target}");
                assert!(mean.abs() < 0.2 * target, "{name}: mean {mean}");
                checked += 1;
            }
        }
        assert!(checked > 10);
        for set in nets.param_sets() {
            for (name, t) in set.iter() {
                if name.ends_with(".bias") {
                    assert_eq!(t.abs().sum(Kind::Double).double_value(&[]), 0.0);
                }
            }
        }
    }

    #[test]
    fn copy_and_load_round_trip() {
        let a = Networks::init(arch(), 12, Kind::Float);
        let b = Networks::init(arch(), 13, Kind::Float);
        b.gl.params().copy_from(a.gl.params()).unwrap();
        assert_eq!(a.gl.params().digest(), b.gl.params().digest());
        let (name, t) = a.dl.params().iter().next().unwrap();
        let values = tensor_to_f32(t);
        b.dl.params().load(name, &t.size(), &values).unwrap();
        assert!(b.dl.params().get(name).unwrap().equal(t));
        assert!(b.dl.params().load(name, &[1], &[0.0]).is_err());
        assert!(a.gl.params().copy_from(a.dl.params()).is_err());
    }
}
