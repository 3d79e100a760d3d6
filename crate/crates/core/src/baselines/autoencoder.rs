use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tch::{Kind, Tensor};

use crate::datamodel::{validate_config, DatasetSplit, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::finite_value;
use crate::networks::{Architecture, ImageEncoder, ImageGenerator, LatentGenerator, VisualGenerator};
use crate::scoring::Scorer;
use crate::seed;
use crate::store::ExperimentDir;
use crate::trainer::{gradients_many, Adam, Checkpoint};

use super::{fit, BaselineRow, Fit};

pub const DAE: &str = "dae";
pub const VAE: &str = "vae";

/// Encoder with the latent generator's architecture and decoder with the
/// visual generator's. The variational encoder emits a mean and a
/// log-variance per latent dimension.
#[derive(Debug)]
pub struct AutoEncoder {
    pub encoder: LatentGenerator,
    pub decoder: VisualGenerator,
    pub config: TrainConfig,
    variational: bool,
}

impl AutoEncoder {
    pub fn new(config: TrainConfig, variational: bool) -> Result<Self> {
        let config = validate_config(config)?;
        let arch = Architecture::from_config(&config);
        let init = seed::derive(config.seed, "init");
        let out = if variational { 2 * arch.latent_dim } else { arch.latent_dim };
        Ok(Self {
            encoder: LatentGenerator::with_output("enc", arch, out, init, Kind::Float),
            decoder: VisualGenerator::with_prefix("dec", arch, init, Kind::Float),
            config,
            variational,
        })
    }

    pub fn method(&self) -> &'static str {
        if self.variational {
            VAE
        } else {
            DAE
        }
    }

    pub fn is_variational(&self) -> bool {
        self.variational
    }

    /// Encoder mean and log-variance; the log-variance is `None` for the
    /// plain auto-encoder.
    pub fn encode_stats(&self, x: &Tensor) -> (Tensor, Option<Tensor>) {
        let h = self.encoder.encode(x);
        if self.variational {
            let z = self.config.latent_dim as i64;
            (h.narrow(1, 0, z), Some(h.narrow(1, z, z)))
        } else {
            (h, None)
        }
    }

    pub fn to_checkpoint(&self, iteration: u64) -> Checkpoint {
        let mut ckpt = Checkpoint::new(self.method(), &self.config, iteration);
        ckpt.push_params(self.encoder.params());
        ckpt.push_params(self.decoder.params());
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let variational = match ckpt.header.method.as_str() {
            DAE => false,
            VAE => true,
            other => return Err(Error::Checkpoint(format!("`{other}` is not an auto-encoder checkpoint"))),
        };
        let ae = Self::new(ckpt.header.config.clone(), variational)?;
        ckpt.load_params(ae.encoder.params())?;
        ckpt.load_params(ae.decoder.params())?;
        Ok(ae)
    }
}

/// Deterministic reconstruction through the encoder mean.
impl Scorer for AutoEncoder {
    fn reconstruct(&self, x: &Tensor) -> Tensor {
        self.decoder.generate(&self.encode_stats(x).0)
    }
}

/// Borrowing scorer for either auto-encoder.
pub struct MeanScorer<'a>(pub &'a AutoEncoder);

impl Scorer for MeanScorer<'_> {
    fn reconstruct(&self, x: &Tensor) -> Tensor {
        self.0.reconstruct(x)
    }
}

/// `KL(N(mu, exp(logvar)) || N(0, I))` per example, in closed form.
pub fn kl_standard_normal(mu: &Tensor, logvar: &Tensor) -> Tensor {
    (mu.square() + logvar.exp() - 1.0 - logvar).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>) * 0.5
}

fn per_example_sse(x: &Tensor, y: &Tensor) -> Tensor {
    (x - y).square().flatten(1, -1).sum_dim_intlist([1i64].as_slice(), false, None::<Kind>)
}

struct AeFit<'a> {
    ae: &'a AutoEncoder,
    enc: Adam,
    dec: Adam,
}

impl Fit for AeFit<'_> {
    fn method(&self) -> &'static str {
        self.ae.method()
    }

    fn step(&mut self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<(&'static str, Vec<(&'static str, f64)>)> {
        let (mu, logvar) = self.ae.encode_stats(x);
        let (loss, report) = match logvar {
            None => {
                let loss = (self.ae.decoder.generate(&mu) - x).square().mean(None::<Kind>);
                let v = finite_value(&loss, "loss")?;
                (loss, vec![("loss", v)])
            }
            Some(logvar) => {
                let n = mu.numel();
                let eps: Vec<f32> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
                let eps = Tensor::from_slice(&eps).reshape(mu.size());
                let z = &mu + (&logvar * 0.5).exp() * eps;
                // Gaussian log-likelihood with unit pixel variance, constants dropped.
                let rec = per_example_sse(x, &self.ae.decoder.generate(&z)) * 0.5;
                let kl = kl_standard_normal(&mu, &logvar);
                let loss = (rec + &kl).mean(None::<Kind>);
                let v = finite_value(&loss, "loss")?;
                let kl = finite_value(&kl.mean(None::<Kind>), "kl")?;
                (loss, vec![("loss", v), ("kl", kl), ("elbo", -v)])
            }
        };
        let mut grads = gradients_many(&loss, &[self.ae.encoder.params(), self.ae.decoder.params()])?;
        let dec = grads.pop().expect("two sets");
        let enc = grads.pop().expect("two sets");
        self.enc.step(self.ae.encoder.params(), &enc);
        self.dec.step(self.ae.decoder.params(), &dec);
        Ok(("autoencoder", report))
    }

    fn checkpoint(&self, _cfg: &TrainConfig, iteration: u64) -> Checkpoint {
        self.ae.to_checkpoint(iteration)
    }
}

fn train_ae(
    cfg: &TrainConfig,
    train: &DatasetSplit,
    dir: Option<&ExperimentDir>,
    variational: bool,
) -> Result<(AutoEncoder, Vec<BaselineRow>)> {
    let ae = AutoEncoder::new(cfg.clone(), variational)?;
    if let Some(d) = dir {
        d.write_config(&ae.config)?;
    }
    let (lr, b1, b2) = (cfg.learning_rate, cfg.latent_adam_beta1, cfg.latent_adam_beta2);
    let mut f = AeFit {
        enc: Adam::new(ae.encoder.params(), lr, b1, b2),
        dec: Adam::new(ae.decoder.params(), lr, b1, b2),
        ae: &ae,
    };
    let rows = fit(&mut f, &ae.config, train, 1, dir)?;
    Ok((ae, rows))
}

/// Minimize mean pixel squared error of `decoder(encoder(x))` for `N` iterations.
pub fn train_dae(cfg: &TrainConfig, train: &DatasetSplit, dir: Option<&ExperimentDir>) -> Result<(AutoEncoder, Vec<BaselineRow>)> {
    train_ae(cfg, train, dir, false)
}

/// Maximize the evidence lower bound with a reparameterized Gaussian encoder.
pub fn train_vae(cfg: &TrainConfig, train: &DatasetSplit, dir: Option<&ExperimentDir>) -> Result<(AutoEncoder, Vec<BaselineRow>)> {
    train_ae(cfg, train, dir, true)
}
