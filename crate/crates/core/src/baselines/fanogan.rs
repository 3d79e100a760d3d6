use std::fs;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use tch::{Kind, Tensor};

use crate::datamodel::{validate_config, DatasetSplit, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::finite_value;
use crate::networks::{Architecture, ImageEncoder, ImageGenerator, LatentGenerator, VisualDiscriminator, VisualGenerator};
use crate::scoring::{squared_error, Scorer};
use crate::seed;
use crate::store::ExperimentDir;
use crate::trainer::{check_train_split, gradients, Adam, Checkpoint, TrainState};

use super::{fit, BaselineKind, BaselineRow, Fit};

pub const METHOD: &str = "fanogan";

/// WGAN pair plus an image encoder trained after it.
#[derive(Debug)]
pub struct FanoganModel {
    pub gv: VisualGenerator,
    pub dv: VisualDiscriminator,
    pub enc: LatentGenerator,
    pub config: TrainConfig,
}

fn new_encoder(cfg: &TrainConfig) -> LatentGenerator {
    let arch = Architecture::from_config(cfg);
    LatentGenerator::with_output("enc", arch, arch.latent_dim, seed::derive(cfg.seed, "init"), Kind::Float)
}

fn to_checkpoint(
    cfg: &TrainConfig,
    iteration: u64,
    gv: &VisualGenerator,
    dv: &VisualDiscriminator,
    enc: &LatentGenerator,
) -> Checkpoint {
    let mut ckpt = Checkpoint::new(METHOD, cfg, iteration);
    ckpt.push_params(gv.params());
    ckpt.push_params(dv.params());
    ckpt.push_params(enc.params());
    ckpt
}

impl FanoganModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.header.method != METHOD {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for method `{}`, not `{METHOD}`",
                ckpt.header.method
            )));
        }
        let config = validate_config(ckpt.header.config.clone())?;
        let arch = Architecture::from_config(&config);
        let init = seed::derive(config.seed, "init");
        let model = Self {
            gv: VisualGenerator::new(arch, init, Kind::Float),
            dv: VisualDiscriminator::new(arch, init, Kind::Float),
            enc: new_encoder(&config),
            config,
        };
        ckpt.load_params(model.gv.params())?;
        ckpt.load_params(model.dv.params())?;
        ckpt.load_params(model.enc.params())?;
        Ok(model)
    }

    pub fn to_checkpoint(&self, iteration: u64) -> Checkpoint {
        to_checkpoint(&self.config, iteration, &self.gv, &self.dv, &self.enc)
    }

    pub fn scorer(&self, variant: FanoganVariant, kappa: f64) -> FanoganScorer<'_> {
        FanoganScorer {
            encoder: &self.enc,
            generator: &self.gv,
            critic: &self.dv,
            variant,
            kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FanoganVariant {
    /// Image-to-image cycle error.
    Izi,
    /// Latent cycle error of the re-encoded image.
    Ziz,
    /// Image cycle error plus weighted critic-feature residual.
    Izif,
}

impl FanoganVariant {
    pub const ALL: [FanoganVariant; 3] = [FanoganVariant::Izi, FanoganVariant::Ziz, FanoganVariant::Izif];

    pub fn kind(self) -> BaselineKind {
        match self {
            FanoganVariant::Izi => BaselineKind::FanoganIzi,
            FanoganVariant::Ziz => BaselineKind::FanoganZiz,
            FanoganVariant::Izif => BaselineKind::FanoganIzif,
        }
    }

    pub fn from_kind(kind: BaselineKind) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.kind() == kind)
            .ok_or_else(|| Error::config("variant", format!("`{kind}` is not a fanogan variant")))
    }
}

/// Intermediate critic activations used by the hybrid score.
pub trait FeatureMap {
    fn features(&self, x: &Tensor) -> Tensor;
}

impl FeatureMap for VisualDiscriminator {
    fn features(&self, x: &Tensor) -> Tensor {
        VisualDiscriminator::features(self, x)
    }
}

pub struct FanoganScorer<'a> {
    pub encoder: &'a dyn ImageEncoder,
    pub generator: &'a dyn ImageGenerator,
    pub critic: &'a dyn FeatureMap,
    pub variant: FanoganVariant,
    pub kappa: f64,
}

impl Scorer for FanoganScorer<'_> {
    fn reconstruct(&self, x: &Tensor) -> Tensor {
        self.generator.generate(&self.encoder.encode(x))
    }

    fn score(&self, x: &Tensor) -> Tensor {
        let z = self.encoder.encode(x);
        let recon = self.generator.generate(&z);
        match self.variant {
            FanoganVariant::Izi => squared_error(x, &recon),
            FanoganVariant::Ziz => squared_error(&z, &self.encoder.encode(&recon)),
            FanoganVariant::Izif => {
                let feat = squared_error(&self.critic.features(x), &self.critic.features(&recon));
                squared_error(x, &recon) + feat * self.kappa
            }
        }
    }
}

/// Stage-2 objective per batch: mean pixel error plus `kappa` times mean
/// critic-feature error, both through the frozen generator and critic.
fn encoder_objective(model: (&VisualGenerator, &VisualDiscriminator, &LatentGenerator), x: &Tensor, kappa: f64) -> (Tensor, Tensor) {
    let (gv, dv, enc) = model;
    let recon = gv.generate(&enc.encode(x));
    let image = (x - &recon).square().mean(None::<Kind>);
    let feature = (dv.features(x) - dv.features(&recon)).square().mean(None::<Kind>);
    (image, feature * kappa)
}

struct EncoderFit<'a> {
    model: &'a FanoganModel,
    opt: Adam,
}

impl Fit for EncoderFit<'_> {
    fn method(&self) -> &'static str {
        METHOD
    }

    fn step(&mut self, x: &Tensor, _rng: &mut ChaCha8Rng) -> Result<(&'static str, Vec<(&'static str, f64)>)> {
        let m = self.model;
        let (image, feature) = encoder_objective((&m.gv, &m.dv, &m.enc), x, m.config.loss.kappa);
        let loss = &image + &feature;
        let report = vec![
            ("loss", finite_value(&loss, "loss")?),
            ("image", finite_value(&image, "image")?),
            ("feature", finite_value(&feature, "feature")?),
        ];
        let grads = gradients(&loss, m.enc.params())?;
        self.opt.step(m.enc.params(), &grads);
        Ok(("encoder", report))
    }

    fn checkpoint(&self, _cfg: &TrainConfig, iteration: u64) -> Checkpoint {
        self.model.to_checkpoint(iteration)
    }
}

/// Stage 1 runs the first `T` iterations of the visual GAN exactly as the
/// main trainer does. Stage 2 freezes it and fits the encoder on real
/// training images for the remaining `N - T` iterations.
pub fn train_fanogan(
    cfg: &TrainConfig,
    train: &DatasetSplit,
    dir: Option<&ExperimentDir>,
) -> Result<(FanoganModel, Vec<BaselineRow>)> {
    check_train_split(train)?;
    let mut state = TrainState::new(cfg.clone(), train.len())?;
    let config = state.config.clone();
    if let Some(d) = dir {
        d.write_config(&config)?;
    }
    let enc = new_encoder(&config);
    let data = train.to_tensor(Kind::Float);
    let mut log = match dir {
        Some(d) => {
            let path = d.metrics_path();
            Some((fs::File::create(&path).map_err(|e| Error::io(&path, e))?, path))
        }
        None => None,
    };
    let mut rows = Vec::new();
    while state.iteration < config.phase1_iters {
        let r = state.step(&data)?;
        let row = BaselineRow {
            iteration: r.iteration,
            stage: "gan".into(),
            losses: [("l_dv".to_string(), r.losses.l_dv), ("l_gv".to_string(), r.losses.l_gv)].into(),
            wall_ms: r.wall_ms,
        };
        if let Some((file, path)) = log.as_mut() {
            writeln!(file, "{}", serde_json::to_string(&row)?).map_err(|e| Error::io(&*path, e))?;
        }
        rows.push(row);
        if let Some(d) = dir {
            let it = state.iteration;
            if it % config.checkpoint_every == 0 || it == config.total_iters {
                let ckpt = to_checkpoint(&config, it, &state.nets.gv, &state.nets.dv, &enc);
                ckpt.save(&d.checkpoint_path(it))?;
                if it == config.total_iters {
                    ckpt.save(&d.final_checkpoint())?;
                }
            }
        }
    }
    drop(log);
    let first = state.iteration + 1;
    let nets = state.nets;
    let model = FanoganModel {
        gv: nets.gv,
        dv: nets.dv,
        enc,
        config,
    };
    let cfg = &model.config;
    let mut f = EncoderFit {
        opt: Adam::new(model.enc.params(), cfg.latent_lr(), cfg.latent_adam_beta1, cfg.latent_adam_beta2),
        model: &model,
    };
    rows.extend(fit(&mut f, cfg, train, first, dir)?);
    Ok((model, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{score_dataset, Reduction};
    use crate::trainer::tests::{tiny_config, tiny_corpus};
    use crate::trainer::train_until;

    #[test]
    fn stage_two_freezes_gan_and_matches_stage_one() {
        let corpus = tiny_corpus();
        let cfg = tiny_config();
        let tmp = tempfile::tempdir().unwrap();
        let dir = ExperimentDir::create(tmp.path().join("f"), false).unwrap();
        let (model, rows) = train_fanogan(&cfg, &corpus.train, Some(&dir)).unwrap();
        let stage1 = train_until(&cfg, &corpus.train, cfg.phase1_iters, None).unwrap();
        assert_eq!(model.gv.params().digest(), stage1.state.nets.gv.params().digest());
        assert_eq!(model.dv.params().digest(), stage1.state.nets.dv.params().digest());
        assert_ne!(model.enc.params().digest(), new_encoder(&model.config).params().digest());
        assert_eq!(rows.len() as u64, cfg.total_iters);
        assert!(rows.iter().filter(|r| r.stage == "encoder").all(|r| r.losses["loss"] >= 0.0));
        let back = FanoganModel::from_checkpoint(&Checkpoint::load(&dir.final_checkpoint()).unwrap()).unwrap();
        assert_eq!(back.enc.params().digest(), model.enc.params().digest());
        let logged = fs::read_to_string(dir.metrics_path()).unwrap();
        assert_eq!(logged.lines().count() as u64, cfg.total_iters);
    }

    #[test]
    fn variants_on_trained_model() {
        let corpus = tiny_corpus();
        let (model, _) = train_fanogan(&tiny_config(), &corpus.train, None).unwrap();
        let x = corpus.test.to_tensor(Kind::Float);
        let z = tch::no_grad(|| model.enc.encode(&x));
        assert_eq!(z.size(), [x.size()[0], model.config.latent_dim as i64]);
        let score = |v, k| score_dataset(&corpus.test, &model.scorer(v, k), false, Reduction::Sum).unwrap();
        let izi = score(FanoganVariant::Izi, 1.0);
        assert_eq!(score(FanoganVariant::Izif, 0.0), izi);
        let izif = score(FanoganVariant::Izif, 1.0);
        for (a, b) in izi.iter().zip(&izif) {
            assert!(b.score >= a.score && a.score.is_finite());
        }
        assert!(score(FanoganVariant::Ziz, 1.0).iter().all(|s| s.score >= 0.0));
        assert_eq!(score(FanoganVariant::Ziz, 1.0), score(FanoganVariant::Ziz, 1.0));
    }

    struct Flat(f64);
    impl ImageEncoder for Flat {
        fn encode(&self, x: &Tensor) -> Tensor {
            x.flatten(1, -1).narrow(1, 0, 2) * self.0
        }
    }
    impl ImageGenerator for Flat {
        fn generate(&self, z: &Tensor) -> Tensor {
            z.mean_dim([1i64].as_slice(), true, None::<Kind>).view([-1, 1, 1, 1]).expand([-1, 3, 2, 2], false) * self.0
        }
    }
    struct Ident;
    impl ImageEncoder for Ident {
        fn encode(&self, x: &Tensor) -> Tensor {
            x.flatten(1, -1)
        }
    }
    impl ImageGenerator for Ident {
        fn generate(&self, z: &Tensor) -> Tensor {
            z.view([-1, 3, 2, 2])
        }
    }
    struct Sum;
    impl FeatureMap for Sum {
        fn features(&self, x: &Tensor) -> Tensor {
            x.flatten(1, -1).sum_dim_intlist([1i64].as_slice(), true, None::<Kind>)
        }
    }

    fn scored(enc: &dyn ImageEncoder, gen: &dyn ImageGenerator, v: FanoganVariant, kappa: f64, x: &Tensor) -> f64 {
        let s = FanoganScorer {
            encoder: enc,
            generator: gen,
            critic: &Sum,
            variant: v,
            kappa,
        };
        s.score(x).double_value(&[0])
    }

    #[test]
    fn identity_pipeline_scores_zero() {
        let x = Tensor::from_slice(&[0.1f64, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9, 1.0, 0.0, 0.25]).view([1, 3, 2, 2]);
        for v in FanoganVariant::ALL {
            assert_eq!(scored(&Ident, &Ident, v, 1.0, &x), 0.0);
        }
    }

    #[test]
    fn arithmetic_case() {
        // x: first pixel 1, rest 0. E takes the first two values (x2): z = (2, 0).
        // G broadcasts the mean of z (x2): every pixel 2, so recon is 12 twos.
        let mut v = vec![0.0f64; 12];
        v[0] = 1.0;
        let x = Tensor::from_slice(&v).view([1, 3, 2, 2]);
        let f = Flat(2.0);
        // izi: (1-2)^2 + 11 * 4 = 45
        assert_eq!(scored(&f, &f, FanoganVariant::Izi, 1.0, &x), 45.0);
        // ziz: E(recon) = (4, 4); (2-4)^2 + (0-4)^2 = 20
        assert_eq!(scored(&f, &f, FanoganVariant::Ziz, 1.0, &x), 20.0);
        // izif: features are pixel sums 1 and 24; 45 + 0.5 * 23^2
        assert_eq!(scored(&f, &f, FanoganVariant::Izif, 0.5, &x), 45.0 + 0.5 * 529.0);
    }

    #[test]
    fn variant_lookup() {
        for v in FanoganVariant::ALL {
            assert_eq!(FanoganVariant::from_kind(v.kind()).unwrap(), v);
        }
        assert!(FanoganVariant::from_kind(BaselineKind::Dae).is_err());
    }
}
