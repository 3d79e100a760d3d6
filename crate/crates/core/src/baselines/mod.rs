//! Comparison methods on the same networks and data: a deep auto-encoder,
//! a variational auto-encoder, and the two-stage WGAN-plus-encoder model
//! with its three scoring variants.

mod autoencoder;
mod fanogan;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

pub use autoencoder::{kl_standard_normal, train_dae, train_vae, AutoEncoder, MeanScorer};
pub use fanogan::{train_fanogan, FanoganModel, FanoganScorer, FanoganVariant, FeatureMap};

use crate::datamodel::{DatasetSplit, TrainConfig};
use crate::error::{Error, Result};
use crate::networks::Networks;
use crate::scoring::{Pipeline, Scorer};
use crate::seed;
use crate::store::ExperimentDir;
use crate::trainer::{self, batch_iterator, check_train_split, Checkpoint};

/// Every scoring method, baselines first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaselineKind {
    Dae,
    Vae,
    FanoganIzi,
    FanoganZiz,
    FanoganIzif,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::Dae,
        BaselineKind::Vae,
        BaselineKind::FanoganIzi,
        BaselineKind::FanoganZiz,
        BaselineKind::FanoganIzif,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Dae => "dae",
            BaselineKind::Vae => "vae",
            BaselineKind::FanoganIzi => "fanogan_izi",
            BaselineKind::FanoganZiz => "fanogan_ziz",
            BaselineKind::FanoganIzif => "fanogan_izif",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config("method", format!("unknown baseline `{s}`")))
    }
}

/// One line of a baseline metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub iteration: u64,
    pub stage: String,
    pub losses: BTreeMap<String, f64>,
    pub wall_ms: f64,
}

/// A model trained by plain minibatch steps.
trait Fit {
    fn method(&self) -> &'static str;
    /// One optimizer step on real batch `x`; returns the stage name and losses.
    fn step(&mut self, x: &Tensor, rng: &mut ChaCha8Rng) -> Result<(&'static str, Vec<(&'static str, f64)>)>;
    fn checkpoint(&self, cfg: &TrainConfig, iteration: u64) -> Checkpoint;
}

/// Run `first..=last` iterations of `model`, logging and checkpointing into
/// `dir` on the trainer's cadence.
fn fit<M: Fit>(
    model: &mut M,
    cfg: &TrainConfig,
    train: &DatasetSplit,
    first: u64,
    dir: Option<&ExperimentDir>,
) -> Result<Vec<BaselineRow>> {
    check_train_split(train)?;
    let data = train.to_tensor(Kind::Float);
    let mut batches = batch_iterator(cfg, train.len())?;
    let mut rng = seed::rng(cfg.seed, &format!("{}/train", model.method()));
    let mut log = match dir {
        Some(d) => {
            let path = d.metrics_path();
            let file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            Some((file, path))
        }
        None => None,
    };
    let mut rows = Vec::new();
    for iteration in first..=cfg.total_iters {
        let start = Instant::now();
        let idx: Vec<i64> = batches.next_indices().into_iter().map(|i| i as i64).collect();
        let x = data.index_select(0, &Tensor::from_slice(&idx));
        let (stage, losses) = model.step(&x, &mut rng).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, iteration },
            other => other,
        })?;
        if let Some((name, _)) = losses.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: name.to_string(),
                iteration,
            });
        }
        let row = BaselineRow {
            iteration,
            stage: stage.to_string(),
            losses: losses.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            wall_ms: (start.elapsed().as_secs_f64() * 1e6).round() / 1e3,
        };
        if let Some((file, path)) = log.as_mut() {
            writeln!(file, "{}", serde_json::to_string(&row)?).map_err(|e| Error::io(&*path, e))?;
        }
        rows.push(row);
        if let Some(d) = dir {
            let last = iteration == cfg.total_iters;
            if iteration % cfg.checkpoint_every == 0 || last {
                let ckpt = model.checkpoint(cfg, iteration);
                ckpt.save(&d.checkpoint_path(iteration))?;
                if last {
                    ckpt.save(&d.final_checkpoint())?;
                }
            }
        }
    }
    Ok(rows)
}

/// Any trained model that can be restored from a checkpoint.
#[derive(Debug)]
pub enum TrainedModel {
    Adgan(Networks),
    Dae(AutoEncoder),
    Vae(AutoEncoder),
    Fanogan(FanoganModel),
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match ckpt.header.method.as_str() {
            trainer::METHOD => Ok(TrainedModel::Adgan(trainer::load_networks(ckpt)?)),
            autoencoder::DAE => Ok(TrainedModel::Dae(AutoEncoder::from_checkpoint(ckpt)?)),
            autoencoder::VAE => Ok(TrainedModel::Vae(AutoEncoder::from_checkpoint(ckpt)?)),
            fanogan::METHOD => Ok(TrainedModel::Fanogan(FanoganModel::from_checkpoint(ckpt)?)),
            other => Err(Error::Checkpoint(format!("unknown method `{other}`"))),
        }
    }

    /// Named scorers: one for most methods, three for the two-stage GAN.
    pub fn scorers(&self, kappa: f64) -> Vec<(String, Box<dyn Scorer + '_>)> {
        match self {
            TrainedModel::Adgan(nets) => vec![(
                trainer::METHOD.to_string(),
                Box::new(Pipeline {
                    encoder: &nets.gl,
                    generator: &nets.gv,
                }),
            )],
            TrainedModel::Dae(ae) => vec![(BaselineKind::Dae.to_string(), Box::new(MeanScorer(ae)))],
            TrainedModel::Vae(ae) => vec![(BaselineKind::Vae.to_string(), Box::new(MeanScorer(ae)))],
            TrainedModel::Fanogan(m) => FanoganVariant::ALL
                .into_iter()
                .map(|v| {
                    let s: Box<dyn Scorer + '_> = Box::new(m.scorer(v, kappa));
                    (v.kind().to_string(), s)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("ocgan".parse::<BaselineKind>().is_err());
    }
}
