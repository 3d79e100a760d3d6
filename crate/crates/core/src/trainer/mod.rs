//! Two-phase training schedule, checkpoints, metrics log and the
//! hyperparameter sweep.
//!
//! For the first `T` iterations only the visual pair learns; the latent pair
//! stays at its initialization. The remaining `N - T` iterations update all
//! four networks. Each iteration makes `critic_steps` critic updates (each on
//! a fresh real batch) followed by one update of every generator-side network.

mod adam;
mod checkpoint;
mod sweep;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

pub use adam::{gradients, gradients_many, Adam};
pub use checkpoint::{Checkpoint, CheckpointHeader, TensorMeta, MAGIC, SCHEMA_VERSION};
pub use sweep::{default_grid, pick_best, select_hyperparams, write_sweep_report, NormalSplit, SweepOutcome, SweepRow};

use crate::data::BatchIterator;
use crate::datamodel::{validate_config, DatasetSplit, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{
    bce_logits, finite_value, saturating_log_term, squared_error_mean, visual_critic_loss, visual_generator_loss,
    LossReport,
};
use crate::networks::{init_params, ImageEncoder, ImageGenerator, LatentCritic, Networks, ParameterSet};
use crate::seed;
use crate::store::ExperimentDir;

/// Method name recorded in checkpoints and score files.
pub const METHOD: &str = "adgan";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    VisualOnly,
    Joint,
}

/// One line of the metrics log. Latent losses are zero during the
/// visual-only phase; `l_dv` is the last critic update of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u64,
    pub phase: Phase,
    #[serde(flatten)]
    pub losses: LossReport,
    pub wall_ms: f64,
}

impl MetricsRow {
    /// Equal apart from timing.
    pub fn same_values(&self, other: &MetricsRow) -> bool {
        self.iteration == other.iteration && self.phase == other.phase && self.losses == other.losses
    }
}

/// Uniform draws in `[lo, hi)` from the training stream.
pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[i64], lo: f32, hi: f32) -> Tensor {
    let n = shape.iter().product::<i64>() as usize;
    let values: Vec<f32> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_slice(&values).reshape(shape)
}

/// The four optimizers, in the same order as [`Networks::param_sets`].
#[derive(Debug)]
pub struct Optimizers {
    pub gv: Adam,
    pub dv: Adam,
    pub gl: Adam,
    pub dl: Adam,
}

pub const NET_NAMES: [&str; 4] = ["gv", "dv", "gl", "dl"];

impl Optimizers {
    fn new(nets: &Networks, cfg: &TrainConfig) -> Self {
        let visual = |p: &ParameterSet| Adam::new(p, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2);
        let latent = |p: &ParameterSet| Adam::new(p, cfg.latent_lr(), cfg.latent_adam_beta1, cfg.latent_adam_beta2);
        Self {
            gv: visual(nets.gv.params()),
            dv: visual(nets.dv.params()),
            gl: latent(nets.gl.params()),
            dl: latent(nets.dl.params()),
        }
    }

    pub fn all(&self) -> [&Adam; 4] {
        [&self.gv, &self.dv, &self.gl, &self.dl]
    }

    fn all_mut(&mut self) -> [&mut Adam; 4] {
        [&mut self.gv, &mut self.dv, &mut self.gl, &mut self.dl]
    }
}

pub(crate) fn push_optimizer(ckpt: &mut Checkpoint, name: &str, params: &ParameterSet, opt: &Adam) {
    for ((pname, _), (m, v)) in params.iter().zip(opt.first_moments().iter().zip(opt.second_moments())) {
        ckpt.push(format!("{pname}.adam_m"), m);
        ckpt.push(format!("{pname}.adam_v"), v);
    }
    ckpt.header.optimizer_updates.push((name.to_string(), opt.updates()));
}

pub(crate) fn load_optimizer(ckpt: &Checkpoint, name: &str, params: &ParameterSet, opt: &mut Adam) -> Result<()> {
    for ((pname, _), (m, v)) in params.iter().zip(opt.first_moments().iter().zip(opt.second_moments())) {
        ckpt.load_into(&format!("{pname}.adam_m"), m)?;
        ckpt.load_into(&format!("{pname}.adam_v"), v)?;
    }
    opt.set_updates(ckpt.optimizer_updates(name)?);
    Ok(())
}

fn training_rng(cfg: &TrainConfig) -> ChaCha8Rng {
    seed::rng(cfg.seed, "train")
}

pub(crate) fn batch_iterator(cfg: &TrainConfig, len: usize) -> Result<BatchIterator> {
    BatchIterator::new(len, cfg.batch_size, seed::derive(cfg.seed, "batches"), true).ok_or_else(|| {
        Error::Dataset(format!(
            "train split has {len} examples, fewer than one batch of {}",
            cfg.batch_size
        ))
    })
}

/// Everything needed to continue training bit-exactly.
#[derive(Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    /// Completed iterations.
    pub iteration: u64,
    pub nets: Networks,
    pub optim: Optimizers,
    rng: ChaCha8Rng,
    batches: BatchIterator,
}

impl TrainState {
    pub fn new(config: TrainConfig, train_len: usize) -> Result<Self> {
        let config = validate_config(config)?;
        let nets = init_params(&config, Kind::Float);
        Ok(Self {
            optim: Optimizers::new(&nets, &config),
            rng: training_rng(&config),
            batches: batch_iterator(&config, train_len)?,
            iteration: 0,
            nets,
            config,
        })
    }

    /// Phase of the next iteration.
    pub fn phase(&self) -> Phase {
        if self.iteration < self.config.phase1_iters {
            Phase::VisualOnly
        } else {
            Phase::Joint
        }
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.total_iters
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(METHOD, &self.config, self.iteration);
        ckpt.header.rng_word_pos = self.rng.get_word_pos().to_string();
        ckpt.header.batches = self.batches.state();
        for set in self.nets.param_sets() {
            ckpt.push_params(set);
        }
        for ((name, set), opt) in NET_NAMES.iter().zip(self.nets.param_sets()).zip(self.optim.all()) {
            push_optimizer(&mut ckpt, name, set, opt);
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, train_len: usize) -> Result<Self> {
        if ckpt.header.method != METHOD {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for method `{}`, not `{METHOD}`",
                ckpt.header.method
            )));
        }
        let mut state = Self::new(ckpt.header.config.clone(), train_len)?;
        for set in state.nets.param_sets() {
            ckpt.load_params(set)?;
        }
        let sets = state.nets.param_sets();
        for ((name, set), opt) in NET_NAMES.iter().zip(sets).zip(state.optim.all_mut()) {
            load_optimizer(ckpt, name, set, opt)?;
        }
        let pos: u128 = ckpt
            .header
            .rng_word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng position".into()))?;
        state.rng.set_word_pos(pos);
        state.batches.restore(ckpt.header.batches);
        state.iteration = ckpt.header.iteration;
        Ok(state)
    }

    /// Draw `critic_steps` real batches from `data`.
    pub fn next_real_batches(&mut self, data: &Tensor) -> Vec<Tensor> {
        (0..self.config.critic_steps)
            .map(|_| {
                let idx: Vec<i64> = self.batches.next_indices().into_iter().map(|i| i as i64).collect();
                data.index_select(0, &Tensor::from_slice(&idx))
            })
            .collect()
    }

    fn latents(&mut self, n: i64) -> Tensor {
        uniform(&mut self.rng, &[n, self.config.latent_dim as i64], -1.0, 1.0)
    }

    fn critic_updates(&mut self, real: &[Tensor]) -> Result<f64> {
        let mut last = 0.0;
        for x in real {
            let b = x.size()[0];
            let z = self.latents(b);
            let fake = tch::no_grad(|| self.nets.gv.generate(&z));
            let mix = uniform(&mut self.rng, &[b], 0.0, 1.0);
            let loss = visual_critic_loss(&self.nets.dv, x, &fake, &mix, &self.config.loss)?;
            let grads = gradients(&loss, self.nets.dv.params())?;
            self.optim.dv.step(self.nets.dv.params(), &grads);
            last = loss.double_value(&[]);
        }
        Ok(last)
    }

    fn generator_update(&mut self) -> Result<f64> {
        let z = self.latents(self.config.batch_size as i64);
        let loss = visual_generator_loss(&self.nets.dv, &self.nets.gv, &z)?;
        let grads = gradients(&loss, self.nets.gv.params())?;
        self.optim.gv.step(self.nets.gv.params(), &grads);
        Ok(loss.double_value(&[]))
    }

    fn check_phase(&self, expected: Phase) -> Result<()> {
        if self.phase() != expected || self.is_done() {
            return Err(Error::Config {
                field: "phase1_iters",
                reason: format!(
                    "iteration {} is not in the {expected:?} phase of this schedule",
                    self.iteration + 1
                ),
            });
        }
        if self.config.critic_steps == 0 {
            return Err(Error::config("critic_steps", "must be positive"));
        }
        Ok(())
    }

    /// One visual-only iteration: a critic update per real batch, then one
    /// visual generator update.
    pub fn train_step_phase1(&mut self, real: &[Tensor]) -> Result<LossReport> {
        self.check_phase(Phase::VisualOnly)?;
        let l_dv = self.critic_updates(real)?;
        let l_gv = self.generator_update()?;
        self.iteration += 1;
        Ok(LossReport {
            l_dv,
            l_gv,
            ..LossReport::default()
        })
    }

    /// One joint iteration: the phase-1 updates, then the latent
    /// discriminator and latent generator updates on freshly generated images.
    pub fn train_step_phase2(&mut self, real: &[Tensor]) -> Result<LossReport> {
        self.check_phase(Phase::Joint)?;
        let l_dv = self.critic_updates(real)?;
        let l_gv = self.generator_update()?;

        let b = self.config.batch_size as i64;
        let z = self.latents(b);
        let x_hat = tch::no_grad(|| self.nets.gv.generate(&z));
        let z_prior = self.latents(b);

        let z_fake = tch::no_grad(|| self.nets.gl.encode(&x_hat));
        let dl_loss = bce_logits(&self.nets.dl.logits(&z_prior), &self.nets.dl.logits(&z_fake));
        let l_dl = finite_value(&dl_loss, "l_dl")?;
        let grads = gradients(&dl_loss, self.nets.dl.params())?;
        self.optim.dl.step(self.nets.dl.params(), &grads);

        let z_hat = self.nets.gl.encode(&x_hat);
        let gl_loss = saturating_log_term(&self.nets.dl.logits(&z_hat), self.config.loss.alpha);
        let mse = squared_error_mean(&z, &z_hat, self.config.loss.beta);
        let l_gl = finite_value(&gl_loss, "l_gl")?;
        let l_mse = finite_value(&mse, "l_mse")?;
        let grads = gradients(&(gl_loss + mse), self.nets.gl.params())?;
        self.optim.gl.step(self.nets.gl.params(), &grads);

        self.iteration += 1;
        Ok(LossReport {
            l_dv,
            l_gv,
            l_dl,
            l_gl,
            l_mse,
        })
    }

    /// Run the next iteration on batches drawn from `data`, halting on any
    /// non-finite loss or parameter.
    pub fn step(&mut self, data: &Tensor) -> Result<MetricsRow> {
        let start = Instant::now();
        let iteration = self.iteration + 1;
        let phase = self.phase();
        let real = self.next_real_batches(data);
        let result = match phase {
            Phase::VisualOnly => self.train_step_phase1(&real),
            Phase::Joint => self.train_step_phase2(&real),
        };
        let losses = result.map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite { what, iteration },
            other => other,
        })?;
        for (name, set) in NET_NAMES.iter().zip(self.nets.param_sets()) {
            if !set.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("{name} parameters"),
                    iteration,
                });
            }
        }
        Ok(MetricsRow {
            iteration,
            phase,
            losses,
            wall_ms: (start.elapsed().as_secs_f64() * 1e6).round() / 1e3,
        })
    }
}

/// Append-only metrics file.
struct MetricsLog {
    file: fs::File,
    path: std::path::PathBuf,
}

impl MetricsLog {
    /// Open for appending, dropping any rows past `keep_through`.
    fn open(path: &Path, keep_through: u64) -> Result<Self> {
        let kept: Vec<MetricsRow> = if path.exists() {
            read_metrics(path)?
                .into_iter()
                .filter(|r| r.iteration <= keep_through)
                .collect()
        } else {
            Vec::new()
        };
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for row in &kept {
            writeln!(file, "{}", serde_json::to_string(row)?).map_err(|e| Error::io(path, e))?;
        }
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.file, "{}", serde_json::to_string(row)?).map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Rows produced by this call.
    pub rows: Vec<MetricsRow>,
}

pub(crate) fn check_train_split(train: &DatasetSplit) -> Result<()> {
    train.check_labels()?;
    if train.is_empty() {
        return Err(Error::Dataset("train split is empty".into()));
    }
    Ok(())
}

/// Train from scratch through iteration `N`.
pub fn train(cfg: &TrainConfig, train: &DatasetSplit, dir: Option<&ExperimentDir>) -> Result<TrainOutcome> {
    train_until(cfg, train, cfg.total_iters, dir)
}

/// Train from scratch, stopping after iteration `until` (at most `N`).
pub fn train_until(
    cfg: &TrainConfig,
    train: &DatasetSplit,
    until: u64,
    dir: Option<&ExperimentDir>,
) -> Result<TrainOutcome> {
    check_train_split(train)?;
    let state = TrainState::new(cfg.clone(), train.len())?;
    if let Some(dir) = dir {
        dir.write_config(&state.config)?;
    }
    run(state, train, until, dir)
}

/// Continue from a checkpoint through iteration `N`.
pub fn resume(checkpoint: &Path, train: &DatasetSplit, dir: Option<&ExperimentDir>) -> Result<TrainOutcome> {
    let ckpt = Checkpoint::load(checkpoint)?;
    check_train_split(train)?;
    let state = TrainState::from_checkpoint(&ckpt, train.len())?;
    let until = state.config.total_iters;
    run(state, train, until, dir)
}

fn run(mut state: TrainState, train: &DatasetSplit, until: u64, dir: Option<&ExperimentDir>) -> Result<TrainOutcome> {
    let until = until.min(state.config.total_iters);
    let data = train.to_tensor(Kind::Float);
    let mut log = match dir {
        Some(d) => Some(MetricsLog::open(&d.metrics_path(), state.iteration)?),
        None => None,
    };
    let mut rows = Vec::new();
    while state.iteration < until {
        let row = match state.step(&data) {
            Ok(row) => row,
            Err(err @ Error::NonFinite { .. }) => {
                if let (Some(d), Error::NonFinite { iteration, .. }) = (dir, &err) {
                    let path = d.checkpoints_dir().join(format!("nonfinite_{iteration:06}.ckpt"));
                    state.to_checkpoint().save(&path)?;
                }
                return Err(err);
            }
            Err(err) => return Err(err),
        };
        if let Some(log) = log.as_mut() {
            log.append(&row)?;
        }
        rows.push(row);
        if let Some(d) = dir {
            let it = state.iteration;
            let last = it == state.config.total_iters;
            if it.is_multiple_of(state.config.checkpoint_every) || last {
                let ckpt = state.to_checkpoint();
                ckpt.save(&d.checkpoint_path(it))?;
                if last {
                    ckpt.save(&d.final_checkpoint())?;
                }
            }
        }
    }
    Ok(TrainOutcome { state, rows })
}

/// Load the visual generator and latent generator of an ADGAN checkpoint.
pub fn load_networks(ckpt: &Checkpoint) -> Result<Networks> {
    if ckpt.header.method != METHOD {
        return Err(Error::Checkpoint(format!(
            "checkpoint is for method `{}`, not `{METHOD}`",
            ckpt.header.method
        )));
    }
    let nets = init_params(&ckpt.header.config, Kind::Float);
    for set in nets.param_sets() {
        ckpt.load_params(set)?;
    }
    Ok(nets)
}
