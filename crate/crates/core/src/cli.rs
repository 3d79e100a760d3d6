//! Command-line surface: `synth`, `train`, `score`, `eval` and `sweep`.
//!
//! Relative output paths are resolved against `$ADGAN_OUT_ROOT` when set.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::baselines::{train_dae, train_fanogan, train_vae, TrainedModel};
use crate::data::{ingest_folder, read_manifest, synth_generate, write_corpus, Corpus, SynthConfig, MANIFEST_FILE};
use crate::datamodel::{SplitName, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate_score_file, render_roc, write_curve, write_report};
use crate::scoring::{score_dataset, write_scores, write_triptychs, Reduction, ScoresHeader};
use crate::store::{prepare_dir, resolve_out, ExperimentDir};
use crate::trainer::{self, default_grid, select_hyperparams, write_sweep_report, Checkpoint, NormalSplit};

#[derive(Debug, Parser)]
#[command(name = "adgan", version, about = "One-class anomaly detection with a dual GAN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus as PNG files plus a manifest.
    Synth(SynthArgs),
    /// Train a model on the train split of a corpus.
    Train(TrainArgs),
    /// Score one split of a corpus with a trained checkpoint.
    Score(ScoreArgs),
    /// Compute AUC for score files and write a benchmark report.
    Eval(EvalArgs),
    /// Select the loss weights on the validation normals.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().n_normal)]
    pub n_normal: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_abnormal)]
    pub n_abnormal: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_validation)]
    pub n_validation: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_test_normal)]
    pub n_test_normal: usize,
    #[arg(long, default_value_t = SynthConfig::default().image_size)]
    pub image_size: usize,
    #[arg(long, default_value_t = SynthConfig::default().texture_scale)]
    pub texture_scale: f64,
    #[arg(long, default_value_t = SynthConfig::default().lesion_radius_range.0)]
    pub lesion_radius_min: f64,
    #[arg(long, default_value_t = SynthConfig::default().lesion_radius_range.1)]
    pub lesion_radius_max: f64,
    #[arg(long, default_value_t = SynthConfig::default().lesion_contrast)]
    pub lesion_contrast: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Adgan,
    Dae,
    Vae,
    Fanogan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Short schedule at 32x32 with narrow networks.
    Desk,
    /// Full schedule at 64x64.
    Full,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON training config; overrides `--preset`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?,
            None => match self.preset {
                Preset::Desk => TrainConfig::desk(),
                Preset::Full => TrainConfig::default(),
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        crate::datamodel::validate_config(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory holding a manifest.
    #[arg(long)]
    pub data: PathBuf,
    /// Experiment directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, value_enum, default_value_t = Method::Adgan)]
    pub method: Method,
    /// Continue an ADGAN run from this checkpoint into `--out`.
    #[arg(long, conflicts_with = "force")]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Experiment directory receiving `scores/` and `reconstructions/`;
    /// defaults to the one holding the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write input, reconstruction and difference images per example.
    #[arg(long)]
    pub dump_reconstructions: bool,
    #[arg(long, default_value_t = Reduction::Sum)]
    pub score_reduction: Reduction,
    /// Critic-feature weight of the hybrid f-AnoGAN score; defaults to the config value.
    #[arg(long)]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Validation => SplitName::Validation,
            SplitArg::Test => SplitName::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score files written by `score`.
    #[arg(required = true)]
    pub scores: Vec<PathBuf>,
    /// Benchmark report path.
    #[arg(long, default_value = "report.tsv")]
    pub report: PathBuf,
    /// Directory for `<method>_roc.tsv` curve dumps.
    #[arg(long)]
    pub roc_dir: Option<PathBuf>,
    /// PNG rendering of all curves.
    #[arg(long)]
    pub roc_png: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory receiving one run per grid point and `sweep.tsv`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Comma-separated alpha values.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Comma-separated beta values.
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[arg(long)]
    pub force: bool,
}

pub fn load_corpus(data: &Path, image_size: usize) -> Result<Corpus> {
    let manifest = read_manifest(&data.join(MANIFEST_FILE))?;
    ingest_folder(data, &manifest, image_size)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Score(a) => score(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_normal: a.n_normal,
        n_abnormal: a.n_abnormal,
        image_size: a.image_size,
        texture_scale: a.texture_scale,
        lesion_radius_range: (a.lesion_radius_min, a.lesion_radius_max),
        lesion_contrast: a.lesion_contrast,
        seed: a.seed,
        n_validation: a.n_validation,
        n_test_normal: a.n_test_normal,
    };
    let corpus = synth_generate(&cfg)?;
    let out = resolve_out(&a.out);
    prepare_dir(&out, a.force)?;
    let manifest = write_corpus(&corpus, &out)?;
    println!(
        "wrote {} images ({} train, {} validation, {} test) and {}",
        corpus.len(),
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len(),
        manifest.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let out = resolve_out(&a.out);
    if let Some(ckpt) = &a.resume {
        if a.method != Method::Adgan {
            return Err(Error::config("method", "only adgan runs can be resumed"));
        }
        let cfg = Checkpoint::load(ckpt)?.header.config;
        let corpus = load_corpus(&a.data, cfg.image_size)?;
        let dir = ExperimentDir::open(&out);
        let done = trainer::resume(ckpt, &corpus.train, Some(&dir))?;
        println!("resumed to iteration {} in {}", done.state.iteration, out.display());
        return Ok(());
    }
    let cfg = a.config.load()?;
    let corpus = load_corpus(&a.data, cfg.image_size)?;
    let dir = ExperimentDir::create(&out, a.force)?;
    let iterations = match a.method {
        Method::Adgan => trainer::train(&cfg, &corpus.train, Some(&dir))?.state.iteration,
        Method::Dae => train_dae(&cfg, &corpus.train, Some(&dir))?.1.len() as u64,
        Method::Vae => train_vae(&cfg, &corpus.train, Some(&dir))?.1.len() as u64,
        Method::Fanogan => train_fanogan(&cfg, &corpus.train, Some(&dir))?.1.len() as u64,
    };
    println!(
        "trained {:?} for {iterations} iterations; final checkpoint {}",
        a.method,
        dir.final_checkpoint().display()
    );
    Ok(())
}

/// Experiment root of `<root>/checkpoints/<file>`.
fn experiment_of(checkpoint: &Path) -> PathBuf {
    checkpoint
        .parent()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn score(a: ScoreArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let config = ckpt.header.config.clone();
    let model = TrainedModel::from_checkpoint(&ckpt)?;
    let corpus = load_corpus(&a.data, config.image_size)?;
    let split_name = SplitName::from(a.split);
    let split = corpus.split(split_name);
    let out = match &a.out {
        Some(p) => resolve_out(p),
        None => experiment_of(&a.checkpoint),
    };
    let dir = ExperimentDir::open(out);
    let kappa = a.kappa.unwrap_or(config.loss.kappa);
    for (name, scorer) in model.scorers(kappa) {
        let scored = score_dataset(split, scorer.as_ref(), a.dump_reconstructions, a.score_reduction)?;
        let path = dir.scores_dir().join(format!("{name}_{split_name}.tsv"));
        let header = ScoresHeader {
            method: name.clone(),
            config_hash: config.hash(),
            reduction: a.score_reduction,
            seed: config.seed,
        };
        write_scores(&path, &header, &scored)?;
        println!("{} rows -> {}", scored.len(), path.display());
        if a.dump_reconstructions {
            let n = write_triptychs(&dir.reconstructions_dir().join(&name), split, &scored)?;
            println!("{n} reconstructions -> {}", dir.reconstructions_dir().join(&name).display());
        }
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for path in &a.scores {
        let (row, curve) = evaluate_score_file(path)?;
        println!("{}\t{:.4}\t{}", row.method, row.auc, path.display());
        rows.push(row);
        curves.push(curve);
    }
    let report = resolve_out(&a.report);
    write_report(&report, &rows)?;
    if let Some(dir) = &a.roc_dir {
        let dir = resolve_out(dir);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (row, curve) in rows.iter().zip(&curves) {
            write_curve(&dir.join(format!("{}_roc.tsv", row.method)), curve)?;
        }
    }
    if let Some(png) = &a.roc_png {
        let png = resolve_out(png);
        let refs: Vec<_> = curves.iter().collect();
        render_roc(&refs, 256)
            .save(&png)
            .map_err(|source| Error::Decode { path: png.clone(), source })?;
    }
    println!("report -> {}", report.display());
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.config.load()?;
    let corpus = load_corpus(&a.data, cfg.image_size)?;
    let grid: Vec<(f64, f64)> = if a.alphas.is_empty() && a.betas.is_empty() {
        default_grid()
    } else {
        let alphas = if a.alphas.is_empty() { vec![cfg.loss.alpha] } else { a.alphas.clone() };
        let betas = if a.betas.is_empty() { vec![cfg.loss.beta] } else { a.betas.clone() };
        alphas.iter().flat_map(|&x| betas.iter().map(move |&y| (x, y))).collect()
    };
    let out = resolve_out(&a.out);
    let dir = ExperimentDir::create(&out, a.force)?;
    let validation = NormalSplit::new(&corpus.validation)?;
    let outcome = select_hyperparams(&cfg, &corpus.train, validation, &grid, Some(dir.root()))?;
    write_sweep_report(&dir.sweep_report_path(), &outcome.rows)?;
    println!(
        "best alpha={} beta={}; report -> {}",
        outcome.best.0,
        outcome.best.1,
        dir.sweep_report_path().display()
    );
    Ok(())
}

/// Process exit code for an error: 2 for a non-finite halt, 1 otherwise.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite { .. } => 2,
        _ => 1,
    }
}
