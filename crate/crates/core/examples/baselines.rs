//! Train the auto-encoder, variational auto-encoder and two-stage GAN
//! baselines and compare their test AUCs.
//!
//! cargo run --release --example baselines -- [iterations]

use adgan::baselines::{train_dae, train_fanogan, train_vae, FanoganVariant, MeanScorer};
use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::TrainConfig;
use adgan::eval::auc;
use adgan::scoring::{score_dataset, Reduction, Scorer};

fn report(name: &str, scorer: &dyn Scorer, test: &adgan::datamodel::DatasetSplit) -> anyhow::Result<()> {
    let scored = score_dataset(test, scorer, false, Reduction::Sum)?;
    println!("{name:<14} AUC {:.4}", auc(&scored)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(150);
    let corpus = synth_generate(&SynthConfig {
        n_normal: 400,
        n_abnormal: 40,
        n_test_normal: 80,
        n_validation: 20,
        image_size: 16,
        lesion_radius_range: (2.0, 4.0),
        lesion_contrast: 0.5,
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        total_iters: n,
        phase1_iters: n / 2,
        batch_size: 32,
        latent_dim: 16,
        image_size: 16,
        width_divisor: 8,
        ..TrainConfig::desk()
    };
    let (dae, _) = train_dae(&cfg, &corpus.train, None)?;
    report("dae", &MeanScorer(&dae), &corpus.test)?;
    let (vae, rows) = train_vae(&cfg, &corpus.train, None)?;
    println!("vae final elbo {:.2}", rows.last().map_or(f64::NAN, |r| r.losses["elbo"]));
    report("vae", &MeanScorer(&vae), &corpus.test)?;
    let (gan, _) = train_fanogan(&cfg, &corpus.train, None)?;
    for v in FanoganVariant::ALL {
        report(v.kind().as_str(), &gan.scorer(v, cfg.loss.kappa), &corpus.test)?;
    }
    Ok(())
}
