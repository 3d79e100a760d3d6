//! One seed of the desk benchmark: the dual GAN against the auto-encoder on
//! the default synthetic corpus, plus the paired normal/lesioned check.
//!
//! cargo run --release --example desk_benchmark -- [seed] [iterations]
//!
//! The full desk schedule takes tens of minutes on one core; pass a smaller
//! iteration count for a quick look.

use adgan::baselines::{train_dae, MeanScorer};
use adgan::data::synth::test_pairs;
use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::TrainConfig;
use adgan::eval::auc;
use adgan::scoring::{score_dataset, Pipeline, Reduction};
use adgan::trainer::train;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let mut cfg = TrainConfig { seed, ..TrainConfig::desk() };
    if let Some(n) = args.next() {
        let n: u64 = n.parse()?;
        cfg.phase1_iters = cfg.phase1_iters * n / cfg.total_iters;
        cfg.total_iters = n;
    }
    let synth = SynthConfig { seed, ..SynthConfig::default() };
    let corpus = synth_generate(&synth)?;

    let start = std::time::Instant::now();
    let nets = train(&cfg, &corpus.train, None)?.state.nets;
    let scored = score_dataset(
        &corpus.test,
        &Pipeline { encoder: &nets.gl, generator: &nets.gv },
        false,
        Reduction::Sum,
    )?;
    let pairs = test_pairs(&synth);
    let higher = pairs.iter().filter(|(n, a)| scored[*a].score > scored[*n].score).count();
    println!(
        "adgan AUC {:.4}, lesioned above its normal in {higher}/{} pairs ({:.0}s)",
        auc(&scored)?,
        pairs.len(),
        start.elapsed().as_secs_f64()
    );

    let start = std::time::Instant::now();
    let (dae, _) = train_dae(&cfg, &corpus.train, None)?;
    let dae_scored = score_dataset(&corpus.test, &MeanScorer(&dae), false, Reduction::Sum)?;
    println!("dae   AUC {:.4} ({:.0}s)", auc(&dae_scored)?, start.elapsed().as_secs_f64());
    Ok(())
}
