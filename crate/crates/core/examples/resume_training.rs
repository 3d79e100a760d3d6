//! Stop a run halfway, resume it from the checkpoint, and confirm the result
//! is bit-identical to an uninterrupted run.
//!
//! cargo run --release --example resume_training

use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::TrainConfig;
use adgan::store::ExperimentDir;
use adgan::trainer::{resume, train, train_until};

fn main() -> anyhow::Result<()> {
    let corpus = synth_generate(&SynthConfig {
        n_normal: 100,
        n_abnormal: 0,
        n_validation: 0,
        n_test_normal: 0,
        image_size: 16,
        lesion_radius_range: (2.0, 4.0),
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        total_iters: 12,
        phase1_iters: 6,
        batch_size: 8,
        latent_dim: 8,
        image_size: 16,
        width_divisor: 8,
        checkpoint_every: 4,
        ..TrainConfig::desk()
    };
    let straight = train(&cfg, &corpus.train, None)?;

    let dir = ExperimentDir::create("target/example_resume", true)?;
    train_until(&cfg, &corpus.train, 8, Some(&dir))?;
    let resumed = resume(&dir.checkpoint_path(8), &corpus.train, Some(&dir))?;

    for (a, b) in straight.state.nets.param_sets().iter().zip(resumed.state.nets.param_sets()) {
        println!("{} {}", a.digest(), if a.digest() == b.digest() { "==" } else { "!=" });
    }
    Ok(())
}
