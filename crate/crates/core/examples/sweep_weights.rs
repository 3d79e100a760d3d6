//! Pick the latent loss weights on validation normals.
//!
//! cargo run --release --example sweep_weights

use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::TrainConfig;
use adgan::trainer::{select_hyperparams, NormalSplit};

fn main() -> anyhow::Result<()> {
    let corpus = synth_generate(&SynthConfig {
        n_normal: 120,
        n_abnormal: 0,
        n_validation: 20,
        n_test_normal: 10,
        image_size: 16,
        lesion_radius_range: (2.0, 4.0),
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        total_iters: 20,
        phase1_iters: 10,
        batch_size: 16,
        latent_dim: 8,
        image_size: 16,
        width_divisor: 8,
        ..TrainConfig::desk()
    };
    let grid = [(0.1, 1.0), (1.0, 1.0), (1.0, 10.0), (10.0, 0.1)];
    let out = select_hyperparams(&cfg, &corpus.train, NormalSplit::new(&corpus.validation)?, &grid, None)?;
    for r in &out.rows {
        println!("alpha {:<5} beta {:<5} mean validation score {:.3}", r.alpha, r.beta, r.mean_score);
    }
    println!("selected alpha={} beta={}", out.best.0, out.best.1);
    Ok(())
}
