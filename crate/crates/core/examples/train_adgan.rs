//! Train the dual GAN on a small synthetic corpus and print its losses.
//!
//! cargo run --release --example train_adgan -- [iterations]

use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::TrainConfig;
use adgan::store::ExperimentDir;
use adgan::trainer::{read_metrics, train, Phase};

fn main() -> anyhow::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(60);
    let corpus = synth_generate(&SynthConfig {
        n_normal: 200,
        n_abnormal: 10,
        n_validation: 10,
        n_test_normal: 20,
        image_size: 16,
        lesion_radius_range: (2.0, 4.0),
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        total_iters: n,
        phase1_iters: n * 2 / 3,
        batch_size: 16,
        latent_dim: 16,
        image_size: 16,
        width_divisor: 8,
        checkpoint_every: n / 2,
        ..TrainConfig::desk()
    };
    let dir = ExperimentDir::create("target/example_train", true)?;
    let out = train(&cfg, &corpus.train, Some(&dir))?;
    for row in out.rows.iter().step_by((n / 10).max(1) as usize) {
        let l = &row.losses;
        match row.phase {
            Phase::VisualOnly => println!("{:>5} visual  l_dv {:+.3} l_gv {:+.3}", row.iteration, l.l_dv, l.l_gv),
            Phase::Joint => println!(
                "{:>5} joint   l_dv {:+.3} l_gv {:+.3} l_dl {:.3} l_gl {:+.3} l_mse {:.3}",
                row.iteration, l.l_dv, l.l_gv, l.l_dl, l.l_gl, l.l_mse
            ),
        }
    }
    println!("{} metric rows in {}", read_metrics(&dir.metrics_path())?.len(), dir.root().display());
    for ckpt in dir.checkpoints()? {
        println!("checkpoint {}", ckpt.display());
    }
    Ok(())
}
