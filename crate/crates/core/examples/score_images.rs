//! Score test images by reconstruction error and dump input / reconstruction
//! / difference triptychs.
//!
//! cargo run --release --example score_images

use adgan::data::{synth_generate, SynthConfig};
use adgan::datamodel::{Label, TrainConfig};
use adgan::scoring::{anomaly_score, score_dataset, write_triptychs, Pipeline, Reduction};
use adgan::trainer::train;

fn main() -> anyhow::Result<()> {
    let corpus = synth_generate(&SynthConfig {
        n_normal: 150,
        n_abnormal: 6,
        n_test_normal: 6,
        n_validation: 10,
        image_size: 16,
        lesion_radius_range: (2.0, 4.0),
        ..SynthConfig::default()
    })?;
    let cfg = TrainConfig {
        total_iters: 40,
        phase1_iters: 25,
        batch_size: 16,
        latent_dim: 16,
        image_size: 16,
        width_divisor: 8,
        ..TrainConfig::desk()
    };
    let nets = train(&cfg, &corpus.train, None)?.state.nets;
    let scorer = Pipeline {
        encoder: &nets.gl,
        generator: &nets.gv,
    };
    let scored = score_dataset(&corpus.test, &scorer, true, Reduction::Sum)?;
    for s in &scored {
        println!("{:<22} {:<8} {:.3}", s.source_id, s.label, s.score);
    }
    let single = anomaly_score(&corpus.test.examples[0].image, &nets.gl, &nets.gv);
    println!("single-image score of the first example: {single:.3}");
    let mean = |l| {
        let v: Vec<f64> = scored.iter().filter(|s| s.label == l).map(|s| s.score).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    println!("mean normal {:.3}, mean abnormal {:.3}", mean(Label::Normal), mean(Label::Abnormal));
    let n = write_triptychs("target/example_triptychs".as_ref(), &corpus.test, &scored)?;
    println!("{n} triptychs in target/example_triptychs");
    Ok(())
}
