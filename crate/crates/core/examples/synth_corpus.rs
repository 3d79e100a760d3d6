//! Generate a small synthetic corpus, write it to disk, and read it back.
//!
//! cargo run --example synth_corpus -- [out_dir]

use adgan::data::synth::{synth_pair, test_pairs};
use adgan::data::{ingest_folder, read_manifest, synth_generate, write_corpus, SynthConfig};
use adgan::datamodel::Label;

fn main() -> anyhow::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "target/example_corpus".into());
    let cfg = SynthConfig {
        n_normal: 120,
        n_abnormal: 12,
        n_validation: 10,
        n_test_normal: 20,
        ..SynthConfig::default()
    };
    let corpus = synth_generate(&cfg)?;
    println!(
        "train {} / validation {} / test {} ({} abnormal)",
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len(),
        corpus.test.count(Label::Abnormal)
    );

    // Test abnormal i shares its texture with test normal i.
    let (n, a) = test_pairs(&cfg)[0];
    let diff: f32 = corpus.test.examples[n]
        .image
        .pixels()
        .iter()
        .zip(corpus.test.examples[a].image.pixels())
        .map(|(x, y)| (x - y).abs())
        .sum();
    println!("pair ({n}, {a}) differs by {diff:.2} in total absolute intensity");
    let pair = synth_pair(&cfg, 42);
    println!("lesion at ({:.1}, {:.1}) radius {:.1}", pair.lesion.cx, pair.lesion.cy, pair.lesion.radius);

    let manifest = write_corpus(&corpus, std::path::Path::new(&out))?;
    let back = ingest_folder(std::path::Path::new(&out), &read_manifest(&manifest)?, cfg.image_size)?;
    println!("re-ingested {} images from {}", back.len(), manifest.display());
    Ok(())
}
