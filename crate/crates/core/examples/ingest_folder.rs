//! Ingest a folder of PNG/JPEG files described by a manifest.
//!
//! The manifest has one `path<TAB>patient_id<TAB>label<TAB>split` row per image.
//!
//! cargo run --example ingest_folder -- <dir> [image_size]

use adgan::data::{ingest_folder, read_manifest, MANIFEST_FILE};
use adgan::datamodel::{Label, SplitName};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(dir) = args.next() else {
        anyhow::bail!("usage: ingest_folder <dir> [image_size]");
    };
    let size: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(64);
    let dir = std::path::Path::new(&dir);
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    let corpus = ingest_folder(dir, &manifest, size)?;
    for name in SplitName::ALL {
        let split = corpus.split(name);
        println!(
            "{name:<10} {:>5} normal {:>5} abnormal {:>4} patients",
            split.count(Label::Normal),
            split.count(Label::Abnormal),
            split.patient_ids().len()
        );
    }
    Ok(())
}
