//! ROC curve and AUC of a hand-written score list, written as a table and a PNG.
//!
//! cargo run --example roc_auc

use adgan::datamodel::Label::{Abnormal as A, Normal as N};
use adgan::eval::{render_roc, roc_from_scores, write_curve};

fn main() -> anyhow::Result<()> {
    let scores = [0.9, 0.8, 0.7, 0.65, 0.6, 0.4, 0.4, 0.3, 0.2, 0.1];
    let labels = [A, A, N, A, N, A, N, N, N, N];
    let curve = roc_from_scores(&scores, &labels)?;
    for (t, (f, p)) in curve.thresholds.iter().zip(curve.points()) {
        println!("score >= {t:<5} fpr {f:.2} tpr {p:.2}");
    }
    println!("AUC {}", curve.area());
    std::fs::create_dir_all("target")?;
    write_curve("target/example_roc.tsv".as_ref(), &curve)?;
    render_roc(&[&curve], 200).save("target/example_roc.png")?;
    Ok(())
}
