//! ROC analysis with abnormal as the positive class, and the benchmark report.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::baselines::TrainedModel;
use crate::datamodel::{DatasetSplit, Label, TrainConfig};
use crate::error::{Error, Result};
use crate::scoring::{read_scores, score_dataset, write_scores, Reduction, ScoredExample, Scorer, ScoresHeader};
use crate::store::ExperimentDir;

/// Operating points from the strictest threshold to the loosest.
///
/// `thresholds[0]` is `+inf` (nothing flagged); every later entry is a
/// distinct score, and an example is flagged when its score is `>=` the
/// threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    /// Cumulative counts behind `fpr`/`tpr`.
    pub false_positives: Vec<u64>,
    pub true_positives: Vec<u64>,
    pub positives: u64,
    pub negatives: u64,
}

impl RocCurve {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fpr.iter().copied().zip(self.tpr.iter().copied())
    }

    /// Trapezoidal area, accumulated in integers so it equals the pairwise
    /// count bit for bit.
    pub fn area(&self) -> f64 {
        let mut twice: u128 = 0;
        for i in 1..self.fpr.len() {
            let dfp = (self.false_positives[i] - self.false_positives[i - 1]) as u128;
            let tp_sum = (self.true_positives[i] + self.true_positives[i - 1]) as u128;
            twice += dfp * tp_sum;
        }
        twice as f64 / (2 * self.positives as u128 * self.negatives as u128) as f64
    }
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::Eval(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Eval(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Abnormal).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval("ROC analysis needs both normal and abnormal examples".into()));
    }
    Ok((pos, neg))
}

pub fn roc_from_scores(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let (positives, negatives) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = RocCurve {
        thresholds: vec![f64::INFINITY],
        fpr: vec![0.0],
        tpr: vec![0.0],
        false_positives: vec![0],
        true_positives: vec![0],
        positives,
        negatives,
    };
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            match labels[order[i]] {
                Label::Abnormal => tp += 1,
                Label::Normal => fp += 1,
            }
            i += 1;
        }
        curve.thresholds.push(t);
        curve.true_positives.push(tp);
        curve.false_positives.push(fp);
        curve.tpr.push(tp as f64 / positives as f64);
        curve.fpr.push(fp as f64 / negatives as f64);
    }
    Ok(curve)
}

pub fn roc_curve(scored: &[ScoredExample]) -> Result<RocCurve> {
    let (scores, labels): (Vec<f64>, Vec<Label>) = scored.iter().map(|s| (s.score, s.label)).unzip();
    roc_from_scores(&scores, &labels)
}

pub fn auc(scored: &[ScoredExample]) -> Result<f64> {
    Ok(roc_curve(scored)?.area())
}

pub fn auc_from_scores(scores: &[f64], labels: &[Label]) -> Result<f64> {
    Ok(roc_from_scores(scores, labels)?.area())
}

/// One benchmark table row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub auc: f64,
    pub scores_path: PathBuf,
    pub config_hash: String,
    pub seed: u64,
}

const REPORT_HEADER: &str = "# positive class: abnormal (higher score means more anomalous)\nmethod\tauc\tscores_path\tconfig_hash\tseed\n";

pub fn write_report(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut text = String::from(REPORT_HEADER);
    for r in rows {
        text.push_str(&format!(
            "{}\t{:?}\t{}\t{}\t{}\n",
            r.method,
            r.auc,
            r.scores_path.display(),
            r.config_hash,
            r.seed
        ));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, reason: &str| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.starts_with("method\t") || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(i + 1, "expected 5 tab-separated fields"));
        }
        rows.push(ReportRow {
            method: f[0].to_string(),
            auc: f[1].parse().map_err(|_| bad(i + 1, "bad auc"))?,
            scores_path: PathBuf::from(f[2]),
            config_hash: f[3].to_string(),
            seed: f[4].parse().map_err(|_| bad(i + 1, "bad seed"))?,
        });
    }
    Ok(rows)
}

/// `fpr<TAB>tpr` per line.
pub fn write_curve(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut text = String::from("fpr\ttpr\n");
    for (f, t) in curve.points() {
        text.push_str(&format!("{f:?}\t{t:?}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let (w, h) = (img.width() as f64 - 1.0, img.height() as f64 - 1.0);
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()) * w.max(h)).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let x = a.0 + (b.0 - a.0) * t;
        let y = a.1 + (b.1 - a.1) * t;
        img.put_pixel((x * w).round() as u32, ((1.0 - y) * h).round() as u32, color);
    }
}

/// ROC plot in the unit square: chance diagonal in grey, curve in red.
pub fn render_roc(curves: &[&RocCurve], size: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(size, size, Rgb([255, 255, 255]));
    draw_line(&mut img, (0.0, 0.0), (1.0, 1.0), Rgb([190, 190, 190]));
    let palette = [[200, 30, 30], [30, 90, 200], [30, 150, 60], [150, 60, 170], [220, 140, 20], [20, 20, 20]];
    for (k, c) in curves.iter().enumerate() {
        let color = Rgb(palette[k % palette.len()]);
        let pts: Vec<(f64, f64)> = c.points().collect();
        for w in pts.windows(2) {
            draw_line(&mut img, w[0], w[1], color);
        }
    }
    img
}

/// Score `test` with `scorer`, write its score file under `dir`, and return
/// the report row.
pub fn evaluate(
    method: &str,
    scorer: &dyn Scorer,
    config: &TrainConfig,
    test: &DatasetSplit,
    dir: &ExperimentDir,
    reduction: Reduction,
) -> Result<(ReportRow, Vec<ScoredExample>)> {
    let scored = score_dataset(test, scorer, false, reduction)?;
    let auc = auc(&scored)?;
    let scores_path = dir.scores_dir().join(format!("{method}.tsv"));
    let header = ScoresHeader {
        method: method.to_string(),
        config_hash: config.hash(),
        reduction,
        seed: config.seed,
    };
    write_scores(&scores_path, &header, &scored)?;
    let row = ReportRow {
        method: method.to_string(),
        auc,
        scores_path,
        config_hash: header.config_hash,
        seed: config.seed,
    };
    Ok((row, scored))
}

/// Evaluate every scorer of a trained model.
pub fn evaluate_model(
    model: &TrainedModel,
    config: &TrainConfig,
    test: &DatasetSplit,
    dir: &ExperimentDir,
    reduction: Reduction,
) -> Result<Vec<(ReportRow, RocCurve)>> {
    model
        .scorers(config.loss.kappa)
        .into_iter()
        .map(|(name, scorer)| {
            let (row, scored) = evaluate(&name, scorer.as_ref(), config, test, dir, reduction)?;
            Ok((row, roc_curve(&scored)?))
        })
        .collect()
}

/// Recompute AUC offline from a score file.
pub fn auc_from_score_file(path: &Path) -> Result<f64> {
    auc(&read_scores(path)?.1)
}

/// Report row and ROC curve for an existing score file.
pub fn evaluate_score_file(path: &Path) -> Result<(ReportRow, RocCurve)> {
    let (header, scored) = read_scores(path)?;
    let curve = roc_curve(&scored)?;
    let row = ReportRow {
        method: header.method,
        auc: curve.area(),
        scores_path: path.to_path_buf(),
        config_hash: header.config_hash,
        seed: header.seed,
    };
    Ok((row, curve))
}
