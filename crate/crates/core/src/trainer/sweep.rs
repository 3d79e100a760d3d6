use std::fs;
use std::path::{Path, PathBuf};

use crate::datamodel::{DatasetSplit, Label, TrainConfig};
use crate::error::{Error, Result};
use crate::scoring::{score_dataset, Pipeline, Reduction};
use crate::store::ExperimentDir;

use super::train;

/// A split proven to contain no abnormal examples.
#[derive(Debug, Clone, Copy)]
pub struct NormalSplit<'a>(&'a DatasetSplit);

impl<'a> NormalSplit<'a> {
    pub fn new(split: &'a DatasetSplit) -> Result<Self> {
        if split.count(Label::Abnormal) > 0 {
            return Err(Error::Dataset(format!(
                "{} split holds abnormal examples and cannot be used for model selection",
                split.name
            )));
        }
        if split.is_empty() {
            return Err(Error::Dataset(format!("{} split is empty", split.name)));
        }
        Ok(Self(split))
    }

    pub fn split(&self) -> &'a DatasetSplit {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub mean_score: f64,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub best: (f64, f64),
}

/// `{0.1, 1, 10}` for both weights.
pub fn default_grid() -> Vec<(f64, f64)> {
    let values = [0.1, 1.0, 10.0];
    values
        .iter()
        .flat_map(|&a| values.iter().map(move |&b| (a, b)))
        .collect()
}

/// Index of the row with the lowest mean score. Scores within `1e-12` of
/// each other tie; ties go to the smaller `alpha`, then the smaller `beta`.
pub fn pick_best(rows: &[SweepRow]) -> Option<usize> {
    const TIE: f64 = 1e-12;
    let mut best: Option<usize> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let cur = &rows[b];
        let better = if (row.mean_score - cur.mean_score).abs() <= TIE {
            (row.alpha, row.beta) < (cur.alpha, cur.beta)
        } else {
            row.mean_score < cur.mean_score
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Train one model per grid point and keep the one whose reconstructions of
/// the validation normals score lowest on average.
///
/// With `dir` set, each run goes to `<dir>/a<alpha>_b<beta>/`.
pub fn select_hyperparams(
    cfg: &TrainConfig,
    train_split: &DatasetSplit,
    validation: NormalSplit<'_>,
    grid: &[(f64, f64)],
    dir: Option<&Path>,
) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::config("grid", "is empty"));
    }
    for &(a, b) in grid {
        if !((0.1..=10.0).contains(&a) && (0.1..=10.0).contains(&b)) {
            return Err(Error::config("grid", format!("point ({a}, {b}) is outside [0.1, 10]")));
        }
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(alpha, beta) in grid {
        let mut run_cfg = cfg.clone();
        run_cfg.loss.alpha = alpha;
        run_cfg.loss.beta = beta;
        let run_dir = match dir {
            Some(d) => Some(ExperimentDir::create(d.join(format!("a{alpha}_b{beta}")), true)?),
            None => None,
        };
        let out = train(&run_cfg, train_split, run_dir.as_ref())?;
        let nets = &out.state.nets;
        let scorer = Pipeline {
            encoder: &nets.gl,
            generator: &nets.gv,
        };
        let scored = score_dataset(validation.split(), &scorer, false, Reduction::Sum)?;
        let mean_score = scored.iter().map(|s| s.score).sum::<f64>() / scored.len() as f64;
        rows.push(SweepRow {
            alpha,
            beta,
            mean_score,
            checkpoint: run_dir.map(|d| d.final_checkpoint()),
        });
    }
    let best = &rows[pick_best(&rows).expect("grid is nonempty")];
    let best = (best.alpha, best.beta);
    Ok(SweepOutcome { rows, best })
}

/// Tab-separated `alpha beta mean_score checkpoint` table.
pub fn write_sweep_report(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::from("alpha\tbeta\tmean_score\tcheckpoint\n");
    for r in rows {
        let ckpt = r.checkpoint.as_ref().map_or("-".to_string(), |p| p.display().to_string());
        text.push_str(&format!("{}\t{}\t{:?}\t{ckpt}\n", r.alpha, r.beta, r.mean_score));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
