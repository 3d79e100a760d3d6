//! Experiment directory layout.
//!
//! ```text
//! <root>/config.json            config snapshot, written before training
//! <root>/metrics.jsonl          one row per iteration
//! <root>/checkpoints/           iter_NNNNNN.ckpt and final.ckpt
//! <root>/scores/                <method>_<split>.tsv
//! <root>/reconstructions/       <method>/<source_id>_triptych.png
//! <root>/report.tsv
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::datamodel::TrainConfig;
use crate::error::{Error, Result};

/// Environment variable that relocates relative output directories.
pub const OUT_ROOT_ENV: &str = "ADGAN_OUT_ROOT";

/// Resolve a relative output path against `$ADGAN_OUT_ROOT` when it is set.
pub fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

/// True when `path` is missing or an empty directory.
pub fn is_vacant(path: &Path) -> bool {
    match fs::read_dir(path) {
        Ok(mut entries) => entries.next().is_none(),
        Err(_) => !path.exists(),
    }
}

/// Create `path` as an empty directory. An existing non-empty directory is
/// refused unless `force`, in which case its contents are removed.
pub fn prepare_dir(path: &Path, force: bool) -> Result<()> {
    if !is_vacant(path) {
        if !force {
            return Err(Error::Config {
                field: "out",
                reason: format!("{} exists and is not empty (use --force)", path.display()),
            });
        }
        fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentDir {
    root: PathBuf,
}

impl ExperimentDir {
    /// Use an existing directory without touching it.
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Prepare a fresh directory (see [`prepare_dir`]) with its subdirectories.
    pub fn create(root: impl Into<PathBuf>, force: bool) -> Result<Self> {
        let dir = Self::open(root);
        prepare_dir(&dir.root, force)?;
        for sub in [dir.checkpoints_dir(), dir.scores_dir()] {
            fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        }
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint_path(&self, iteration: u64) -> PathBuf {
        self.checkpoints_dir().join(format!("iter_{iteration:06}.ckpt"))
    }

    pub fn final_checkpoint(&self) -> PathBuf {
        self.checkpoints_dir().join("final.ckpt")
    }

    pub fn scores_dir(&self) -> PathBuf {
        self.root.join("scores")
    }

    pub fn reconstructions_dir(&self) -> PathBuf {
        self.root.join("reconstructions")
    }

    pub fn report_path(&self) -> PathBuf {
        self.root.join("report.tsv")
    }

    pub fn sweep_report_path(&self) -> PathBuf {
        self.root.join("sweep.tsv")
    }

    /// Write the config snapshot.
    pub fn write_config(&self, cfg: &TrainConfig) -> Result<()> {
        let path = self.config_path();
        fs::write(&path, cfg.to_json() + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read_config(&self) -> Result<TrainConfig> {
        let path = self.config_path();
        TrainConfig::from_json(&fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?)
    }

    /// Periodic checkpoints in iteration order.
    pub fn checkpoints(&self) -> Result<Vec<PathBuf>> {
        let dir = self.checkpoints_dir();
        let mut out: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("iter_") && n.ends_with(".ckpt"))
            })
            .collect();
        out.sort();
        Ok(out)
    }
}
