//! Checkpoint container.
//!
//! Layout: a magic line, the byte length of the JSON header on its own line,
//! the header, then every tensor as little-endian `f32` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::Tensor;

use crate::data::BatchState;
use crate::datamodel::TrainConfig;
use crate::error::{Error, Result};
use crate::networks::{tensor_to_f32, ParameterSet};

pub const MAGIC: &str = "ADGAN-CHECKPOINT";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<i64>,
}

impl TensorMeta {
    fn numel(&self) -> usize {
        self.shape.iter().product::<i64>() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub method: String,
    pub config_hash: String,
    pub config: TrainConfig,
    pub iteration: u64,
    pub seed: u64,
    /// Word position of the training random stream, decimal.
    pub rng_word_pos: String,
    pub batches: BatchState,
    /// Update counters of each optimizer, by name.
    pub optimizer_updates: Vec<(String, u64)>,
    pub tensors: Vec<TensorMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    data: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn new(method: &str, config: &TrainConfig, iteration: u64) -> Self {
        Self {
            header: CheckpointHeader {
                schema_version: SCHEMA_VERSION,
                method: method.to_string(),
                config_hash: config.hash(),
                config: config.clone(),
                iteration,
                seed: config.seed,
                rng_word_pos: "0".into(),
                batches: BatchState { epoch: 0, cursor: 0 },
                optimizer_updates: Vec::new(),
                tensors: Vec::new(),
            },
            data: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor) {
        self.header.tensors.push(TensorMeta {
            name: name.into(),
            shape: t.size(),
        });
        self.data.push(tensor_to_f32(t));
    }

    pub fn push_params(&mut self, params: &ParameterSet) {
        for (name, t) in params.iter() {
            self.push(name, t);
        }
    }

    pub fn get(&self, name: &str) -> Option<(&[i64], &[f32])> {
        let i = self.header.tensors.iter().position(|m| m.name == name)?;
        Some((&self.header.tensors[i].shape, &self.data[i]))
    }

    fn require(&self, name: &str) -> Result<(&[i64], &[f32])> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    /// Copy every entry of `params` from this checkpoint.
    pub fn load_params(&self, params: &ParameterSet) -> Result<()> {
        for name in params.names() {
            let (shape, values) = self.require(name)?;
            params.load(name, shape, values)?;
        }
        Ok(())
    }

    /// Copy a stored tensor into `dst`, which must have the same shape.
    pub fn load_into(&self, name: &str, dst: &Tensor) -> Result<()> {
        let (shape, values) = self.require(name)?;
        if dst.size() != shape {
            return Err(Error::Checkpoint(format!("tensor `{name}` has shape {shape:?}, expected {:?}", dst.size())));
        }
        let src = Tensor::from_slice(values).reshape(shape).to_kind(dst.kind());
        tch::no_grad(|| dst.shallow_clone().copy_(&src));
        Ok(())
    }

    pub fn optimizer_updates(&self, name: &str) -> Result<u64> {
        self.header
            .optimizer_updates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, u)| *u)
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_string(&self.header).expect("header serializes");
        let mut out = format!("{MAGIC}\n{}\n{header}", header.len()).into_bytes();
        for values in &self.data {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: &str| Error::Checkpoint(reason.to_string());
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        if lines.next() != Some(MAGIC.as_bytes()) {
            return Err(bad("not a checkpoint file"));
        }
        let len: usize = lines
            .next()
            .and_then(|l| std::str::from_utf8(l).ok())
            .and_then(|l| l.parse().ok())
            .ok_or_else(|| bad("missing header length"))?;
        let rest = lines.next().ok_or_else(|| bad("truncated header"))?;
        if rest.len() < len {
            return Err(bad("truncated header"));
        }
        let value: serde_json::Value =
            serde_json::from_slice(&rest[..len]).map_err(|e| bad(&format!("bad header: {e}")))?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(Error::Checkpoint(format!(
                "schema version {version:?} is not supported (expected {SCHEMA_VERSION})"
            )));
        }
        let header: CheckpointHeader =
            serde_json::from_value(value).map_err(|e| bad(&format!("bad header: {e}")))?;
        let blob = &rest[len..];
        let expected: usize = header.tensors.iter().map(|m| m.numel() * 4).sum();
        if blob.len() != expected {
            return Err(Error::Checkpoint(format!(
                "tensor data is {} bytes, header describes {expected}",
                blob.len()
            )));
        }
        let mut data = Vec::with_capacity(header.tensors.len());
        let mut offset = 0;
        for meta in &header.tensors {
            let n = meta.numel();
            let values = blob[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            offset += 4 * n;
            data.push(values);
        }
        Ok(Self { header, data })
    }

    /// Write atomically: a temporary sibling is renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Kind;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("adgan", &TrainConfig::desk(), 7);
        c.push("a", &Tensor::from_slice(&[1.5f32, -0.0, f32::MIN_POSITIVE]).view([3, 1]));
        c.push("b", &Tensor::from_slice(&[2.0f64]).to_kind(Kind::Float));
        c.header.optimizer_updates.push(("dv".into(), 3));
        c
    }

    #[test]
    fn bytes_round_trip() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
        assert_eq!(back.get("a").unwrap().0, &[3, 1]);
        assert_eq!(back.optimizer_updates("dv").unwrap(), 3);
    }

    #[test]
    fn truncated_and_foreign_files_rejected() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }

    #[test]
    fn schema_version_mismatch_refused() {
        let mut c = sample();
        c.header.schema_version = 99;
        let err = Checkpoint::from_bytes(&c.to_bytes()).unwrap_err();
        assert!(err.to_string().contains("schema version"));
    }
}
