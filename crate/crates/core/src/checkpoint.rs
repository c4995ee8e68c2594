//! Checkpoints on disk: `manifest.json` plus one MTX1 file per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AoftError, Result};
use crate::linalg::{load_mtx1, save_mtx1, Matrix};
use crate::model::{ModelConfig, ParamStore};
use crate::peft::{prompt_layers, Method, PeftConfig};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "aoft-checkpoint";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    /// Backbone plus classifier head.
    Backbone,
    /// Adapter parameters plus the fine-tuned head.
    Adapter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: CheckpointKind,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peft: Option<PeftConfig>,
    /// Layers that carry adapter tensors.
    #[serde(default)]
    pub layers: Vec<usize>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub model: ModelConfig,
    pub peft: Option<PeftConfig>,
    pub params: ParamStore,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn adapter_layers(model: &ModelConfig, peft: &PeftConfig) -> Vec<usize> {
    match peft.method {
        Method::LinearProbe | Method::Full => Vec::new(),
        Method::Vpt | Method::VptAoft => prompt_layers(model, peft.vpt_depth),
        _ => (0..model.layers).collect(),
    }
}

impl Checkpoint {
    pub fn backbone(model: ModelConfig, params: ParamStore) -> Self {
        Self {
            kind: CheckpointKind::Backbone,
            model,
            peft: None,
            params,
        }
    }

    pub fn adapter(model: ModelConfig, peft: PeftConfig, params: ParamStore) -> Self {
        Self {
            kind: CheckpointKind::Adapter,
            model,
            peft: Some(peft),
            params,
        }
    }

    pub fn manifest(&self) -> Manifest {
        let layers = match &self.peft {
            Some(p) => adapter_layers(&self.model, p),
            None => Vec::new(),
        };
        Manifest {
            format: FORMAT.into(),
            version: 1,
            kind: self.kind,
            model: self.model.clone(),
            peft: self.peft.clone(),
            layers,
            tensors: self
                .params
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.clone(),
                    file: format!("{name}.mtx"),
                    rows: m.rows(),
                    cols: m.cols(),
                    sha256: sha256_hex(&m.payload_bytes()),
                })
                .collect(),
        }
    }

    /// Writes into `dir`, which is created if needed.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        for entry in &manifest.tensors {
            save_mtx1(dir.join(&entry.file), self.params.get(&entry.name)?)?;
        }
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Reads a checkpoint and verifies every tensor's shape and digest.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.format != FORMAT || manifest.version != 1 {
            return Err(AoftError::Format(format!(
                "unsupported checkpoint {} v{}",
                manifest.format, manifest.version
            )));
        }
        manifest.model.validate()?;
        let mut params = ParamStore::new();
        for e in &manifest.tensors {
            if e.file.contains('/') || e.file.contains("..") {
                return Err(AoftError::Format(format!("tensor path `{}` escapes the checkpoint", e.file)));
            }
            let m: Matrix = load_mtx1(dir.join(&e.file))?;
            if m.shape() != (e.rows, e.cols) {
                return Err(AoftError::Format(format!(
                    "tensor `{}` is {:?}, manifest says {:?}",
                    e.name,
                    m.shape(),
                    (e.rows, e.cols)
                )));
            }
            if sha256_hex(&m.payload_bytes()) != e.sha256 {
                return Err(AoftError::Format(format!("tensor `{}` fails its checksum", e.name)));
            }
            params.insert(e.name.clone(), m);
        }
        Ok(Self {
            kind: manifest.kind,
            model: manifest.model,
            peft: manifest.peft,
            params,
        })
    }
}
