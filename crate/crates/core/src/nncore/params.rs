use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, Tensor};

/// Named trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

/// JSON sidecar describing a flat little-endian f64 parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub dtype: String,
    pub total_bytes: usize,
    pub params: Vec<ManifestEntry>,
}

const DTYPE: &str = "f64-le";

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor and returns its id.
    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total number of scalar parameters.
    pub fn total(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn manifest(&self) -> CheckpointManifest {
        let mut offset = 0;
        let params = self
            .iter()
            .map(|(name, t)| {
                let e = ManifestEntry {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += t.len() * 8;
                e
            })
            .collect();
        CheckpointManifest {
            dtype: DTYPE.into(),
            total_bytes: offset,
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total() * 8);
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Writes `<stem>.bin` and `<stem>.json` next to each other.
    pub fn save(&self, blob: &Path, manifest: &Path) -> Result<(), NnError> {
        fs::write(blob, self.to_bytes())?;
        fs::write(manifest, serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }

    pub fn load(blob: &Path, manifest: &Path) -> Result<Self, NnError> {
        let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(manifest)?)?;
        Self::from_parts(&manifest, &fs::read(blob)?)
    }

    pub fn from_parts(manifest: &CheckpointManifest, bytes: &[u8]) -> Result<Self, NnError> {
        if manifest.dtype != DTYPE {
            return Err(NnError::Checkpoint(format!("unsupported dtype {}", manifest.dtype)));
        }
        if bytes.len() != manifest.total_bytes {
            return Err(NnError::Checkpoint(format!(
                "blob has {} bytes, manifest declares {}",
                bytes.len(),
                manifest.total_bytes
            )));
        }
        let mut store = ParamStore::new();
        for e in &manifest.params {
            let len: usize = e.shape.iter().product();
            let end = e.offset + len * 8;
            if end > bytes.len() {
                return Err(NnError::Checkpoint(format!("{} extends past the blob", e.name)));
            }
            let data = bytes[e.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            store.add(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        }
        Ok(store)
    }

    /// Checks that `other` has identical names and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.names == other.names
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape() == b.shape())
    }
}
