//! Parameter checkpoints: the binary `GRBM` container and stores keyed by epoch.
//!
//! Layout (little-endian): `"GRBM"`, u32 version (1), u32 M, u32 N, then W
//! (row-major), a, b and σ as f64, then a trailing u64 epoch index.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{GrbmError, Result};
use crate::params::GrbmParams;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GRBM";
pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointId(pub String);

impl CheckpointId {
    pub fn for_epoch(epoch: usize) -> Self {
        CheckpointId(format!("epoch-{epoch:05}"))
    }
}

impl fmt::Display for CheckpointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn encode_checkpoint(params: &GrbmParams, epoch: u64) -> Vec<u8> {
    let (m, n) = (params.n_hidden(), params.n_visible());
    let mut out = Vec::with_capacity(4 + 12 + 8 * (m * n + m + 2 * n) + 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    let values = params
        .weights()
        .iter()
        .chain(params.hidden_bias().iter())
        .chain(params.visible_bias().iter())
        .chain(params.sigma().iter())
        .copied()
        .collect::<Vec<f64>>();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&epoch.to_le_bytes());
    out
}

/// Little-endian cursor over a byte buffer that reports truncation as a format error.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader { bytes, pos: 0, path }
    }

    pub(crate) fn err(&self, reason: impl Into<String>) -> GrbmError {
        GrbmError::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub(crate) fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(self.err(format!("truncated at byte {}", self.pos)));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(self.err(format!(
                "bad magic, expected {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| self.err("size overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.err(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

/// Decodes a checkpoint buffer; `path` is only used in error messages.
pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(GrbmParams, u64)> {
    let mut r = Reader::new(bytes, path);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let w = r.f64s(m * n)?;
    let a = r.f64s(m)?;
    let b = r.f64s(n)?;
    let sigma = r.f64s(n)?;
    let epoch = r.u64()?;
    r.finish()?;
    let weights = Array2::from_shape_vec((m, n), w).map_err(|e| r.err(e.to_string()))?;
    let params = GrbmParams::new(weights, Array1::from(a), Array1::from(b), Array1::from(sigma))
        .map_err(|e| r.err(e.to_string()))?;
    Ok((params, epoch))
}

pub fn write_checkpoint(path: &Path, params: &GrbmParams, epoch: u64) -> Result<()> {
    write_atomic(path, &encode_checkpoint(params, epoch))
}

pub fn read_checkpoint(path: &Path) -> Result<(GrbmParams, u64)> {
    decode_checkpoint(&fs::read(path)?, path)
}

/// Writes through a temporary sibling so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Anything checkpointed parameters can be loaded from.
pub trait CheckpointSource {
    fn load(&self, id: &CheckpointId) -> Result<GrbmParams>;
}

/// In-memory checkpoints keyed by epoch.
#[derive(Debug, Clone, Default)]
pub struct MemoryCheckpoints {
    by_id: BTreeMap<CheckpointId, GrbmParams>,
}

impl MemoryCheckpoints {
    pub fn insert(&mut self, epoch: usize, params: GrbmParams) -> CheckpointId {
        let id = CheckpointId::for_epoch(epoch);
        self.by_id.insert(id.clone(), params);
        id
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

impl CheckpointSource for MemoryCheckpoints {
    fn load(&self, id: &CheckpointId) -> Result<GrbmParams> {
        self.by_id.get(id).cloned().ok_or_else(|| GrbmError::Checkpoint {
            id: id.to_string(),
            reason: "not present in memory store".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub epoch: usize,
    pub file: String,
    pub ami: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub entries: Vec<ManifestEntry>,
}

/// A directory of `epoch-NNNNN.grbm` files plus a `manifest.json` index.
#[derive(Debug)]
pub struct CheckpointStore {
    dir: PathBuf,
    manifest: Manifest,
}

impl CheckpointStore {
    /// Opens the store in `dir`, creating it (and an empty manifest) if needed.
    pub fn open(dir: impl Into<PathBuf>, run_id: &str) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let path = dir.join(MANIFEST);
        let manifest = if path.exists() {
            let manifest: Manifest = serde_json::from_slice(&fs::read(&path)?).map_err(|e| {
                GrbmError::Format {
                    path: path.clone(),
                    reason: e.to_string(),
                }
            })?;
            manifest
        } else {
            Manifest {
                run_id: run_id.to_string(),
                entries: Vec::new(),
            }
        };
        let store = CheckpointStore { dir, manifest };
        store.check_consistency()?;
        Ok(store)
    }

    /// Opens an existing store without creating anything.
    pub fn open_existing(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let path = dir.join(MANIFEST);
        let manifest: Manifest =
            serde_json::from_slice(&fs::read(&path)?).map_err(|e| GrbmError::Format {
                path: path.clone(),
                reason: e.to_string(),
            })?;
        let store = CheckpointStore { dir, manifest };
        store.check_consistency()?;
        Ok(store)
    }

    fn check_consistency(&self) -> Result<()> {
        let mut last = None;
        for e in &self.manifest.entries {
            if last.is_some_and(|l| e.epoch <= l) {
                return Err(GrbmError::Format {
                    path: self.dir.join(MANIFEST),
                    reason: format!("epoch {} is duplicated or out of order", e.epoch),
                });
            }
            last = Some(e.epoch);
            if !self.dir.join(&e.file).exists() {
                return Err(GrbmError::Checkpoint {
                    id: e.file.clone(),
                    reason: "listed in manifest but missing on disk".into(),
                });
            }
        }
        Ok(())
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Writes the checkpoint for `epoch` and records it in the manifest.
    pub fn save(&mut self, epoch: usize, ami: f64, params: &GrbmParams) -> Result<CheckpointId> {
        let id = CheckpointId::for_epoch(epoch);
        let file = format!("{id}.grbm");
        write_checkpoint(&self.dir.join(&file), params, epoch as u64)?;
        self.manifest.entries.retain(|e| e.epoch < epoch);
        self.manifest.entries.push(ManifestEntry { epoch, file, ami });
        self.flush()?;
        Ok(id)
    }

    /// Drops manifest entries after `epoch` (used when resuming).
    pub fn truncate_after(&mut self, epoch: usize) -> Result<()> {
        self.manifest.entries.retain(|e| e.epoch <= epoch);
        self.flush()
    }

    fn flush(&self) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write_atomic(&self.dir.join(MANIFEST), &json)
    }

    pub fn path_of(&self, id: &CheckpointId) -> PathBuf {
        self.dir.join(format!("{id}.grbm"))
    }
}

impl CheckpointSource for CheckpointStore {
    fn load(&self, id: &CheckpointId) -> Result<GrbmParams> {
        let path = self.path_of(id);
        read_checkpoint(&path)
            .map(|(p, _)| p)
            .map_err(|e| GrbmError::Checkpoint {
                id: id.to_string(),
                reason: e.to_string(),
            })
    }
}
