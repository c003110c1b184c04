//! Versioned binary checkpoint container.
//!
//! Layout, all little-endian: 6-byte magic, u32 format version, u64 JSON
//! length plus the UTF-8 metadata document, u32 tensor count, then per
//! tensor a length-prefixed name, a u32 rank with u64 dims, and raw f32
//! data. Tensors are kept in a sorted map so identical state always
//! serializes to identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::dsp::{FeatureScaler, StftConfig};
use crate::models::{DiscriminatorSpec, GeneratorSpec};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"NITCG1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a checkpoint file (magic mismatch)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// Everything needed to rebuild the training state besides raw tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub epoch: u64,
    pub step: u64,
    /// Noise-type count N; labels are N+1 wide.
    pub n_noise: usize,
    /// Noise name to label index (1..=N); index 0 is clean by convention.
    pub label_map: BTreeMap<String, usize>,
    /// Whether models were trained with label conditioning.
    pub nit: bool,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub scaler: FeatureScaler,
    pub gen_spec: GeneratorSpec,
    pub disc_spec: DiscriminatorSpec,
    /// Uniform Adam step count per optimizer, keyed by model prefix.
    pub adam_steps: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors.get(name).ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let meta = serde_json::to_vec(&c.meta)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;
    w.write_all(&(c.tensors.len() as u32).to_le_bytes())?;
    for (name, tensor) in &c.tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact::<4>(r)?))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact::<8>(r)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_exact::<6>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta_len = read_u64(&mut r)?;
    if meta_len > 1 << 24 {
        return Err(CheckpointError::Corrupt(format!("metadata block of {meta_len} bytes")));
    }
    let mut meta_buf = vec![0u8; meta_len as usize];
    r.read_exact(&mut meta_buf)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf)?;

    let count = read_u32(&mut r)?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 12 {
            return Err(CheckpointError::Corrupt(format!("tensor name of {name_len} bytes")));
        }
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not UTF-8".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim == 0 || ndim > 8 {
            return Err(CheckpointError::Corrupt(format!("tensor {name} has rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut numel = 1usize;
        for _ in 0..ndim {
            let d = read_u64(&mut r)? as usize;
            numel = numel.saturating_mul(d);
            shape.push(d);
        }
        if numel == 0 || numel > 1 << 31 {
            return Err(CheckpointError::Corrupt(format!("tensor {name} has {numel} elements")));
        }
        let mut data = vec![0.0f32; numel];
        for v in &mut data {
            *v = f32::from_le_bytes(read_exact::<4>(&mut r)?);
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Corrupt(format!("tensor {name}: {e}")))?;
        if tensors.insert(name.clone(), tensor).is_some() {
            return Err(CheckpointError::Corrupt(format!("duplicate tensor {name}")));
        }
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CheckpointError::Corrupt("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { meta, tensors })
}
