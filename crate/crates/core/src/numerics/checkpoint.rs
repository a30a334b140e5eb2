//! Checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"SLDCKPT\x01"
//! meta_len   u32
//! meta       meta_len bytes of UTF-8 JSON (CheckpointMeta)
//! count      u32       number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8)
//!   trainable u8 (0|1)
//!   rank     u8, dims rank × u32
//!   values   prod(dims) × f64
//! ```
//!
//! Tensors are written in store insertion order, so identical stores produce
//! identical bytes.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SLDCKPT\x01";
pub const CHECKPOINT_FORMAT: &str = "slidechat-ckpt/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub seed: u64,
    /// 0 for a freshly initialized model, otherwise the training stage.
    pub stage: u8,
    #[serde(default)]
    pub epoch: Option<u32>,
    /// Model configuration needed to rebuild the architecture.
    #[serde(default)]
    pub model: serde_json::Value,
}

impl CheckpointMeta {
    pub fn new(seed: u64, stage: u8) -> Self {
        CheckpointMeta {
            format: CHECKPOINT_FORMAT.to_string(),
            seed,
            stage,
            epoch: None,
            model: serde_json::Value::Null,
        }
    }
}

pub fn encode_checkpoint(store: &ParamStore, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + store.num_values() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let meta_json = serde_json::to_vec(meta).expect("metadata serializes");
    out.extend_from_slice(&(meta_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_json);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, p) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(u8::from(p.trainable));
        out.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let bad = |m: &str| Error::format(origin, m.to_string());
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad checkpoint magic"));
    }
    let meta_len = read_u32(&mut r).ok_or_else(|| bad("truncated metadata length"))? as usize;
    if r.len() < meta_len {
        return Err(bad("truncated metadata"));
    }
    let meta: CheckpointMeta =
        serde_json::from_slice(&r[..meta_len]).map_err(|e| bad(&format!("metadata: {e}")))?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(bad(&format!("unsupported format {}", meta.format)));
    }
    r = &r[meta_len..];
    let count = read_u32(&mut r).ok_or_else(|| bad("truncated tensor count"))?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(|_| bad("truncated name length"))?;
        let nlen = u16::from_le_bytes(b2) as usize;
        if r.len() < nlen + 2 {
            return Err(bad("truncated tensor record"));
        }
        let name = std::str::from_utf8(&r[..nlen]).map_err(|_| bad("name is not UTF-8"))?.to_string();
        let trainable = r[nlen] != 0;
        let rank = r[nlen + 1] as usize;
        r = &r[nlen + 2..];
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r).ok_or_else(|| bad("truncated dims"))? as usize);
        }
        let n: usize = shape.iter().product();
        if r.len() < n * 8 {
            return Err(bad("truncated tensor values"));
        }
        let data: Vec<f64> = r[..n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        r = &r[n * 8..];
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad(&format!("non-finite value in {name}")));
        }
        if store.id(&name).is_some() {
            return Err(bad(&format!("duplicate tensor {name}")));
        }
        let t = Tensor::new(shape, data).map_err(|e| bad(&e.to_string()))?;
        store.insert(name, t, trainable);
    }
    if !r.is_empty() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok((store, meta))
}

fn read_u32(r: &mut &[u8]) -> Option<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).ok()?;
    Some(u32::from_le_bytes(b))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &CheckpointMeta) -> Result<()> {
    let bytes = encode_checkpoint(store, meta);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("lm.embed", Tensor::new(vec![2, 3], vec![0.1, -0.2, 0.3, 1e-300, 5.0, -7.25]).unwrap(), true);
        s.insert("patch_encoder.proj", Tensor::vector(vec![1.0, 2.0]), false);
        s
    }

    #[test]
    fn roundtrip_preserves_bits() {
        let s = sample_store();
        let meta = CheckpointMeta::new(42, 1);
        let bytes = encode_checkpoint(&s, &meta);
        let (back, m2) = decode_checkpoint(&bytes, Path::new("mem")).unwrap();
        assert_eq!(m2, meta);
        assert_eq!(encode_checkpoint(&back, &m2), bytes);
        assert!(!back.by_name("patch_encoder.proj").unwrap().trainable);
    }

    #[test]
    fn rejects_corruption() {
        let s = sample_store();
        let mut bytes = encode_checkpoint(&s, &CheckpointMeta::new(1, 0));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], Path::new("x")).is_err());
        bytes[0] = b'X';
        assert!(decode_checkpoint(&bytes, Path::new("x")).is_err());
    }
}
