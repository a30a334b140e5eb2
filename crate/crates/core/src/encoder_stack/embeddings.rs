//! Patch embedding matrices and their file format.
//!
//! File layout: magic `b"SEMB"`, `u32` N, `u32` D (little-endian), then
//! `N·D` little-endian `f32` values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"SEMB";

/// `N × D` patch features, rows aligned with the tissue tiles of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage("embedding dimension must be positive"));
        }
        if values.len() != n * dim {
            return Err(Error::usage(format!("{n}x{dim} embeddings need {} values, got {}", n * dim, values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding values".into()));
        }
        Ok(EmbeddingMatrix { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>], dim: usize) -> Result<Self> {
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::usage("embedding rows have inconsistent width"));
        }
        EmbeddingMatrix::new(rows.len(), dim, rows.concat())
    }

    pub fn n_patches(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.values.is_empty() {
            return Err(Error::usage("empty embedding sequence"));
        }
        Tensor::new(vec![self.n_patches(), self.dim], self.values.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.values.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&(self.n_patches() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for &v in &self.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: String| Error::format(origin, m);
        if bytes.len() < 12 || &bytes[..4] != EMBEDDING_MAGIC {
            return Err(bad("missing embedding header".into()));
        }
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if d == 0 || body.len() != n * d * 4 {
            return Err(bad(format!("header declares {n}x{d} but body has {} bytes", body.len())));
        }
        let values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite embedding value".into()));
        }
        Ok(EmbeddingMatrix { dim: d, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

/// Loads an embedding file, checking width against the model and row count
/// against the slide's tissue-tile count when given.
pub fn load_embeddings(path: &Path, expected_dim: Option<usize>, expected_rows: Option<usize>) -> Result<EmbeddingMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let m = EmbeddingMatrix::decode(&bytes, path)?;
    if let Some(d) = expected_dim {
        if m.dim() != d {
            return Err(Error::format(path, format!("embedding width {} does not match configured {d}", m.dim())));
        }
    }
    if let Some(n) = expected_rows {
        if m.n_patches() != n {
            return Err(Error::format(path, format!("{} embedding rows but {n} tissue tiles", m.n_patches())));
        }
    }
    Ok(m)
}
