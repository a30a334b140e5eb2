//! Frozen toy patch encoder: pooled colour and texture statistics followed
//! by a fixed random projection and `tanh`.

use crate::error::{Error, Result};
use crate::numerics::{rng::fan_in_uniform, ParamStore, SeedStream, Tensor};
use crate::slide_io::Raster;

pub const PATCH_ENCODER_GROUP: &str = "patch_encoder";
const PROJ: &str = "patch_encoder.proj";
const BIAS: &str = "patch_encoder.bias";

/// Number of pooled statistics per patch.
pub const NUM_STATS: usize = 16;

#[derive(Clone, Copy, Debug)]
pub struct ToyPatchEncoder {
    pub patch_size: usize,
    pub dim: usize,
}

impl ToyPatchEncoder {
    /// Registers the encoder's fixed weights (never trainable).
    pub fn init(store: &mut ParamStore, seeds: &SeedStream, patch_size: usize, dim: usize) -> Self {
        let mut rng = seeds.rng("patch_encoder");
        // unit-variance projection so features spread over tanh's range
        let proj = fan_in_uniform(&mut rng, &[NUM_STATS, dim], 1).map(|v| v * 1.5);
        let bias = fan_in_uniform(&mut rng, &[dim], 4);
        store.insert(PROJ, proj, false);
        store.insert(BIAS, bias, false);
        ToyPatchEncoder { patch_size, dim }
    }

    pub fn encode(&self, store: &ParamStore, patch: &Raster) -> Result<Vec<f64>> {
        if patch.width() != self.patch_size || patch.height() != self.patch_size {
            return Err(Error::usage(format!(
                "patch is {}x{}, encoder expects {}x{}",
                patch.width(),
                patch.height(),
                self.patch_size,
                self.patch_size
            )));
        }
        let stats = pooled_stats(patch);
        let proj = &store.by_name(PROJ).ok_or_else(|| Error::usage("patch encoder weights missing"))?.value;
        let bias = &store.by_name(BIAS).ok_or_else(|| Error::usage("patch encoder bias missing"))?.value;
        if proj.cols() != self.dim {
            return Err(Error::usage("patch encoder width mismatch"));
        }
        let mut out = bias.data().to_vec();
        for (i, s) in stats.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(proj.row(i)) {
                *o += s * w;
            }
        }
        Ok(out.into_iter().map(f64::tanh).collect())
    }

    /// Encodes every patch into an `[N × dim]` matrix.
    pub fn encode_all(&self, store: &ParamStore, patches: &[Raster]) -> Result<Vec<Vec<f64>>> {
        patches.iter().map(|p| self.encode(store, p)).collect()
    }
}

/// Centered statistics in roughly `[-1, 1]`: per-channel mean and std,
/// saturation mean/std, dark fraction, quadrant luminance means, and
/// horizontal/vertical gradient energy plus a fine-texture term.
pub fn pooled_stats(patch: &Raster) -> [f64; NUM_STATS] {
    let (w, h) = (patch.width(), patch.height());
    let n = (w * h) as f64;
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut sat_sum = 0.0;
    let mut sat_sq = 0.0;
    let mut dark = 0.0;
    let mut quad = [0.0f64; 4];
    let mut lum = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = patch.rgb(x, y);
            let f = p.map(|v| f64::from(v) / 255.0);
            for k in 0..3 {
                sum[k] += f[k];
                sq[k] += f[k] * f[k];
            }
            let max = f[0].max(f[1]).max(f[2]);
            let min = f[0].min(f[1]).min(f[2]);
            let s = if max > 0.0 { (max - min) / max } else { 0.0 };
            sat_sum += s;
            sat_sq += s * s;
            let l = 0.299 * f[0] + 0.587 * f[1] + 0.114 * f[2];
            lum[y * w + x] = l;
            if l < 0.5 {
                dark += 1.0;
            }
            let q = usize::from(y >= h / 2) * 2 + usize::from(x >= w / 2);
            quad[q] += l;
        }
    }
    let mut grad_x = 0.0;
    let mut grad_y = 0.0;
    let mut lap = 0.0;
    for y in 0..h {
        for x in 0..w {
            let c = lum[y * w + x];
            if x + 1 < w {
                grad_x += (lum[y * w + x + 1] - c).abs();
            }
            if y + 1 < h {
                grad_y += (lum[(y + 1) * w + x] - c).abs();
            }
            if x > 0 && y > 0 && x + 1 < w && y + 1 < h {
                let nb = lum[y * w + x - 1] + lum[y * w + x + 1] + lum[(y - 1) * w + x] + lum[(y + 1) * w + x];
                lap += (4.0 * c - nb).abs();
            }
        }
    }
    let quad_n = n / 4.0;
    let mut out = [0.0; NUM_STATS];
    for k in 0..3 {
        let mean = sum[k] / n;
        out[k] = 2.0 * mean - 1.0;
        out[3 + k] = 4.0 * (sq[k] / n - mean * mean).max(0.0).sqrt();
    }
    let sat_mean = sat_sum / n;
    out[6] = 2.0 * sat_mean - 1.0;
    out[7] = 4.0 * (sat_sq / n - sat_mean * sat_mean).max(0.0).sqrt();
    out[8] = 2.0 * dark / n - 1.0;
    for q in 0..4 {
        out[9 + q] = 2.0 * quad[q] / quad_n.max(1.0) - 1.0;
    }
    out[13] = 8.0 * grad_x / n;
    out[14] = 8.0 * grad_y / n;
    out[15] = 2.0 * lap / n;
    out
}

/// Matrix form of encoded features.
pub fn features_to_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    let d = rows.first().map(Vec::len).ok_or_else(|| Error::usage("no patch features"))?;
    Tensor::new(vec![rows.len(), d], rows.concat())
}
