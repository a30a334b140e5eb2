use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{Error, Result};

pub const DEFAULT_PATCH_SIZE: usize = 224;

/// Background-exclusion settings.
///
/// A pixel counts as tissue when its HSV saturation `(max − min) / max`
/// exceeds `saturation_threshold`; gray rasters use darkness `1 − v/255`
/// instead. A patch is tissue when the tissue-pixel fraction is at least
/// `tissue_fraction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TissueFilter {
    pub saturation_threshold: f64,
    pub tissue_fraction: f64,
}

impl Default for TissueFilter {
    fn default() -> Self {
        TissueFilter { saturation_threshold: 0.08, tissue_fraction: 0.25 }
    }
}

impl TissueFilter {
    pub fn is_tissue(&self, patch: &Raster) -> bool {
        tissue_fraction(patch, self.saturation_threshold) >= self.tissue_fraction
    }
}

/// Fraction of pixels whose saturation (or darkness, for gray) exceeds `threshold`.
pub fn tissue_fraction(patch: &Raster, threshold: f64) -> f64 {
    let n = patch.width() * patch.height();
    if n == 0 {
        return 0.0;
    }
    let ch = patch.channels();
    let hits = patch
        .pixels()
        .chunks_exact(ch)
        .filter(|p| pixel_saturation(p) > threshold)
        .count();
    hits as f64 / n as f64
}

fn pixel_saturation(p: &[u8]) -> f64 {
    if p.len() == 1 {
        return 1.0 - f64::from(p[0]) / 255.0;
    }
    let max = p[0].max(p[1]).max(p[2]);
    let min = p[0].min(p[1]).min(p[2]);
    if max == 0 {
        0.0
    } else {
        f64::from(max - min) / f64::from(max)
    }
}

/// Convenience wrapper with a patch-size check.
pub fn tissue_filter(patch: &Raster, patch_size: usize, filter: &TissueFilter) -> Result<bool> {
    if patch.width() != patch_size || patch.height() != patch_size {
        return Err(Error::usage(format!(
            "patch is {}x{}, expected {patch_size}x{patch_size}",
            patch.width(),
            patch.height()
        )));
    }
    Ok(filter.is_tissue(patch))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchEntry {
    pub row: usize,
    pub col: usize,
    pub x: usize,
    pub y: usize,
    pub tissue: bool,
}

/// Candidate tiles of one slide, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub width: usize,
    pub height: usize,
    pub entries: Vec<PatchEntry>,
}

impl PatchGrid {
    pub fn rows(&self) -> usize {
        self.height / self.patch_size
    }

    pub fn cols(&self) -> usize {
        self.width / self.patch_size
    }

    pub fn tissue_entries(&self) -> impl Iterator<Item = &PatchEntry> {
        self.entries.iter().filter(|e| e.tissue)
    }

    pub fn tissue_count(&self) -> usize {
        self.tissue_entries().count()
    }

    /// Text table: comment lines for size metadata, a header, then `row col x y tissue`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# patch_size {}", self.patch_size);
        let _ = writeln!(s, "# source {} {}", self.width, self.height);
        s.push_str("row col x y tissue\n");
        for e in &self.entries {
            let _ = writeln!(s, "{} {} {} {} {}", e.row, e.col, e.x, e.y, u8::from(e.tissue));
        }
        s
    }

    pub fn from_text(text: &str, origin: &Path) -> Result<PatchGrid> {
        let bad = |m: String| Error::format(origin, m);
        let mut patch_size = None;
        let mut source = None;
        let mut entries = Vec::new();
        let mut saw_header = false;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts.as_slice() {
                    ["patch_size", v] => patch_size = v.parse::<usize>().ok(),
                    ["source", w, h] => source = w.parse::<usize>().ok().zip(h.parse::<usize>().ok()),
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                if line.split_whitespace().collect::<Vec<_>>() != ["row", "col", "x", "y", "tissue"] {
                    return Err(bad(format!("line {}: expected header `row col x y tissue`", ln + 1)));
                }
                saw_header = true;
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("line {}: non-integer field", ln + 1)))?;
            if nums.len() != 5 || nums[4] > 1 {
                return Err(bad(format!("line {}: expected 5 fields with tissue 0|1", ln + 1)));
            }
            entries.push(PatchEntry { row: nums[0], col: nums[1], x: nums[2], y: nums[3], tissue: nums[4] == 1 });
        }
        let patch_size = patch_size.ok_or_else(|| bad("missing `# patch_size` line".into()))?;
        let (width, height) = source.ok_or_else(|| bad("missing `# source` line".into()))?;
        let grid = PatchGrid { patch_size, width, height, entries };
        grid.validate().map_err(|e| bad(e.to_string()))?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::usage("patch_size must be positive"));
        }
        let ps = self.patch_size;
        let mut prev: Option<(usize, usize)> = None;
        for e in &self.entries {
            if e.x != e.col * ps || e.y != e.row * ps {
                return Err(Error::usage(format!("entry ({},{}) origin not on the patch lattice", e.row, e.col)));
            }
            if e.x + ps > self.width || e.y + ps > self.height {
                return Err(Error::usage(format!("entry ({},{}) exceeds the source", e.row, e.col)));
            }
            if let Some(p) = prev {
                if (e.row, e.col) <= p {
                    return Err(Error::usage("entries must be strictly row-major without duplicates"));
                }
            }
            prev = Some((e.row, e.col));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PatchGrid> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PatchGrid::from_text(&text, path)
    }
}

/// Cuts `raster` into non-overlapping `patch_size` squares from the top-left,
/// dropping partial edge tiles, and flags each one tissue/background.
pub fn tile_slide(raster: &Raster, patch_size: usize, filter: &TissueFilter) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::usage("patch_size must be at least 1"));
    }
    let rows = raster.height() / patch_size;
    let cols = raster.width() / patch_size;
    let entries = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let (row, col) = (k / cols, k % cols);
            let (x, y) = (col * patch_size, row * patch_size);
            let patch = raster.crop(x, y, patch_size, patch_size)?;
            Ok(PatchEntry { row, col, x, y, tissue: filter.is_tissue(&patch) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchGrid { patch_size, width: raster.width(), height: raster.height(), entries })
}

/// Pixels of every tissue tile, in grid order.
pub fn tissue_patches(raster: &Raster, grid: &PatchGrid) -> Result<Vec<Raster>> {
    grid.tissue_entries()
        .map(|e| raster.crop(e.x, e.y, grid.patch_size, grid.patch_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAGENTA: [u8; 3] = [255, 0, 255];
    const WHITE: [u8; 3] = [255, 255, 255];

    #[test]
    fn tiles_448_all_tissue() {
        let r = Raster::filled(448, 448, MAGENTA);
        let g = tile_slide(&r, 224, &TissueFilter::default()).unwrap();
        let origins: Vec<(usize, usize)> = g.entries.iter().map(|e| (e.x, e.y)).collect();
        assert_eq!(origins, vec![(0, 0), (224, 0), (0, 224), (224, 224)]);
        assert!(g.entries.iter().all(|e| e.tissue));
    }

    #[test]
    fn partial_edges_dropped_and_white_is_background() {
        let r = Raster::filled(500, 500, WHITE);
        let g = tile_slide(&r, 224, &TissueFilter::default()).unwrap();
        assert_eq!(g.entries.len(), 4);
        assert_eq!(g.tissue_count(), 0);
        let tiny = Raster::filled(100, 300, MAGENTA);
        assert!(tile_slide(&tiny, 224, &TissueFilter::default()).unwrap().entries.is_empty());
    }

    #[test]
    fn filter_examples() {
        let f = TissueFilter::default();
        assert!(!f.is_tissue(&Raster::filled(8, 8, WHITE)));
        assert!(f.is_tissue(&Raster::filled(8, 8, MAGENTA)));
        let mut half = Raster::filled(8, 8, WHITE);
        for y in 0..4 {
            for x in 0..8 {
                half.set_rgb(x, y, MAGENTA);
            }
        }
        assert_eq!(tissue_fraction(&half, 0.08), 0.5);
        let lo = TissueFilter { tissue_fraction: 0.25, ..f };
        let hi = TissueFilter { tissue_fraction: 0.75, ..f };
        assert!(lo.is_tissue(&half));
        assert!(!hi.is_tissue(&half));
        assert!(tissue_filter(&half, 4, &f).is_err());
    }

    #[test]
    fn thresholds_sweep() {
        for k in 1..100 {
            let t = k as f64 / 100.0;
            let f = TissueFilter { saturation_threshold: t, tissue_fraction: t };
            assert!(!f.is_tissue(&Raster::filled(4, 4, WHITE)));
            assert!(f.is_tissue(&Raster::filled(4, 4, MAGENTA)));
        }
    }

    #[test]
    fn text_roundtrip_and_validation() {
        let r = Raster::filled(460, 230, MAGENTA);
        let g = tile_slide(&r, 224, &TissueFilter::default()).unwrap();
        let back = PatchGrid::from_text(&g.to_text(), Path::new("g")).unwrap();
        assert_eq!(back, g);
        let broken = g.to_text().replace("224 0 1", "225 0 1");
        assert!(PatchGrid::from_text(&broken, Path::new("g")).is_err());
    }
}
