//! Deterministic synthetic slides with known tissue layout, for tests and demos.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{Error, Result};
use crate::numerics::SeedStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueKind {
    Background,
    Stroma,
    Tumor,
    Necrosis,
}

impl TissueKind {
    pub const ALL: [TissueKind; 4] = [TissueKind::Background, TissueKind::Stroma, TissueKind::Tumor, TissueKind::Necrosis];

    pub fn is_tissue(self) -> bool {
        self != TissueKind::Background
    }

    pub fn name(self) -> &'static str {
        match self {
            TissueKind::Background => "background",
            TissueKind::Stroma => "stroma",
            TissueKind::Tumor => "tumor",
            TissueKind::Necrosis => "necrosis",
        }
    }
}

/// Axis-aligned region in pixels; must sit on the patch lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    pub kind: TissueKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    /// Kind painted wherever no region applies.
    #[serde(default = "default_fill")]
    pub fill: TissueKind,
    #[serde(default)]
    pub regions: Vec<Region>,
}

fn default_fill() -> TissueKind {
    TissueKind::Background
}

impl SynthSpec {
    pub fn new(width: usize, height: usize, patch_size: usize) -> Self {
        SynthSpec { width, height, patch_size, fill: TissueKind::Background, regions: Vec::new() }
    }

    pub fn with_region(mut self, x: usize, y: usize, w: usize, h: usize, kind: TissueKind) -> Self {
        self.regions.push(Region { x, y, w, h, kind });
        self
    }

    /// Builds a spec from a row-major tile layout (`layout[row][col]`).
    pub fn from_tiles(layout: &[Vec<TissueKind>], patch_size: usize) -> Self {
        let rows = layout.len();
        let cols = layout.first().map_or(0, Vec::len);
        let mut spec = SynthSpec::new(cols * patch_size, rows * patch_size, patch_size);
        for (r, line) in layout.iter().enumerate() {
            for (c, &kind) in line.iter().enumerate() {
                if kind != spec.fill {
                    spec.regions.push(Region { x: c * patch_size, y: r * patch_size, w: patch_size, h: patch_size, kind });
                }
            }
        }
        spec
    }

    fn validate(&self) -> Result<()> {
        let ps = self.patch_size;
        if ps == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::usage("synthetic slide needs positive width, height and patch size"));
        }
        for (i, r) in self.regions.iter().enumerate() {
            if r.w == 0 || r.h == 0 || r.x % ps != 0 || r.y % ps != 0 || r.w % ps != 0 || r.h % ps != 0 {
                return Err(Error::usage(format!("region {i} is not aligned to the {ps}-pixel tile lattice")));
            }
            if r.x + r.w > self.width || r.y + r.h > self.height {
                return Err(Error::usage(format!("region {i} exceeds the canvas")));
            }
            for (j, o) in self.regions.iter().enumerate().take(i) {
                let overlap = r.x < o.x + o.w && o.x < r.x + r.w && r.y < o.y + o.h && o.y < r.y + r.h;
                if overlap {
                    return Err(Error::usage(format!("regions {j} and {i} overlap")));
                }
            }
        }
        Ok(())
    }

    fn kind_at(&self, x: usize, y: usize) -> TissueKind {
        self.regions
            .iter()
            .find(|r| x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h)
            .map_or(self.fill, |r| r.kind)
    }
}

/// Paints the layout with seeded texture. Returns the raster and the kind of
/// every full tile in row-major order. Pixels outside the full-tile area are
/// background.
pub fn synth_slide(seed: u64, spec: &SynthSpec) -> Result<(Raster, Vec<TissueKind>)> {
    spec.validate()?;
    let ps = spec.patch_size;
    let (rows, cols) = (spec.height / ps, spec.width / ps);
    let mut raster = Raster::filled(spec.width, spec.height, [0, 0, 0]);
    let mut rng = SeedStream::new(seed).rng("synth_slide");

    let mut labels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            labels.push(spec.kind_at(c * ps, r * ps));
        }
    }
    for y in 0..spec.height {
        for x in 0..spec.width {
            let in_grid = y < rows * ps && x < cols * ps;
            let kind = if in_grid { spec.kind_at(x, y) } else { TissueKind::Background };
            let color = paint(kind, x, y, &mut rng);
            raster.set_rgb(x, y, color);
        }
    }
    Ok((raster, labels))
}

fn jitter(rng: &mut impl Rng, base: [u8; 3], amp: i16) -> [u8; 3] {
    let mut out = [0u8; 3];
    for k in 0..3 {
        let v = i16::from(base[k]) + rng.gen_range(-amp..=amp);
        out[k] = v.clamp(0, 255) as u8;
    }
    out
}

fn paint(kind: TissueKind, x: usize, y: usize, rng: &mut impl Rng) -> [u8; 3] {
    match kind {
        TissueKind::Background => {
            let v = rng.gen_range(243u8..=250);
            [v, v, v.saturating_sub(rng.gen_range(0..3))]
        }
        TissueKind::Stroma => {
            // fibrous pink bands
            let band = ((x / 6 + y / 2) % 5) as i16 * 6;
            let b = [225u8.saturating_sub(band as u8), 150, 185];
            jitter(rng, b, 10)
        }
        TissueKind::Tumor => {
            // crowded dark nuclei on a purple background
            let cell = 14;
            let (cx, cy) = (x % cell, y % cell);
            let d2 = (cx as i32 - 7).pow(2) + (cy as i32 - 7).pow(2);
            if d2 <= 16 {
                jitter(rng, [80, 30, 120], 12)
            } else {
                jitter(rng, [190, 120, 200], 12)
            }
        }
        TissueKind::Necrosis => {
            // pale eosinophilic debris with scattered fragments
            if rng.gen_bool(0.05) {
                jitter(rng, [120, 60, 110], 20)
            } else {
                jitter(rng, [240, 185, 185], 8)
            }
        }
    }
}
