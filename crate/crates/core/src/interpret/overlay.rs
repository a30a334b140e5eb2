use crate::error::{Error, Result};
use crate::slide_io::{PatchGrid, Raster};

use super::saliency::PatchSaliency;

pub const BORDER: usize = 3;
pub const TINT: f64 = 0.3;

/// Border and tint colour per rank (1-based), cycling after five.
pub const RANK_COLORS: [[u8; 3]; 5] = [[230, 25, 75], [245, 130, 48], [255, 225, 25], [60, 180, 75], [0, 130, 200]];

// 3×5 glyphs for the digits 0-9, one row per `u8` (bits 2..0 left to right).
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

/// Pixel rectangle `[x0, x1) × [y0, y1)` of a slide-space box on a
/// thumbnail made by [`crate::slide_io::thumbnail`].
pub fn thumbnail_rect(grid: &PatchGrid, thumb: &Raster, x: usize, y: usize, size: usize) -> (usize, usize, usize, usize) {
    let (tw, th) = (thumb.width(), thumb.height());
    let longest = grid.width.max(grid.height) as f64;
    let fit = (tw.min(th)) as f64;
    let (cw, ch) = if grid.width == grid.height {
        (tw, th)
    } else {
        let side = |s: usize| ((s as f64 * fit / longest).round() as usize).clamp(1, fit as usize);
        (side(grid.width), side(grid.height))
    };
    let (ox, oy) = ((tw - cw) / 2, (th - ch) / 2);
    let sx = cw as f64 / grid.width as f64;
    let sy = ch as f64 / grid.height as f64;
    let map = |v: usize, s: f64, o: usize, lim: usize| (o + (v as f64 * s).round() as usize).min(lim);
    (
        map(x, sx, ox, tw),
        map(x + size, sx, ox, tw),
        map(y, sy, oy, th),
        map(y + size, sy, oy, th),
    )
}

/// Outlines and tints the ranked patches on a copy of `thumb`; rank 1 is
/// drawn last so it stays on top. The rank number is drawn in the
/// top-left corner of boxes large enough to hold it.
pub fn render_overlay(thumb: &Raster, grid: &PatchGrid, sal: &PatchSaliency) -> Result<Raster> {
    if sal.ranked.is_empty() {
        return Ok(thumb.clone());
    }
    let tiles: Vec<_> = grid.tissue_entries().collect();
    let mut out = thumb.to_rgb();
    for (rank, &(idx, _)) in sal.ranked.iter().enumerate().rev() {
        let e = tiles
            .get(idx)
            .ok_or_else(|| Error::usage(format!("patch index {idx} outside the grid's {} tissue tiles", tiles.len())))?;
        let color = RANK_COLORS[rank % RANK_COLORS.len()];
        let (x0, x1, y0, y1) = thumbnail_rect(grid, thumb, e.x, e.y, grid.patch_size);
        for y in y0..y1 {
            for x in x0..x1 {
                let edge = x < x0 + BORDER || x + BORDER >= x1 || y < y0 + BORDER || y + BORDER >= y1;
                let px = if edge {
                    color
                } else {
                    let p = out.rgb(x, y);
                    std::array::from_fn(|c| ((1.0 - TINT) * p[c] as f64 + TINT * color[c] as f64).round() as u8)
                };
                out.set_rgb(x, y, px);
            }
        }
        draw_number(&mut out, rank + 1, x0 + BORDER + 1, y0 + BORDER + 1, x1, y1, color);
    }
    Ok(out)
}

fn draw_number(img: &mut Raster, n: usize, x: usize, y: usize, x_lim: usize, y_lim: usize, color: [u8; 3]) {
    let digits: Vec<usize> = n.to_string().bytes().map(|b| (b - b'0') as usize).collect();
    let width = digits.len() * 4 - 1;
    if x + width + BORDER > x_lim || y + 5 + BORDER > y_lim {
        return;
    }
    for (i, &d) in digits.iter().enumerate() {
        for (r, bits) in DIGITS[d].iter().enumerate() {
            for c in 0..3 {
                if bits >> (2 - c) & 1 == 1 {
                    img.set_rgb(x + i * 4 + c, y + r, color);
                }
            }
        }
    }
}
