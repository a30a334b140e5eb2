use super::raster::Raster;
use crate::error::{Error, Result};

/// Side length of the thumbnail baseline input.
pub const THUMBNAIL_SIDE: usize = 1024;

/// Area-averaged `target × target` thumbnail.
///
/// Non-square inputs are scaled so the longest side equals `target`
/// (the other side rounded to the nearest pixel, at least 1), then centered
/// on a white canvas; the left/top margin takes the floor of the slack.
pub fn thumbnail(raster: &Raster, target: usize) -> Result<Raster> {
    if target == 0 {
        return Err(Error::usage("thumbnail target must be at least 1"));
    }
    if raster.is_empty() {
        return Err(Error::usage("cannot thumbnail an empty raster"));
    }
    let (w, h) = (raster.width(), raster.height());
    let longest = w.max(h);
    let scaled = |side: usize| ((side as f64 * target as f64 / longest as f64).round() as usize).clamp(1, target);
    let (cw, ch) = if w == h { (target, target) } else { (scaled(w), scaled(h)) };
    let content = resample_area(raster, cw, ch);
    if cw == target && ch == target {
        return Ok(content);
    }
    let white = if raster.channels() == 1 { vec![255u8] } else { vec![255u8; 3] };
    let c = raster.channels();
    let mut canvas = Vec::with_capacity(target * target * c);
    for _ in 0..target * target {
        canvas.extend_from_slice(&white);
    }
    let (ox, oy) = ((target - cw) / 2, (target - ch) / 2);
    for y in 0..ch {
        let dst = ((oy + y) * target + ox) * c;
        let src = y * cw * c;
        canvas[dst..dst + cw * c].copy_from_slice(&content.pixels()[src..src + cw * c]);
    }
    Raster::new(target, target, c, canvas)
}

/// Per output index: overlapping source indices and overlap lengths.
fn footprint(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|s| {
                    let ov = (hi.min((s + 1) as f64) - lo.max(s as f64)).max(0.0);
                    (ov > 0.0).then_some((s, ov))
                })
                .collect()
        })
        .collect()
}

/// Box-filter resample to `dw × dh` weighting each source pixel by its
/// overlap area with the output pixel's footprint.
pub fn resample_area(raster: &Raster, dw: usize, dh: usize) -> Raster {
    let c = raster.channels();
    let fx = footprint(raster.width(), dw);
    let fy = footprint(raster.height(), dh);
    let mut out = Vec::with_capacity(dw * dh * c);
    for ys in &fy {
        for xs in &fx {
            let mut acc = [0.0f64; 3];
            let mut total = 0.0;
            for &(sy, wy) in ys {
                for &(sx, wx) in xs {
                    let w = wx * wy;
                    let p = raster.pixel(sx, sy);
                    for k in 0..c {
                        acc[k] += w * f64::from(p[k]);
                    }
                    total += w;
                }
            }
            for a in acc.iter().take(c) {
                out.push((a / total).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(dw, dh, c, out).expect("resample dimensions are consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_gray_stays_gray() {
        let r = Raster::filled(2048, 2048, [128, 128, 128]);
        let t = thumbnail(&r, THUMBNAIL_SIDE).unwrap();
        assert_eq!((t.width(), t.height()), (1024, 1024));
        assert!(t.pixels().iter().all(|&v| v == 128));
    }

    #[test]
    fn block_means() {
        // 4x4 gray with four 2x2 blocks
        let vals = [
            10, 20, 100, 100, //
            30, 40, 100, 100, //
            0, 0, 200, 201, //
            0, 4, 202, 203,
        ];
        let r = Raster::new(4, 4, 1, vals.to_vec()).unwrap();
        let t = thumbnail(&r, 2).unwrap();
        // means: 25, 100, 1, 201.5 → round half away from zero
        assert_eq!(t.pixels(), &[25, 100, 1, 202]);
    }

    #[test]
    fn non_square_letterboxed() {
        let r = Raster::filled(1000, 2000, [0, 0, 0]);
        let t = thumbnail(&r, 1024).unwrap();
        assert_eq!((t.width(), t.height()), (1024, 1024));
        // content 512 wide, centered at x ∈ [256, 768)
        assert_eq!(t.rgb(255, 500), [255, 255, 255]);
        assert_eq!(t.rgb(256, 500), [0, 0, 0]);
        assert_eq!(t.rgb(767, 0), [0, 0, 0]);
        assert_eq!(t.rgb(768, 1023), [255, 255, 255]);
    }

    #[test]
    fn upscale_small_input() {
        let r = Raster::filled(3, 3, [9, 8, 7]);
        let t = thumbnail(&r, 10).unwrap();
        assert!(t.pixels().chunks(3).all(|p| p == [9, 8, 7]));
    }
}
