use rand::Rng;

use super::*;
use crate::numerics::SeedStream;
use crate::slide_io::{tile_slide, PatchGrid, Raster, TissueFilter};

fn random_trace(seed: u64, dims: [usize; 4]) -> AttentionTrace {
    let mut rng = SeedStream::new(seed).rng("trace");
    let [t, l, h, n] = dims;
    let mut values = Vec::new();
    for _ in 0..t * l * h {
        // a softmax row over n visual + 3 text positions, keeping the visual part
        let w: Vec<f64> = (0..n + 3).map(|_| rng.gen_range(-2.0f64..2.0).exp()).collect();
        let z: f64 = w.iter().sum();
        values.extend(w[..n].iter().map(|v| v / z));
    }
    AttentionTrace::new(t, l, h, n, values).unwrap()
}

#[test]
fn single_hot_patch() {
    let n = 6;
    let mut values = Vec::new();
    for _ in 0..2 * 2 * 2 {
        values.extend((0..n).map(|i| if i == 3 { 1.0 } else { 0.0 }));
    }
    let tr = AttentionTrace::new(2, 2, 2, n, values).unwrap();
    let s = saliency(&tr, 1, RowNorm::Renormalized).unwrap();
    assert_eq!(s.ranked, vec![(3, 1.0)]);
}

#[test]
fn uniform_ties_go_to_lower_index() {
    let tr = AttentionTrace::new(3, 2, 2, 5, vec![0.2; 60]).unwrap();
    let s = saliency(&tr, 5, RowNorm::Renormalized).unwrap();
    let idx: Vec<usize> = s.ranked.iter().map(|r| r.0).collect();
    assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    assert!(s.ranked.iter().all(|r| (r.1 - 0.2).abs() < 1e-15));
}

#[test]
fn matches_mean_and_sort_oracle() {
    for seed in 0..50 {
        let tr = random_trace(seed, [3, 2, 4, 9]);
        let got = saliency(&tr, 5, RowNorm::Raw).unwrap();
        let mut mean = vec![0.0; 9];
        for t in 0..3 {
            for l in 0..2 {
                for h in 0..4 {
                    for (m, v) in mean.iter_mut().zip(tr.row(t, l, h)) {
                        *m += v / 24.0;
                    }
                }
            }
        }
        let mut pairs: Vec<(usize, f64)> = mean.into_iter().enumerate().collect();
        pairs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        pairs.truncate(5);
        for (g, o) in got.ranked.iter().zip(&pairs) {
            assert_eq!(g.0, o.0);
            assert!((g.1 - o.1).abs() < 1e-12);
        }
    }
}

#[test]
fn renormalized_scores_form_a_distribution() {
    let tr = random_trace(7, [4, 2, 2, 11]);
    let scores = patch_scores(&tr, RowNorm::Renormalized).unwrap();
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
}

#[test]
fn permuting_patches_permutes_ranking() {
    let tr = random_trace(8, [2, 2, 2, 7]);
    let perm = [4, 0, 6, 1, 5, 3, 2];
    let mut values = Vec::new();
    for row in tr.values.chunks(7) {
        values.extend(perm.iter().map(|&p| row[p]));
    }
    let pt = AttentionTrace::new(2, 2, 2, 7, values).unwrap();
    let a = saliency(&tr, 7, RowNorm::Renormalized).unwrap();
    let b = saliency(&pt, 7, RowNorm::Renormalized).unwrap();
    for (x, y) in a.ranked.iter().zip(&b.ranked) {
        assert_eq!(x.0, perm[y.0]);
    }
}

#[test]
fn oversized_k_clamps() {
    let tr = random_trace(9, [1, 1, 1, 3]);
    let s = saliency(&tr, 10, RowNorm::Renormalized).unwrap();
    assert_eq!((s.k, s.ranked.len()), (3, 3));
}

fn four_tile_grid() -> (Raster, PatchGrid) {
    let img = Raster::filled(448, 448, [200, 60, 120]);
    let grid = tile_slide(&img, 224, &TissueFilter::default()).unwrap();
    assert_eq!(grid.tissue_count(), 4);
    (img, grid)
}

#[test]
fn overlay_geometry() {
    let (img, grid) = four_tile_grid();
    let none = PatchSaliency { ranked: vec![], k: 0, tokens: 1, norm: RowNorm::Renormalized };
    assert_eq!(render_overlay(&img, &grid, &none).unwrap(), img);

    let one = PatchSaliency { ranked: vec![(0, 0.9)], k: 1, tokens: 1, norm: RowNorm::Renormalized };
    let out = render_overlay(&img, &grid, &one).unwrap();
    for y in 0..448 {
        for x in 0..448 {
            let changed = out.rgb(x, y) != img.rgb(x, y);
            assert_eq!(changed, x < 224 && y < 224, "pixel ({x},{y})");
        }
    }
    assert_eq!(out.rgb(0, 0), RANK_COLORS[0]);
    let blend = |p: u8, c: u8| (0.7 * p as f64 + 0.3 * c as f64).round() as u8;
    let c = RANK_COLORS[0];
    assert_eq!(out.rgb(100, 100), [blend(200, c[0]), blend(60, c[1]), blend(120, c[2])]);
    assert_eq!(render_overlay(&img, &grid, &one).unwrap(), out);

    let bad = PatchSaliency { ranked: vec![(4, 0.9)], k: 1, tokens: 1, norm: RowNorm::Renormalized };
    assert!(render_overlay(&img, &grid, &bad).is_err());
}

#[test]
fn overlay_on_letterboxed_thumbnail() {
    let img = Raster::filled(448, 224, [200, 60, 120]);
    let grid = tile_slide(&img, 224, &TissueFilter::default()).unwrap();
    let thumb = crate::slide_io::thumbnail(&img, 64).unwrap();
    assert_eq!(thumbnail_rect(&grid, &thumb, 224, 0, 224), (32, 64, 16, 48));
}

#[test]
fn csv_rows() {
    let (_, grid) = four_tile_grid();
    let s = PatchSaliency { ranked: vec![(3, 0.5), (1, 0.25)], k: 2, tokens: 1, norm: RowNorm::Renormalized };
    assert_eq!(saliency_csv(&s, &grid).unwrap(), "rank,patch_index,row,col,score\n1,3,1,1,0.5\n2,1,0,1,0.25\n");
}
