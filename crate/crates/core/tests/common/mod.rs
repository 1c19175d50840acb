#![allow(dead_code)]

use dualcam_core::registration::{warp_with_map, Homography};
use dualcam_core::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Smooth colour field made of random Gaussian blobs over a soft gradient.
pub fn blob_scene(w: usize, h: usize, blobs: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (w.min(h) as f64) / 256.0;
    let params: Vec<(f64, f64, f64, [f64; 3])> = (0..blobs)
        .map(|_| {
            let x = rng.random_range(0.0..w as f64);
            let y = rng.random_range(0.0..h as f64);
            let s = rng.random_range(1.5..6.0) * scale.max(0.5);
            let amp = [
                rng.random_range(-90.0..90.0),
                rng.random_range(-90.0..90.0),
                rng.random_range(-90.0..90.0),
            ];
            (x, y, s, amp)
        })
        .collect();
    let mut planes = vec![vec![0f32; w * h]; 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [
                100.0 + 40.0 * x as f64 / w as f64,
                110.0 + 30.0 * y as f64 / h as f64,
                120.0,
            ];
            for &(bx, by, s, amp) in &params {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                if d2 > 16.0 * s * s {
                    continue;
                }
                let g = (-d2 / (2.0 * s * s)).exp();
                for c in 0..3 {
                    acc[c] += amp[c] * g;
                }
            }
            for c in 0..3 {
                planes[c][y * w + x] = acc[c].clamp(0.0, 255.0) as f32;
            }
        }
    }
    Raster::from_planes(w, h, dualcam_core::Depth::U8, planes)
}

/// Map from a `tw x th` telephoto grid to the wide grid for a centred view
/// magnified by `zoom`.
pub fn center_zoom(ww: usize, wh: usize, tw: usize, th: usize, zoom: f64) -> Homography {
    let cxw = (ww as f64 - 1.0) / 2.0;
    let cyw = (wh as f64 - 1.0) / 2.0;
    let cxt = (tw as f64 - 1.0) / 2.0;
    let cyt = (th as f64 - 1.0) / 2.0;
    Homography::translation(cxw, cyw)
        * Homography::scaling(1.0 / zoom, 1.0 / zoom)
        * Homography::translation(-cxt, -cyt)
}

/// Renders the telephoto view: pixel `p` shows the wide image at `h(p)`.
pub fn render_view(wide: &Raster, h: &Homography, tw: usize, th: usize) -> Raster {
    warp_with_map(wide, h, tw, th).0
}

pub fn psnr_u8(a: &Raster, b: &Raster) -> f64 {
    let (pa, pb) = (a.to_interleaved_u8(), b.to_interleaved_u8());
    let mse = pa
        .iter()
        .zip(&pb)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / pa.len() as f64;
    if mse == 0.0 {
        99.0
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Crop of `scene` starting at column `dx`, so the result shows `scene(x + dx, y)`.
pub fn shifted(scene: &Raster, dx: usize, dy: usize, w: usize, h: usize) -> Raster {
    Raster::from_fn_u8(w, h, scene.channels(), |c, x, y| scene.get(c, x + dx, y + dy) as u8).unwrap()
}

/// Smooth analytic texture in `[0, 1]` sampled at `(x + dx, y + dy)`.
pub fn smooth_texture(w: usize, h: usize, dx: f64, dy: f64) -> Raster {
    Raster::from_fn_f32(w, h, 1, |_, x, y| {
        let (x, y) = (x as f64 + dx, y as f64 + dy);
        let v = 0.5
            + 0.18 * (x * 0.21 + (y * 0.05).sin() * 3.0).sin()
            + 0.15 * (y * 0.17 - x * 0.06).cos()
            + 0.1 * ((x + y) * 0.11).sin();
        v as f32
    })
    .unwrap()
}
