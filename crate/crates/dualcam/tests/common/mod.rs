#![allow(dead_code)]

use std::path::Path;

use dualcam::codec::save_png;
use dualcam::config::PipelineConfig;
use dualcam_core::registration::{warp_with_map, Homography};
use dualcam_core::{Depth, Raster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Magnification between the wide view and the telephoto GT.
pub const ZOOM: f64 = 65.0 / 24.0;

/// Random colour blobs over a gradient; `density` blobs per 256² area.
pub fn blob_scene(w: usize, h: usize, density: usize, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs = density * w * h / (256 * 256);
    let params: Vec<(f64, f64, f64, [f64; 3])> = (0..blobs)
        .map(|_| {
            let x = rng.random_range(0.0..w as f64);
            let y = rng.random_range(0.0..h as f64);
            let s = rng.random_range(1.5..6.0);
            let amp = [
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
            ];
            (x, y, s, amp)
        })
        .collect();
    let mut planes = vec![vec![0f32; w * h]; 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [
                60.0 + 120.0 * x as f64 / w as f64,
                80.0 + 90.0 * y as f64 / h as f64,
                70.0 + 60.0 * (x + y) as f64 / (w + h) as f64,
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
    Raster::from_planes(w, h, Depth::U8, planes)
}

/// Maps telephoto pixels to wide pixels for a centred view magnified by `zoom`.
pub fn center_zoom(ww: usize, wh: usize, tw: usize, th: usize, zoom: f64) -> Homography {
    Homography::translation((ww as f64 - 1.0) / 2.0, (wh as f64 - 1.0) / 2.0)
        * Homography::scaling(1.0 / zoom, 1.0 / zoom)
        * Homography::translation(-(tw as f64 - 1.0) / 2.0, -(th as f64 - 1.0) / 2.0)
}

/// Monotone tone curve applied to the GT camera.
pub fn tone_curve(v: f64) -> f64 {
    255.0 * (v / 255.0).powf(0.85)
}

pub fn tone_curve_inverse(v: f64) -> f64 {
    255.0 * (v / 255.0).powf(1.0 / 0.85)
}

pub fn apply_curve(img: &Raster) -> Raster {
    let lut: Vec<u8> = (0..256).map(|v| tone_curve(v as f64).round() as u8).collect();
    Raster::from_fn_u8(img.width(), img.height(), img.channels(), |c, x, y| lut[img.get(c, x, y) as usize]).unwrap()
}

pub struct Triple {
    pub wide: Raster,
    pub tele: Raster,
    pub gt: Raster,
    /// GT pixel to wide pixel.
    pub truth: Homography,
}

/// GT = tone curve of the wide scene, viewed through a centred `ZOOM`
/// homography. The telephoto input shares the wide framing.
pub fn synthetic_triple(size: usize, seed: u64) -> Triple {
    let wide = blob_scene(size, size, 3000, seed);
    let truth = center_zoom(size, size, size, size, ZOOM);
    let gt = warp_with_map(&apply_curve(&wide), &truth, size, size).0;
    let tele = wide.clone();
    Triple { wide, tele, gt, truth }
}

pub fn write_capture(dir: &Path, t: &Triple) {
    save_png(&t.wide, &dir.join("wide.png")).unwrap();
    save_png(&t.tele, &dir.join("tele.png")).unwrap();
    save_png(&t.gt, &dir.join("gt.png")).unwrap();
}

/// Config sized for small fixtures: the 3496x2472 crop does not fit them.
pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        crop_width: 448,
        crop_height: 448,
        workers: 2,
        ..PipelineConfig::default()
    }
}

pub fn psnr_u8(a: &Raster, b: &Raster) -> f64 {
    dualcam_core::quality::psnr(a, b, None).unwrap()
}

/// Window of `scene` whose pixel `(x, y)` shows `scene(x + dx, y + dy)`.
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
