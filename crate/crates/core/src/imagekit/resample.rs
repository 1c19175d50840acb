use alloc::vec;
use alloc::vec::Vec;

use super::raster::Raster;
use crate::math;

/// Catmull-Rom (a = -0.5) weights for the taps at offsets -1, 0, 1, 2 from
/// `floor(x)`, where `t` is the fractional part. `t == 0` yields `[0, 1, 0, 0]`
/// exactly.
#[inline]
pub fn catmull_rom_weights(t: f32) -> [f32; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Bicubic sample of a plane at continuous pixel-center coordinates with
/// clamp-to-edge.
#[inline]
pub fn sample_bicubic(plane: &[f32], width: usize, height: usize, x: f32, y: f32) -> f32 {
    let fx = math::floorf(x);
    let fy = math::floorf(y);
    let wx = catmull_rom_weights(x - fx);
    let wy = catmull_rom_weights(y - fy);
    let (ix, iy) = (fx as isize, fy as isize);
    let (w, h) = (width as isize, height as isize);
    let mut acc = 0f32;
    for (j, &wyj) in wy.iter().enumerate() {
        if wyj == 0.0 {
            continue;
        }
        let sy = (iy + j as isize - 1).clamp(0, h - 1) as usize;
        let row = &plane[sy * width..(sy + 1) * width];
        let mut racc = 0f32;
        for (i, &wxi) in wx.iter().enumerate() {
            if wxi == 0.0 {
                continue;
            }
            let sx = (ix + i as isize - 1).clamp(0, w - 1) as usize;
            racc += wxi * row[sx];
        }
        acc += wyj * racc;
    }
    acc
}

struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f32; 4]>,
}

fn axis_taps(n_in: usize, n_out: usize) -> AxisTaps {
    let scale = n_in as f64 / n_out as f64;
    let mut index = Vec::with_capacity(n_out);
    let mut weight = Vec::with_capacity(n_out);
    for o in 0..n_out {
        let src = (o as f64 + 0.5) * scale - 0.5;
        let f = math::floor(src);
        let t = (src - f) as f32;
        let base = f as isize;
        let mut idx = [0usize; 4];
        for (k, slot) in idx.iter_mut().enumerate() {
            *slot = (base + k as isize - 1).clamp(0, n_in as isize - 1) as usize;
        }
        index.push(idx);
        weight.push(catmull_rom_weights(t));
    }
    AxisTaps { index, weight }
}

/// Separable Catmull-Rom resampling of a single plane with center-aligned
/// coordinates `x_src = (x_dst + 0.5) * w_in / w_out - 0.5`.
pub fn resample_plane_bicubic(
    plane: &[f32],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Vec<f32> {
    let hx = axis_taps(width, out_w);
    let hy = axis_taps(height, out_h);
    let mut tmp = vec![0f32; height * out_w];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        let dst = &mut tmp[y * out_w..(y + 1) * out_w];
        for (x, d) in dst.iter_mut().enumerate() {
            let (idx, w) = (&hx.index[x], &hx.weight[x]);
            *d = w[0] * row[idx[0]] + w[1] * row[idx[1]] + w[2] * row[idx[2]] + w[3] * row[idx[3]];
        }
    }
    let mut out = vec![0f32; out_w * out_h];
    for y in 0..out_h {
        let (idx, w) = (&hy.index[y], &hy.weight[y]);
        let rows = [
            &tmp[idx[0] * out_w..(idx[0] + 1) * out_w],
            &tmp[idx[1] * out_w..(idx[1] + 1) * out_w],
            &tmp[idx[2] * out_w..(idx[2] + 1) * out_w],
            &tmp[idx[3] * out_w..(idx[3] + 1) * out_w],
        ];
        let dst = &mut out[y * out_w..(y + 1) * out_w];
        for (x, d) in dst.iter_mut().enumerate() {
            *d = w[0] * rows[0][x] + w[1] * rows[1][x] + w[2] * rows[2][x] + w[3] * rows[3][x];
        }
    }
    out
}

/// Catmull-Rom resize to `out_w x out_h`, clamped to the input depth's range.
/// No anti-aliasing prefilter is applied when shrinking.
pub fn resample_bicubic(img: &Raster, out_w: usize, out_h: usize) -> Raster {
    let out_w = out_w.max(1);
    let out_h = out_h.max(1);
    let planes = (0..img.channels())
        .map(|c| resample_plane_bicubic(&img.plane(c), img.width(), img.height(), out_w, out_h))
        .collect();
    Raster::from_planes(out_w, out_h, img.depth(), planes)
}
