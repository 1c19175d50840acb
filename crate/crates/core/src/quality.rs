//! Fidelity metrics. Masks follow the crate convention: 0 marks a pixel that
//! takes part in the statistic.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::{gaussian_blur_f32, gaussian_kernel_1d, Depth, Raster, LUMA_WEIGHTS};
use crate::mask::Mask;
use crate::math;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub lowfreq_l1: f64,
    pub valid_pixel_fraction: f64,
}

fn check_mask(img: &Raster, mask: Option<&Mask>) -> Result<()> {
    if let Some(m) = mask {
        if (m.width(), m.height()) != (img.width(), img.height()) {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                found: (m.width(), m.height(), 1),
            });
        }
    }
    Ok(())
}

/// Samples of channel `c` on the 0..255 scale, in double precision.
fn plane255(img: &Raster, c: usize) -> Vec<f64> {
    let scale = match img.depth() {
        Depth::U8 => 1.0,
        Depth::F32 => PEAK,
    };
    img.plane(c).into_iter().map(|v| v as f64 * scale).collect()
}

fn luma255(img: &Raster) -> Vec<f64> {
    if img.channels() == 1 {
        return plane255(img, 0);
    }
    let (r, g, b) = (plane255(img, 0), plane255(img, 1), plane255(img, 2));
    let w = LUMA_WEIGHTS.map(|v| v as f64);
    (0..r.len()).map(|i| w[0] * r[i] + w[1] * g[i] + w[2] * b[i]).collect()
}

/// Peak signal-to-noise ratio over all channels, peak 255, capped at 99 dB.
pub fn psnr(a: &Raster, b: &Raster, mask: Option<&Mask>) -> Result<f64> {
    a.same_dims(b)?;
    check_mask(a, mask)?;
    let n = a.plane_len();
    let mut se = 0f64;
    let mut count = 0usize;
    for c in 0..a.channels() {
        let (pa, pb) = (plane255(a, c), plane255(b, c));
        for i in 0..n {
            if mask.is_some_and(|m| !m.is_valid_index(i)) {
                continue;
            }
            let d = pa[i] - pb[i];
            se += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoStatistics("mask leaves no valid pixel".into()));
    }
    let mse = se / count as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * math::log10(PEAK * PEAK / mse)).min(PSNR_CAP))
}

/// Valid-region filtering: each output sample at `(x, y)` is the weighted
/// sum of the window whose top-left corner is `(x, y)`.
fn window_filter(p: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0f64; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, &kw) in k.iter().enumerate() {
                acc += kw * p[y * w + x + j];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0f64; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, &kw) in k.iter().enumerate() {
                acc += kw * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Per-window SSIM values and the windows' top-left corners, restricted to
/// windows lying entirely on valid pixels.
pub fn ssim_map(a: &Raster, b: &Raster, mask: Option<&Mask>) -> Result<Vec<(usize, usize, f64)>> {
    a.same_dims(b)?;
    check_mask(a, mask)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::NoStatistics("image smaller than the SSIM window".into()));
    }
    let k = gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)?;
    let (la, lb) = (luma255(a), luma255(b));
    let aa: Vec<f64> = la.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = lb.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = la.iter().zip(&lb).map(|(x, y)| x * y).collect();
    let (mu_a, ow, oh) = window_filter(&la, w, h, &k);
    let (mu_b, ..) = window_filter(&lb, w, h, &k);
    let (e_aa, ..) = window_filter(&aa, w, h, &k);
    let (e_bb, ..) = window_filter(&bb, w, h, &k);
    let (e_ab, ..) = window_filter(&ab, w, h, &k);
    // invalid pixel counts per window through a summed-area table
    let bad = mask.map(|m| {
        let mut s = vec![0u32; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0u32;
            for x in 0..w {
                row += (!m.is_valid(x, y)) as u32;
                s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
            }
        }
        s
    });
    let c1 = (K1 * PEAK) * (K1 * PEAK);
    let c2 = (K2 * PEAK) * (K2 * PEAK);
    let mut out = Vec::new();
    for y in 0..oh {
        for x in 0..ow {
            if let Some(s) = &bad {
                let (x1, y1) = (x + SSIM_WINDOW, y + SSIM_WINDOW);
                let n = s[y1 * (w + 1) + x1] + s[y * (w + 1) + x] - s[y * (w + 1) + x1] - s[y1 * (w + 1) + x];
                if n > 0 {
                    continue;
                }
            }
            let i = y * ow + x;
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            out.push((x, y, num / den));
        }
    }
    Ok(out)
}

/// Mean single-scale SSIM on luma (11x11 Gaussian window, sigma 1.5).
pub fn ssim(a: &Raster, b: &Raster, mask: Option<&Mask>) -> Result<f64> {
    let map = ssim_map(a, b, mask)?;
    if map.is_empty() {
        return Err(Error::NoStatistics("no fully valid SSIM window".into()));
    }
    Ok(map.iter().map(|v| v.2).sum::<f64>() / map.len() as f64)
}

/// Mean absolute difference of the 3x3, sigma 0.5 blurred images, in
/// normalized units.
pub fn lowfreq_fidelity(a: &Raster, b: &Raster) -> Result<f64> {
    a.same_dims(b)?;
    let ba = gaussian_blur_f32(a, 3, 0.5)?;
    let bb = gaussian_blur_f32(b, 3, 0.5)?;
    let (da, db) = (ba.as_f32().unwrap_or(&[]), bb.as_f32().unwrap_or(&[]));
    let sum: f64 = da.iter().zip(db).map(|(x, y)| (x - y).abs() as f64).sum();
    Ok(sum / da.len().max(1) as f64)
}

pub fn metrics_report(a: &Raster, b: &Raster, mask: Option<&Mask>) -> Result<MetricsReport> {
    let valid = mask.map_or(a.plane_len(), |m| m.valid_count());
    Ok(MetricsReport {
        psnr_db: psnr(a, b, mask)?,
        ssim: ssim(a, b, mask)?,
        lowfreq_l1: lowfreq_fidelity(a, b)?,
        valid_pixel_fraction: valid as f64 / a.plane_len() as f64,
    })
}
