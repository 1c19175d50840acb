use alloc::vec;
use alloc::vec::Vec;

use super::homography::Homography;
use crate::error::Result;
use crate::imagekit::{catmull_rom_weights, Raster};
use crate::mask::Mask;
use crate::math;

/// Index range of the taps with non-zero weight along one axis. An exactly
/// integral coordinate needs only its own pixel.
#[inline]
fn footprint(pos: f32) -> (isize, isize) {
    let f = math::floorf(pos);
    let i = f as isize;
    if pos == f {
        (i, i)
    } else {
        (i - 1, i + 2)
    }
}

#[inline]
fn sample_checked(plane: &[f32], w: usize, h: usize, x: f32, y: f32) -> f32 {
    let fx = math::floorf(x);
    let fy = math::floorf(y);
    let wx = catmull_rom_weights(x - fx);
    let wy = catmull_rom_weights(y - fy);
    let (ix, iy) = (fx as isize, fy as isize);
    let mut acc = 0f32;
    for (j, &wyj) in wy.iter().enumerate() {
        if wyj == 0.0 {
            continue;
        }
        let sy = (iy + j as isize - 1).clamp(0, h as isize - 1) as usize;
        let row = &plane[sy * w..(sy + 1) * w];
        let mut racc = 0f32;
        for (i, &wxi) in wx.iter().enumerate() {
            if wxi == 0.0 {
                continue;
            }
            let sx = (ix + i as isize - 1).clamp(0, w as isize - 1) as usize;
            racc += wxi * row[sx];
        }
        acc += wyj * racc;
    }
    acc
}

/// Resamples `img` onto an `out_w x out_h` grid where destination pixel `p`
/// reads the source at `dst_to_src(p)`. A destination pixel is covered when
/// every non-zero bicubic tap lies inside the source; uncovered pixels are 0.
pub fn warp_with_map(
    img: &Raster,
    dst_to_src: &Homography,
    out_w: usize,
    out_h: usize,
) -> (Raster, Mask) {
    let (w, h) = (img.width(), img.height());
    let planes: Vec<Vec<f32>> = (0..img.channels()).map(|c| img.plane(c)).collect();
    let mut out: Vec<Vec<f32>> = vec![vec![0f32; out_w * out_h]; img.channels()];
    let mut covered = vec![false; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let (sx, sy) = dst_to_src.apply(x as f64, y as f64);
            if !sx.is_finite() || !sy.is_finite() || sx.abs() > 1e7 || sy.abs() > 1e7 {
                continue;
            }
            let (sx, sy) = (sx as f32, sy as f32);
            let (x0, x1) = footprint(sx);
            let (y0, y1) = footprint(sy);
            let i = y * out_w + x;
            if x0 < 0 || y0 < 0 || x1 >= w as isize || y1 >= h as isize {
                continue;
            }
            covered[i] = true;
            for (o, p) in out.iter_mut().zip(&planes) {
                o[i] = sample_checked(p, w, h, sx, sy);
            }
        }
    }
    (
        Raster::from_planes(out_w, out_h, img.depth(), out),
        Mask::from_valid(out_w, out_h, &covered),
    )
}

/// Forward projective warp: the output at `H p` shows the input at `p`.
pub fn warp_projective(
    img: &Raster,
    h: &Homography,
    out_w: usize,
    out_h: usize,
) -> Result<(Raster, Mask)> {
    let inv = h.inverse()?;
    Ok(warp_with_map(img, &inv, out_w, out_h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Raster {
        Raster::from_fn_u8(w, h, 3, |c, x, y| ((x * 13 + y * 29 + c * 71) % 251) as u8).unwrap()
    }

    #[test]
    fn identity_is_exact_with_full_coverage() {
        let img = textured(17, 11);
        let (out, cov) = warp_projective(&img, &Homography::IDENTITY, 17, 11).unwrap();
        assert_eq!(out, img);
        assert_eq!(cov.valid_count(), 17 * 11);
    }

    #[test]
    fn integer_translation_shifts_exactly() {
        let img = textured(20, 16);
        let (out, cov) = warp_projective(&img, &Homography::translation(5.0, 3.0), 20, 16).unwrap();
        for y in 0..16 {
            for x in 0..20 {
                let inside = x >= 5 && y >= 3;
                assert_eq!(cov.is_valid(x, y), inside);
                for c in 0..3 {
                    let expected = if inside { img.get(c, x - 5, y - 3) } else { 0.0 };
                    assert_eq!(out.get(c, x, y), expected);
                }
            }
        }
    }

    #[test]
    fn covered_pixels_have_all_taps_inside() {
        let img = textured(30, 24);
        let h = Homography::new([[1.1, 0.05, -2.3], [-0.04, 0.95, 1.7], [1e-3, 0.0, 1.0]]).unwrap();
        let (_, cov) = warp_projective(&img, &h, 30, 24).unwrap();
        let inv = h.inverse().unwrap();
        for y in 0..24 {
            for x in 0..30 {
                if cov.is_valid(x, y) {
                    let (sx, sy) = inv.apply(x as f64, y as f64);
                    let (sx, sy) = (sx as f32, sy as f32);
                    let ok = |v: f32, n: usize| {
                        let f = v.floor();
                        if v == f {
                            f >= 0.0 && (f as usize) < n
                        } else {
                            f >= 1.0 && (f as usize) + 2 < n
                        }
                    };
                    assert!(ok(sx, 30) && ok(sy, 24));
                }
            }
        }
    }
}
