use alloc::vec;
use alloc::vec::Vec;

use super::kernel::gaussian_kernel_1d;
use super::raster::Raster;
use crate::error::Result;
use crate::math;

/// Separable convolution of one plane with a symmetric 1D kernel,
/// clamp-to-edge at the borders.
pub fn blur_plane(plane: &[f32], width: usize, height: usize, kernel: &[f32]) -> Vec<f32> {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (width as isize, height as isize);
    let mut tmp = vec![0f32; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..w {
            let mut acc = 0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                let sx = (x + k as isize - r).clamp(0, w - 1) as usize;
                acc += kw * row[sx];
            }
            tmp[y * width + x as usize] = acc;
        }
    }
    let mut out = vec![0f32; plane.len()];
    for y in 0..h {
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y + k as isize - r).clamp(0, h - 1) as usize;
            let src = &tmp[sy * width..(sy + 1) * width];
            let dst = &mut out[y as usize * width..(y as usize + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kw * s;
            }
        }
    }
    out
}

fn kernel_f32(size: usize, sigma: f64) -> Result<Vec<f32>> {
    Ok(gaussian_kernel_1d(size, sigma)?
        .into_iter()
        .map(|w| w as f32)
        .collect())
}

/// Gaussian blur with a `size`-tap sampled kernel; keeps the input depth.
pub fn gaussian_blur(img: &Raster, size: usize, sigma: f64) -> Result<Raster> {
    let k = kernel_f32(size, sigma)?;
    let planes = (0..img.channels())
        .map(|c| blur_plane(&img.plane(c), img.width(), img.height(), &k))
        .collect();
    Ok(Raster::from_planes(
        img.width(),
        img.height(),
        img.depth(),
        planes,
    ))
}

/// Gaussian blur on normalized samples, returned as `F32` without
/// re-quantizing to the input depth.
pub fn gaussian_blur_f32(img: &Raster, size: usize, sigma: f64) -> Result<Raster> {
    let k = kernel_f32(size, sigma)?;
    let planes = (0..img.channels())
        .map(|c| blur_plane(&img.normalized_plane(c), img.width(), img.height(), &k))
        .collect();
    Ok(Raster::from_planes_unclamped(
        img.width(),
        img.height(),
        planes,
    ))
}

/// 3x3 Sobel gradient magnitude of a single plane.
pub fn sobel_plane(plane: &[f32], width: usize, height: usize) -> Vec<f32> {
    let (w, h) = (width as isize, height as isize);
    let at = |x: isize, y: isize| -> f32 {
        plane[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize]
    };
    let mut out = Vec::with_capacity(plane.len());
    for y in 0..h {
        for x in 0..w {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out.push(math::sqrtf(gx * gx + gy * gy));
        }
    }
    out
}

/// Sobel magnitude of normalized BT.601 luma as a 1-channel `F32` map.
/// A full-range step edge yields 4.0 on both sides of the step.
pub fn sobel_magnitude(img: &Raster) -> Raster {
    let mag = sobel_plane(&img.luma(), img.width(), img.height());
    Raster::from_planes_unclamped(img.width(), img.height(), vec![mag])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::Kernel2D;
    use crate::Depth;

    #[test]
    fn constant_image_is_fixed_point() {
        let img = Raster::filled_u8(9, 7, 3, 131).unwrap();
        assert_eq!(gaussian_blur(&img, 5, 1.3).unwrap(), img);
        let mag = sobel_magnitude(&img);
        assert!(mag.as_f32().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let img = Raster::from_fn_f32(5, 5, 1, |_, x, y| if (x, y) == (2, 2) { 1.0 } else { 0.0 })
            .unwrap();
        let out = gaussian_blur(&img, 3, 0.5).unwrap();
        // independent: sample exp(-r^2 / 2 sigma^2) on the 3x3 grid and normalize
        let mut raw = [[0f64; 3]; 3];
        let mut sum = 0.0;
        for (j, row) in raw.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let (dx, dy) = (i as f64 - 1.0, j as f64 - 1.0);
                *v = (-(dx * dx + dy * dy) / 0.5).exp();
                sum += *v;
            }
        }
        for y in 0..5 {
            for x in 0..5 {
                let expected = if (1..=3).contains(&x) && (1..=3).contains(&y) {
                    raw[y - 1][x - 1] / sum
                } else {
                    0.0
                };
                assert!((out.get(0, x, y) as f64 - expected).abs() < 1e-6);
            }
        }
        let k = Kernel2D::gaussian(3, 0.5).unwrap();
        assert!((k.at(1, 1) - raw[1][1] / sum).abs() < 1e-12);
    }

    #[test]
    fn gaussian_semigroup_on_smooth_input() {
        let img = Raster::from_fn_u8(48, 40, 1, |_, x, y| {
            (128.0 + 60.0 * ((x as f64) * 0.21).sin() * ((y as f64) * 0.17).cos()) as u8
        })
        .unwrap();
        let twice = gaussian_blur(&gaussian_blur(&img, 3, 0.5).unwrap(), 3, 0.5).unwrap();
        let once = gaussian_blur(&img, 5, 0.5f64.sqrt()).unwrap();
        let (a, b) = (twice.as_u8().unwrap(), once.as_u8().unwrap());
        assert!(a.iter().zip(b).all(|(&p, &q)| (p as i32 - q as i32).abs() <= 1));
    }

    #[test]
    fn blur_preserves_mean() {
        let img = Raster::from_fn_f32(64, 64, 1, |_, x, y| {
            0.5 + 0.3 * ((x * 7 + y * 13) % 17) as f32 / 17.0
        })
        .unwrap();
        let out = gaussian_blur(&img, 7, 1.2).unwrap();
        let mean = |r: &Raster| r.as_f32().unwrap().iter().map(|&v| v as f64).sum::<f64>() / 4096.0;
        let (m0, m1) = (mean(&img), mean(&out));
        assert!(((m0 - m1) / m0).abs() < 1e-4, "{m0} {m1}");
        assert_eq!(out.depth(), Depth::F32);
    }

    #[test]
    fn even_kernel_is_contract_error() {
        let img = Raster::filled_u8(4, 4, 1, 0).unwrap();
        assert!(matches!(
            gaussian_blur(&img, 4, 1.0),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn sobel_step_edge() {
        let img = Raster::from_fn_u8(10, 8, 1, |_, x, _| if x >= 5 { 255 } else { 0 }).unwrap();
        let mag = sobel_magnitude(&img);
        for y in 0..8 {
            assert!((mag.get(0, 4, y) - 4.0).abs() < 1e-6);
            assert!((mag.get(0, 5, y) - 4.0).abs() < 1e-6);
            assert_eq!(mag.get(0, 2, y), 0.0);
            assert_eq!(mag.get(0, 8, y), 0.0);
        }
    }

    #[test]
    fn sobel_flip_symmetry() {
        let img = Raster::from_fn_u8(11, 9, 1, |_, x, y| {
            let d = (x as i32 - 5).abs() + (y as i32 * 3 % 7);
            (d * 20) as u8
        })
        .unwrap();
        let flipped = Raster::from_fn_u8(11, 9, 1, |_, x, y| img.get(0, 10 - x, y) as u8).unwrap();
        let (a, b) = (sobel_magnitude(&img), sobel_magnitude(&flipped));
        for y in 0..9 {
            for x in 0..11 {
                assert!((a.get(0, x, y) - b.get(0, 10 - x, y)).abs() < 1e-6);
            }
        }
    }
}
