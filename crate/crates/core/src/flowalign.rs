//! Dense pyramidal Lucas-Kanade flow.
//!
//! Flow `(u, v)` at pixel `p` of the reference says that the moving image
//! shows the same content at `p + (u, v)`, so sampling the moving image there
//! reproduces the reference.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::imagekit::{blur_plane, gaussian_kernel_1d, sample_bicubic, Raster};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub levels: usize,
    /// Side of the square aggregation window, odd and at least 5.
    pub window: usize,
    pub iters: usize,
    /// Minimum eigenvalue of the window-averaged structure tensor.
    pub min_eigen: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            levels: 3,
            window: 15,
            iters: 10,
            min_eigen: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub valid: Vec<bool>,
}

const MAGIC: &[u8; 4] = b"RWFL";

impl FlowField {
    pub fn zero(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            u: vec![0.0; n],
            v: vec![0.0; n],
            valid: vec![true; n],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Mean endpoint error against a constant displacement over valid pixels.
    pub fn mean_endpoint_error(&self, u: f32, v: f32) -> Option<f64> {
        let mut acc = 0.0;
        let mut n = 0usize;
        for i in 0..self.u.len() {
            if self.valid[i] {
                let du = (self.u[i] - u) as f64;
                let dv = (self.v[i] - v) as f64;
                acc += math::sqrt(du * du + dv * dv);
                n += 1;
            }
        }
        (n > 0).then(|| acc / n as f64)
    }

    /// `RWFL`, width and height as little-endian u32, then the u plane and v
    /// plane as little-endian f32 and one byte per pixel of validity.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(12 + 9 * n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in self.u.iter().chain(&self.v) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(self.valid.iter().map(|&b| b as u8));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::InvalidData("missing RWFL header".into()));
        }
        let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]) as usize;
        let (width, height) = (word(4), word(8));
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidData("flow dimensions overflow".into()))?;
        if bytes.len() != 12 + 9 * n {
            return Err(Error::InvalidData(format!(
                "flow blob is {} bytes, expected {}",
                bytes.len(),
                12 + 9 * n
            )));
        }
        let floats = |start: usize| -> Vec<f32> {
            bytes[start..start + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect()
        };
        let u = floats(12);
        let v = floats(12 + 4 * n);
        let mut valid = Vec::with_capacity(n);
        for &b in &bytes[12 + 8 * n..] {
            match b {
                0 => valid.push(false),
                1 => valid.push(true),
                _ => return Err(Error::InvalidData("validity byte must be 0 or 1".into())),
            }
        }
        Ok(Self {
            width,
            height,
            u,
            v,
            valid,
        })
    }
}

struct Level {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

fn smooth(data: &[f32], w: usize, h: usize) -> Vec<f32> {
    let k: Vec<f32> = gaussian_kernel_1d(7, 1.0)
        .expect("fixed kernel")
        .into_iter()
        .map(|v| v as f32)
        .collect();
    blur_plane(data, w, h, &k)
}

/// Gaussian pyramid; each level is smoothed with sigma 1 and the next one is
/// the 2x2 mean of the smoothed level.
fn pyramid(base: Vec<f32>, w: usize, h: usize, levels: usize, min_side: usize) -> Vec<Level> {
    let mut out = vec![Level {
        w,
        h,
        data: smooth(&base, w, h),
    }];
    while out.len() < levels {
        let prev = out.last().expect("non-empty");
        let (nw, nh) = (prev.w / 2, prev.h / 2);
        if nw < min_side || nh < min_side {
            break;
        }
        let mut data = vec![0f32; nw * nh];
        for y in 0..nh {
            for x in 0..nw {
                let p = &prev.data;
                let i = 2 * y * prev.w + 2 * x;
                data[y * nw + x] = 0.25 * (p[i] + p[i + 1] + p[i + prev.w] + p[i + prev.w + 1]);
            }
        }
        out.push(Level {
            w: nw,
            h: nh,
            data: smooth(&data, nw, nh),
        });
    }
    out
}

fn gradients(p: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            gx[y * w + x] = (p[y * w + xp] - p[y * w + xm]) * 0.5;
            gy[y * w + x] = (p[yp * w + x] - p[ym * w + x]) * 0.5;
        }
    }
    (gx, gy)
}

/// Summed-area table with a zero guard row and column.
fn integral(values: impl Iterator<Item = f64>, w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0f64; (w + 1) * (h + 1)];
    let mut it = values;
    for y in 0..h {
        let mut row = 0f64;
        for x in 0..w {
            row += it.next().unwrap_or(0.0);
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

/// Window averages around every pixel, with the window clipped to the frame.
fn box_mean(s: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0f64; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let sum = s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1] - s[y1 * (w + 1) + x0] + s[y0 * (w + 1) + x0];
            out[y * w + x] = sum / ((x1 - x0) * (y1 - y0)) as f64;
        }
    }
    out
}

/// Tent-weighted window mean of total support `2 * rad + 1`: two box passes.
/// A plain box has negative frequency lobes that make the dense iteration
/// amplify some flow error patterns; the tent does not.
fn window_mean(values: impl Iterator<Item = f64>, w: usize, h: usize, rad: usize) -> Vec<f64> {
    let r1 = rad / 2;
    let once = box_mean(&integral(values, w, h), w, h, r1);
    box_mean(&integral(once.into_iter(), w, h), w, h, rad - r1)
}

const MAX_STEP: f64 = 1.0;

fn min_eigen(a: f64, b: f64, c: f64) -> f64 {
    let tr = 0.5 * (a + c);
    let d = math::sqrt((0.25 * (a - c) * (a - c) + b * b).max(0.0));
    tr - d
}

/// Refines `(u, v)` in place on one pyramid level; returns per-pixel tensor
/// acceptance.
fn refine_level(
    r: &Level,
    m: &Level,
    u: &mut [f32],
    v: &mut [f32],
    params: &FlowParams,
) -> Vec<bool> {
    let (w, h) = (r.w, r.h);
    let rad = params.window / 2;
    let (gx, gy) = gradients(&r.data, w, h);
    let sxx = window_mean(gx.iter().map(|&g| (g * g) as f64), w, h, rad);
    let sxy = window_mean(gx.iter().zip(&gy).map(|(&a, &b)| (a * b) as f64), w, h, rad);
    let syy = window_mean(gy.iter().map(|&g| (g * g) as f64), w, h, rad);
    let ok: Vec<bool> = (0..w * h)
        .map(|i| min_eigen(sxx[i], sxy[i], syy[i]) >= params.min_eigen)
        .collect();
    let mut err = vec![0f32; w * h];
    let mut inside = vec![0f32; w * h];
    let (xmax, ymax) = ((w - 1) as f32, (h - 1) as f32);
    for _ in 0..params.iters {
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f32 + u[i], y as f32 + v[i]);
                if sx >= 0.0 && sy >= 0.0 && sx <= xmax && sy <= ymax {
                    err[i] = sample_bicubic(&m.data, w, h, sx, sy) - r.data[i];
                    inside[i] = 1.0;
                } else {
                    // clamped samples carry no information about the motion
                    err[i] = 0.0;
                    inside[i] = 0.0;
                }
            }
        }
        let weighted = |f: &dyn Fn(usize) -> f32| {
            window_mean((0..w * h).map(|i| (inside[i] * f(i)) as f64), w, h, rad)
        };
        let axx = weighted(&|i| gx[i] * gx[i]);
        let axy = weighted(&|i| gx[i] * gy[i]);
        let ayy = weighted(&|i| gy[i] * gy[i]);
        let bx = weighted(&|i| gx[i] * err[i]);
        let by = weighted(&|i| gy[i] * err[i]);
        for i in 0..w * h {
            if !ok[i] {
                continue;
            }
            let det = axx[i] * ayy[i] - axy[i] * axy[i];
            if min_eigen(axx[i], axy[i], ayy[i]) < 0.25 * params.min_eigen || det <= 0.0 {
                continue;
            }
            let du = -(ayy[i] * bx[i] - axy[i] * by[i]) / det;
            let dv = -(axx[i] * by[i] - axy[i] * bx[i]) / det;
            // a linearization is only trusted about a pixel away
            let step = math::sqrt(du * du + dv * dv);
            let k = if step > MAX_STEP { MAX_STEP / step } else { 1.0 };
            u[i] += (du * k) as f32;
            v[i] += (dv * k) as f32;
        }
    }
    ok
}

/// Bilinear upsampling of a flow component onto a grid twice as large,
/// doubling its magnitude.
fn upsample_flow(f: &[f32], w: usize, h: usize, nw: usize, nh: usize) -> Vec<f32> {
    let mut out = vec![0f32; nw * nh];
    for y in 0..nh {
        let sy = ((y as f32 + 0.5) * 0.5 - 0.5).clamp(0.0, (h - 1) as f32);
        let y0 = math::floorf(sy) as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = sy - y0 as f32;
        for x in 0..nw {
            let sx = ((x as f32 + 0.5) * 0.5 - 0.5).clamp(0.0, (w - 1) as f32);
            let x0 = math::floorf(sx) as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = sx - x0 as f32;
            let top = f[y0 * w + x0] * (1.0 - tx) + f[y0 * w + x1] * tx;
            let bot = f[y1 * w + x0] * (1.0 - tx) + f[y1 * w + x1] * tx;
            out[y * nw + x] = 2.0 * (top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Flow from `reference` to `moving`: `moving(p + flow(p)) ~ reference(p)`.
pub fn compute_flow(reference: &Raster, moving: &Raster, params: &FlowParams) -> Result<FlowField> {
    reference.same_size(moving)?;
    if params.levels < 1 {
        return Err(contract("flow needs at least one pyramid level"));
    }
    if params.window < 5 || params.window.is_multiple_of(2) {
        return Err(contract("flow window must be odd and at least 5"));
    }
    let (w, h) = (reference.width(), reference.height());
    let min_side = params.window.min(16);
    let pr = pyramid(reference.luma(), w, h, params.levels, min_side);
    let pm = pyramid(moving.luma(), w, h, params.levels, min_side);
    let top = pr.len() - 1;
    let mut u = vec![0f32; pr[top].w * pr[top].h];
    let mut v = u.clone();
    let mut ok = Vec::new();
    for l in (0..=top).rev() {
        if l < top {
            let (cw, ch) = (pr[l + 1].w, pr[l + 1].h);
            u = upsample_flow(&u, cw, ch, pr[l].w, pr[l].h);
            v = upsample_flow(&v, cw, ch, pr[l].w, pr[l].h);
        }
        ok = refine_level(&pr[l], &pm[l], &mut u, &mut v, params);
    }
    let mut valid = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (sx, sy) = (x as f32 + u[i], y as f32 + v[i]);
            let inside = sx >= 0.0 && sy >= 0.0 && sx <= (w - 1) as f32 && sy <= (h - 1) as f32;
            if ok[i] && inside && u[i].is_finite() && v[i].is_finite() {
                valid[i] = true;
            } else {
                u[i] = 0.0;
                v[i] = 0.0;
            }
        }
    }
    Ok(FlowField {
        width: w,
        height: h,
        u,
        v,
        valid,
    })
}

/// Backward warp: valid pixels read `img` at `p + flow(p)`, invalid ones keep
/// their own value.
pub fn warp_with_flow(img: &Raster, flow: &FlowField) -> Result<Raster> {
    let (w, h) = (img.width(), img.height());
    if (flow.width, flow.height) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            found: (flow.width, flow.height, img.channels()),
        });
    }
    let planes = (0..img.channels())
        .map(|c| {
            let p = img.plane(c);
            (0..w * h)
                .map(|i| {
                    if flow.valid[i] {
                        let (x, y) = ((i % w) as f32, (i / w) as f32);
                        sample_bicubic(&p, w, h, x + flow.u[i], y + flow.v[i])
                    } else {
                        p[i]
                    }
                })
                .collect()
        })
        .collect();
    Ok(Raster::from_planes(w, h, img.depth(), planes))
}

/// `|luma(a) - luma(b)|` after a Gaussian pre-blur, as a single-channel map.
pub fn residual_map(a: &Raster, b: &Raster, blur_sigma: f64) -> Result<Raster> {
    a.same_size(b)?;
    let (w, h) = (a.width(), a.height());
    let (mut la, mut lb) = (a.luma(), b.luma());
    if blur_sigma > 0.0 {
        let size = 2 * (math::ceil(3.0 * blur_sigma) as usize) + 1;
        let k: Vec<f32> = gaussian_kernel_1d(size, blur_sigma)?
            .into_iter()
            .map(|v| v as f32)
            .collect();
        la = blur_plane(&la, w, h, &k);
        lb = blur_plane(&lb, w, h, &k);
    }
    let diff = la.iter().zip(&lb).map(|(x, y)| (x - y).abs()).collect();
    Ok(Raster::from_planes_unclamped(w, h, vec![diff]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, dx: f32) -> Raster {
        Raster::from_fn_f32(w, h, 1, |_, x, y| {
            let (x, y) = (x as f32 + dx, y as f32);
            0.5 + 0.2 * libm::sinf(x * 0.31 + libm::sinf(y * 0.17) * 2.0) + 0.2 * libm::cosf(y * 0.23 - x * 0.07)
        })
        .unwrap()
    }

    #[test]
    fn identical_inputs_give_zero_flow() {
        let a = texture(64, 48, 0.0);
        let f = compute_flow(&a, &a, &FlowParams::default()).unwrap();
        assert!(f.u.iter().chain(&f.v).all(|v| v.abs() < 1e-6));
        assert!(f.valid_count() > 0);
    }

    #[test]
    fn recovers_small_shift() {
        let a = texture(96, 96, 0.0);
        let b = texture(96, 96, 2.0);
        let f = compute_flow(&a, &b, &FlowParams::default()).unwrap();
        let epe = f.mean_endpoint_error(-2.0, 0.0).unwrap();
        assert!(epe < 0.25, "{epe}");
    }

    #[test]
    fn rejects_bad_window() {
        let a = texture(32, 32, 0.0);
        let p = FlowParams { window: 4, ..Default::default() };
        assert!(matches!(compute_flow(&a, &a, &p), Err(Error::Contract(_))));
        let b = texture(31, 32, 0.0);
        assert!(matches!(
            compute_flow(&a, &b, &FlowParams::default()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_and_invalid_flow_pass_through() {
        let img = Raster::from_fn_u8(20, 10, 3, |c, x, y| (x * 11 + y * 5 + c) as u8).unwrap();
        let f = FlowField::zero(20, 10);
        assert_eq!(warp_with_flow(&img, &f).unwrap(), img);
        let mut g = FlowField::zero(20, 10);
        g.u.iter_mut().for_each(|u| *u = 3.7);
        g.valid.iter_mut().for_each(|v| *v = false);
        assert_eq!(warp_with_flow(&img, &g).unwrap(), img);
    }

    #[test]
    fn blob_roundtrip() {
        let mut f = FlowField::zero(3, 2);
        f.u[1] = 0.25;
        f.v[4] = -7.5;
        f.valid[5] = false;
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"RWFL");
        assert_eq!(bytes.len(), 12 + 9 * 6);
        assert_eq!(FlowField::from_bytes(&bytes).unwrap(), f);
        assert!(FlowField::from_bytes(&bytes[..20]).is_err());
    }

    #[test]
    fn residual_of_offset_is_constant() {
        let a = Raster::from_fn_u8(16, 16, 3, |c, x, y| (x * 7 + y * 3 + c * 20) as u8).unwrap();
        let b = Raster::from_fn_u8(16, 16, 3, |c, x, y| (x * 7 + y * 3 + c * 20 + 10) as u8).unwrap();
        let r = residual_map(&a, &b, 1.0).unwrap();
        for &v in r.as_f32().unwrap() {
            assert!((v - 10.0 / 255.0).abs() < 1e-6, "{v}");
        }
        let z = residual_map(&a, &a, 1.0).unwrap();
        assert!(z.as_f32().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_peak_inside_occluder() {
        let a = Raster::from_fn_u8(48, 48, 1, |_, x, y| (x * 3 + y * 2) as u8).unwrap();
        let b = Raster::from_fn_u8(48, 48, 1, |_, x, y| {
            if (20..28).contains(&x) && (10..18).contains(&y) {
                250
            } else {
                (x * 3 + y * 2) as u8
            }
        })
        .unwrap();
        let r = residual_map(&a, &b, 1.0).unwrap();
        let d = r.as_f32().unwrap();
        let (imax, _) = d
            .iter()
            .enumerate()
            .fold((0, f32::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let (x, y) = (imax % 48, imax / 48);
        assert!((20..28).contains(&x) && (10..18).contains(&y));
    }
}
