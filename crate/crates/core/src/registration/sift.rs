//! Difference-of-Gaussians keypoints with gradient-histogram descriptors.
//!
//! The scale space starts at the input resolution (no initial doubling).
//! Octave `o` is built from the layer of octave `o - 1` with twice the base
//! blur, decimated by two, so pixel `i` of octave `o` sits at `i * 2^o` in the
//! input frame.

use alloc::vec;
use alloc::vec::Vec;
use core::f32::consts::PI;

use serde::{Deserialize, Serialize};

use crate::imagekit::{blur_plane, gaussian_kernel_1d, Raster};
use crate::math;

const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f32 = 1.5;
const ORI_RADIUS_FACTOR: f32 = 3.0 * ORI_SIGMA_FACTOR;
const ORI_PEAK_RATIO: f32 = 0.8;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_SCALE_FACTOR: f32 = 3.0;
const DESC_CLIP: f32 = 0.2;

pub const DESCRIPTOR_LEN: usize = DESC_WIDTH * DESC_WIDTH * DESC_BINS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    pub octaves: usize,
    pub levels: usize,
    /// Blur of the first layer of each octave.
    pub sigma: f64,
    /// Blur already present in the input.
    pub assumed_blur: f64,
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
    /// Keep only the strongest responses when non-zero.
    pub max_features: usize,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            levels: 3,
            sigma: 1.6,
            assumed_blur: 0.5,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            max_features: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Subpixel position in input-image pixel coordinates.
    pub x: f32,
    pub y: f32,
    /// Blur scale in input-image pixels.
    pub scale: f32,
    /// Dominant gradient direction in radians, `[0, 2 pi)`.
    pub orientation: f32,
    /// Absolute interpolated DoG value.
    pub response: f32,
    pub octave: usize,
}

/// 128-bin descriptor, unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn distance2(&self, other: &Descriptor) -> f32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn norm(&self) -> f32 {
        math::sqrtf(self.0.iter().map(|v| v * v).sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.w + x]
    }
}

struct Octave {
    gauss: Vec<Plane>,
    dog: Vec<Plane>,
}

fn blur(p: &Plane, sigma: f64) -> Plane {
    let size = 2 * (math::ceil(3.0 * sigma) as usize) + 1;
    let k: Vec<f32> = gaussian_kernel_1d(size, sigma)
        .expect("size is odd and sigma positive")
        .into_iter()
        .map(|v| v as f32)
        .collect();
    Plane {
        w: p.w,
        h: p.h,
        data: blur_plane(&p.data, p.w, p.h, &k),
    }
}

fn decimate(p: &Plane) -> Plane {
    let w = p.w.div_ceil(2);
    let h = p.h.div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(p.at(2 * x, 2 * y));
        }
    }
    Plane { w, h, data }
}

fn build_scale_space(gray: Vec<f32>, w: usize, h: usize, params: &SiftParams) -> Vec<Octave> {
    let levels = params.levels;
    let k = math::pow(2.0, 1.0 / levels as f64);
    let layer_count = levels + 3;
    let mut increments = vec![0f64; layer_count];
    for (i, inc) in increments.iter_mut().enumerate().skip(1) {
        let prev = params.sigma * math::pow(k, (i - 1) as f64);
        let total = prev * k;
        *inc = math::sqrt(total * total - prev * prev);
    }
    let min_dim = 2 * BORDER + 4;
    let base_sigma = math::sqrt(
        (params.sigma * params.sigma - params.assumed_blur * params.assumed_blur).max(0.01),
    );
    let mut base = blur(&Plane { w, h, data: gray }, base_sigma);
    let mut octaves = Vec::new();
    for _ in 0..params.octaves {
        if base.w < min_dim || base.h < min_dim {
            break;
        }
        let mut gauss = Vec::with_capacity(layer_count);
        for (i, &inc) in increments.iter().enumerate() {
            let layer = if i == 0 {
                Plane {
                    w: base.w,
                    h: base.h,
                    data: base.data.clone(),
                }
            } else {
                blur(&gauss[i - 1], inc)
            };
            gauss.push(layer);
        }
        let dog = (0..layer_count - 1)
            .map(|i| Plane {
                w: gauss[i].w,
                h: gauss[i].h,
                data: gauss[i + 1]
                    .data
                    .iter()
                    .zip(&gauss[i].data)
                    .map(|(a, b)| a - b)
                    .collect(),
            })
            .collect();
        let next = decimate(&gauss[levels]);
        octaves.push(Octave { gauss, dog });
        base = next;
    }
    octaves
}

fn is_extremum(dog: &[Plane], s: usize, x: usize, y: usize) -> bool {
    let v = dog[s].at(x, y);
    let maximum = v > 0.0;
    for plane in &dog[s - 1..=s + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = plane.at(xx, yy);
                if maximum && n > v || !maximum && n < v {
                    return false;
                }
            }
        }
    }
    true
}

struct Refined {
    x: usize,
    y: usize,
    s: usize,
    offset: [f32; 3],
    value: f32,
}

/// Solves the 3x3 system by Cramer's rule.
fn solve3(m: [[f32; 3]; 3], b: [f32; 3]) -> Option<[f32; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut out = [0f32; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        let d = mc[0][0] * (mc[1][1] * mc[2][2] - mc[1][2] * mc[2][1])
            - mc[0][1] * (mc[1][0] * mc[2][2] - mc[1][2] * mc[2][0])
            + mc[0][2] * (mc[1][0] * mc[2][1] - mc[1][1] * mc[2][0]);
        *o = d / det;
    }
    Some(out)
}

fn refine(dog: &[Plane], levels: usize, mut x: usize, mut y: usize, mut s: usize, params: &SiftParams) -> Option<Refined> {
    let (w, h) = (dog[0].w, dog[0].h);
    let mut offset = [0f32; 3];
    let mut grad = [0f32; 3];
    let mut converged = false;
    for _ in 0..MAX_REFINE_STEPS {
        let (c, p, n) = (&dog[s], &dog[s - 1], &dog[s + 1]);
        let v2 = 2.0 * c.at(x, y);
        grad = [
            0.5 * (c.at(x + 1, y) - c.at(x - 1, y)),
            0.5 * (c.at(x, y + 1) - c.at(x, y - 1)),
            0.5 * (n.at(x, y) - p.at(x, y)),
        ];
        let dxx = c.at(x + 1, y) + c.at(x - 1, y) - v2;
        let dyy = c.at(x, y + 1) + c.at(x, y - 1) - v2;
        let dss = n.at(x, y) + p.at(x, y) - v2;
        let dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
        let dxs = 0.25 * (n.at(x + 1, y) - n.at(x - 1, y) - p.at(x + 1, y) + p.at(x - 1, y));
        let dys = 0.25 * (n.at(x, y + 1) - n.at(x, y - 1) - p.at(x, y + 1) + p.at(x, y - 1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let sol = solve3(hess, grad)?;
        offset = [-sol[0], -sol[1], -sol[2]];
        if offset.iter().all(|o| o.abs() < 0.5) {
            converged = true;
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e6) {
            return None;
        }
        let nx = x as isize + math::rintf(offset[0]) as isize;
        let ny = y as isize + math::rintf(offset[1]) as isize;
        let ns = s as isize + math::rintf(offset[2]) as isize;
        if ns < 1
            || ns > levels as isize
            || nx < BORDER as isize
            || ny < BORDER as isize
            || nx >= (w - BORDER) as isize
            || ny >= (h - BORDER) as isize
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        s = ns as usize;
    }
    if !converged {
        return None;
    }
    let c = &dog[s];
    let value = c.at(x, y) + 0.5 * (grad[0] * offset[0] + grad[1] * offset[1] + grad[2] * offset[2]);
    if value.abs() * (levels as f32) < params.contrast_threshold {
        return None;
    }
    // principal-curvature ratio on the spatial Hessian
    let v2 = 2.0 * c.at(x, y);
    let dxx = c.at(x + 1, y) + c.at(x - 1, y) - v2;
    let dyy = c.at(x, y + 1) + c.at(x, y - 1) - v2;
    let dxy = 0.25 * (c.at(x + 1, y + 1) - c.at(x - 1, y + 1) - c.at(x + 1, y - 1) + c.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = params.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }
    Some(Refined {
        x,
        y,
        s,
        offset,
        value,
    })
}

#[inline]
fn gradient(p: &Plane, x: usize, y: usize) -> (f32, f32) {
    (p.at(x + 1, y) - p.at(x - 1, y), p.at(x, y + 1) - p.at(x, y - 1))
}

/// Dominant orientations of the smoothed gradient histogram around `(x, y)`.
fn orientations(g: &Plane, x: usize, y: usize, scl: f32) -> Vec<f32> {
    let radius = math::rintf(ORI_RADIUS_FACTOR * scl) as isize;
    let sigma = ORI_SIGMA_FACTOR * scl;
    let denom = -1.0 / (2.0 * sigma * sigma);
    let mut hist = [0f32; ORI_BINS];
    for dy in -radius..=radius {
        let yy = y as isize + dy;
        if yy <= 0 || yy >= g.h as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let xx = x as isize + dx;
            if xx <= 0 || xx >= g.w as isize - 1 {
                continue;
            }
            let (gx, gy) = gradient(g, xx as usize, yy as usize);
            let mag = math::sqrtf(gx * gx + gy * gy);
            let weight = math::expf(((dx * dx + dy * dy) as f32) * denom);
            let mut angle = math::atan2f(gy, gx);
            if angle < 0.0 {
                angle += 2.0 * PI;
            }
            let bin = (math::rintf(angle * ORI_BINS as f32 / (2.0 * PI)) as usize) % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    let mut smooth = [0f32; ORI_BINS];
    for (i, s) in smooth.iter_mut().enumerate() {
        let at = |d: isize| hist[((i as isize + d).rem_euclid(ORI_BINS as isize)) as usize];
        *s = (at(-2) + at(2)) * (1.0 / 16.0) + (at(-1) + at(1)) * (4.0 / 16.0) + at(0) * (6.0 / 16.0);
    }
    let max = smooth.iter().cloned().fold(0f32, f32::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..ORI_BINS {
        let l = smooth[(i + ORI_BINS - 1) % ORI_BINS];
        let r = smooth[(i + 1) % ORI_BINS];
        let c = smooth[i];
        if c > l && c > r && c >= ORI_PEAK_RATIO * max {
            let mut bin = i as f32 + 0.5 * (l - r) / (l - 2.0 * c + r);
            if bin < 0.0 {
                bin += ORI_BINS as f32;
            } else if bin >= ORI_BINS as f32 {
                bin -= ORI_BINS as f32;
            }
            out.push(bin * 2.0 * PI / ORI_BINS as f32);
        }
    }
    out
}

fn describe(g: &Plane, x: usize, y: usize, scl: f32, angle: f32) -> Descriptor {
    let d = DESC_WIDTH as f32;
    let n = DESC_BINS as f32;
    let hist_width = DESC_SCALE_FACTOR * scl;
    let radius = math::rintf(hist_width * core::f32::consts::SQRT_2 * (d + 1.0) * 0.5) as isize;
    let radius = radius.min(math::sqrtf((g.w * g.w + g.h * g.h) as f32) as isize);
    let (sin_t, cos_t) = (libm::sinf(angle), libm::cosf(angle));
    let cos_t = cos_t / hist_width;
    let sin_t = sin_t / hist_width;
    let exp_scale = -1.0 / (d * d * 0.5);
    const HW: usize = DESC_WIDTH + 2;
    const HB: usize = DESC_BINS + 2;
    let mut hist = [0f32; HW * HW * HB];
    for i in -radius..=radius {
        for j in -radius..=radius {
            // rotate the sample offset into the keypoint frame (j along x, i along y)
            let c_rot = j as f32 * cos_t + i as f32 * sin_t;
            let r_rot = -(j as f32) * sin_t + i as f32 * cos_t;
            let rbin = r_rot + d / 2.0 - 0.5;
            let cbin = c_rot + d / 2.0 - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let yy = y as isize + i;
            let xx = x as isize + j;
            if yy <= 0 || yy >= g.h as isize - 1 || xx <= 0 || xx >= g.w as isize - 1 {
                continue;
            }
            let (gx, gy) = gradient(g, xx as usize, yy as usize);
            let mut ori = math::atan2f(gy, gx) - angle;
            while ori < 0.0 {
                ori += 2.0 * PI;
            }
            while ori >= 2.0 * PI {
                ori -= 2.0 * PI;
            }
            let obin = ori * n / (2.0 * PI);
            let mag = math::sqrtf(gx * gx + gy * gy)
                * math::expf((c_rot * c_rot + r_rot * r_rot) * exp_scale);

            let r0 = math::floorf(rbin);
            let c0 = math::floorf(cbin);
            let o0 = math::floorf(obin);
            let (dr, dc, dob) = (rbin - r0, cbin - c0, obin - o0);
            let (r0, c0) = (r0 as isize, c0 as isize);
            let o0 = (o0 as usize) % DESC_BINS;
            // trilinear spread into the padded histogram
            for (ri, wr) in [(0, 1.0 - dr), (1, dr)] {
                for (ci, wc) in [(0, 1.0 - dc), (1, dc)] {
                    for (oi, wo) in [(0, 1.0 - dob), (1, dob)] {
                        let rr = (r0 + 1 + ri) as usize;
                        let cc = (c0 + 1 + ci) as usize;
                        let oo = o0 + oi;
                        hist[(rr * HW + cc) * HB + oo] += mag * wr * wc * wo;
                    }
                }
            }
        }
    }
    let mut out = [0f32; DESCRIPTOR_LEN];
    for r in 0..DESC_WIDTH {
        for c in 0..DESC_WIDTH {
            let base = ((r + 1) * HW + (c + 1)) * HB;
            // orientation bins wrap around
            hist[base] += hist[base + DESC_BINS];
            hist[base + 1] += hist[base + DESC_BINS + 1];
            for o in 0..DESC_BINS {
                out[(r * DESC_WIDTH + c) * DESC_BINS + o] = hist[base + o];
            }
        }
    }
    normalize_clip(&mut out);
    Descriptor(out)
}

fn normalize_clip(v: &mut [f32; DESCRIPTOR_LEN]) {
    let norm = math::sqrtf(v.iter().map(|x| x * x).sum());
    if norm <= 0.0 {
        return;
    }
    for x in v.iter_mut() {
        *x = (*x / norm).min(DESC_CLIP);
    }
    let norm = math::sqrtf(v.iter().map(|x| x * x).sum());
    for x in v.iter_mut() {
        *x /= norm;
    }
}

/// Detects DoG keypoints on the luma of `img` and describes each dominant
/// orientation. Images too small for a single octave yield no features.
pub fn detect_and_describe(img: &Raster, params: &SiftParams) -> Vec<Feature> {
    let (w, h) = (img.width(), img.height());
    if w < 2 * BORDER + 4 || h < 2 * BORDER + 4 || params.levels == 0 {
        return Vec::new();
    }
    let octaves = build_scale_space(img.luma(), w, h, params);
    let levels = params.levels;
    let prefilter = 0.5 * params.contrast_threshold / levels as f32;
    let mut features = Vec::new();
    for (o, oct) in octaves.iter().enumerate() {
        let (ow, oh) = (oct.dog[0].w, oct.dog[0].h);
        let factor = (1usize << o) as f32;
        for s in 1..=levels {
            for y in BORDER..oh - BORDER {
                for x in BORDER..ow - BORDER {
                    let v = oct.dog[s].at(x, y);
                    if v.abs() <= prefilter || !is_extremum(&oct.dog, s, x, y) {
                        continue;
                    }
                    let Some(r) = refine(&oct.dog, levels, x, y, s, params) else {
                        continue;
                    };
                    let layer = r.s as f32 + r.offset[2];
                    let scl_octave =
                        params.sigma as f32 * math::powf(2.0, layer / levels as f32);
                    let kx = (r.x as f32 + r.offset[0]) * factor;
                    let ky = (r.y as f32 + r.offset[1]) * factor;
                    if kx < 0.0 || ky < 0.0 || kx >= w as f32 || ky >= h as f32 {
                        continue;
                    }
                    let g = &oct.gauss[r.s];
                    for angle in orientations(g, r.x, r.y, scl_octave) {
                        features.push(Feature {
                            keypoint: Keypoint {
                                x: kx,
                                y: ky,
                                scale: scl_octave * factor,
                                orientation: angle,
                                response: r.value.abs(),
                                octave: o,
                            },
                            descriptor: describe(g, r.x, r.y, scl_octave, angle),
                        });
                    }
                }
            }
        }
    }
    if params.max_features > 0 && features.len() > params.max_features {
        // stable sort keeps scan order among equal responses
        features.sort_by(|a, b| b.keypoint.response.total_cmp(&a.keypoint.response));
        features.truncate(params.max_features);
    }
    features
}
