//! Edge-gated detail transfer from an aligned telephoto reference onto the
//! wide image, built from fixed operators.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::flowalign::{compute_flow, FlowParams};
use crate::imagekit::{blur_plane, gaussian_kernel_1d, percentile, sample_bicubic, sobel_magnitude, Raster};
use crate::mask::Mask;
use crate::math;
use crate::registration::{register_pair, warp_with_map, ScaleAlignConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub c: Vec<f32>,
}

impl ConfidenceMap {
    pub fn constant(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            c: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Grayscale rendering, 255 at full confidence.
    pub fn to_raster(&self) -> Raster {
        Raster::from_planes(
            self.width,
            self.height,
            crate::Depth::U8,
            vec![self.c.iter().map(|v| v * 255.0).collect()],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub smooth_sigma: f64,
    pub gain: f32,
    pub highpass_sigma: f64,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            smooth_sigma: 1.5,
            gain: 4.0,
            highpass_sigma: 1.0,
        }
    }
}

fn gaussian_f32(sigma: f64) -> Result<Vec<f32>> {
    let size = 2 * (math::ceil(3.0 * sigma) as usize) + 1;
    Ok(gaussian_kernel_1d(size, sigma)?.into_iter().map(|v| v as f32).collect())
}

/// Blurred Sobel magnitude divided by its 99th percentile, scaled by `gain`
/// and clamped to `[0, 1]`.
pub fn edge_confidence(w: &Raster, smooth_sigma: f64, gain: f32) -> Result<ConfidenceMap> {
    if !(gain > 0.0) {
        return Err(contract("gain must be positive"));
    }
    if !(smooth_sigma > 0.0) {
        return Err(contract("smoothing sigma must be positive"));
    }
    let (width, height) = (w.width(), w.height());
    let sobel = sobel_magnitude(w);
    let mag = blur_plane(sobel.as_f32().unwrap_or(&[]), width, height, &gaussian_f32(smooth_sigma)?);
    let mut norm = percentile(&mag, 0.99).unwrap_or(0.0);
    if norm <= 0.0 {
        norm = mag.iter().copied().fold(0.0, f32::max);
    }
    let c = mag
        .iter()
        .map(|&m| {
            if m <= 0.0 || norm <= 0.0 {
                0.0
            } else {
                (gain * (m / norm)).clamp(0.0, 1.0)
            }
        })
        .collect();
    Ok(ConfidenceMap { width, height, c })
}

/// `w + C * (t - blur(t))`, clamped. Where `C` is zero or `coverage` marks
/// the reference as missing, the output sample is copied from `w`.
pub fn detail_transfer(
    w: &Raster,
    t_aligned: &Raster,
    c: &ConfidenceMap,
    highpass_sigma: f64,
    coverage: Option<&Mask>,
) -> Result<Raster> {
    w.same_dims(t_aligned)?;
    let (width, height) = (w.width(), w.height());
    if (c.width, c.height) != (width, height) {
        return Err(Error::DimensionMismatch {
            expected: w.dims(),
            found: (c.width, c.height, 1),
        });
    }
    if let Some(m) = coverage {
        if (m.width(), m.height()) != (width, height) {
            return Err(Error::DimensionMismatch {
                expected: w.dims(),
                found: (m.width(), m.height(), 1),
            });
        }
    }
    if !(highpass_sigma > 0.0) {
        return Err(contract("high-pass sigma must be positive"));
    }
    let k = gaussian_f32(highpass_sigma)?;
    let planes = (0..w.channels())
        .map(|ch| {
            let base = w.plane(ch);
            let t = t_aligned.plane(ch);
            let low = blur_plane(&t, width, height, &k);
            (0..width * height)
                .map(|i| {
                    let gate = c.c[i];
                    if gate == 0.0 || coverage.is_some_and(|m| !m.is_valid_index(i)) {
                        base[i]
                    } else {
                        base[i] + gate * (t[i] - low[i])
                    }
                })
                .collect()
        })
        .collect();
    Ok(Raster::from_planes(width, height, w.depth(), planes))
}

/// Registers `t` to `w` with a homography, refines with dense flow and
/// returns `t` on `w`'s grid together with its coverage.
pub fn align_reference(w: &Raster, t: &Raster, cfg: &ScaleAlignConfig, flow: &FlowParams) -> Result<(Raster, Mask)> {
    if w.depth() != t.depth() {
        return Err(contract("wide and reference must share a sample depth"));
    }
    let (h, _, _) = register_pair(w, t, cfg)?;
    let to_t = h.inverse()?;
    let (warped, coverage) = warp_with_map(t, &to_t, w.width(), w.height());
    // uncovered pixels borrow from `w` so the flow sees no false edge there
    let filled = Raster::from_planes(
        w.width(),
        w.height(),
        warped.depth(),
        (0..warped.channels())
            .map(|c| {
                let (pw, pt) = (w.plane(c), warped.plane(c));
                (0..pt.len())
                    .map(|i| if coverage.is_valid_index(i) { pt[i] } else { pw[i] })
                    .collect()
            })
            .collect(),
    );
    let f = compute_flow(w, &filled, flow)?;
    let (width, height) = (w.width(), w.height());
    let planes: Vec<Vec<f32>> = (0..warped.channels()).map(|c| warped.plane(c)).collect();
    let mut out = planes.clone();
    let mut valid = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let (sx, sy) = if f.valid[i] {
                (x as f32 + f.u[i], y as f32 + f.v[i])
            } else {
                (x as f32, y as f32)
            };
            let (fx, fy) = (math::floorf(sx) as isize, math::floorf(sy) as isize);
            let inside = (-1..=2).all(|dy| {
                (-1..=2).all(|dx| {
                    let (px, py) = (fx + dx, fy + dy);
                    px >= 0
                        && py >= 0
                        && (px as usize) < width
                        && (py as usize) < height
                        && coverage.is_valid(px as usize, py as usize)
                })
            });
            valid[i] = inside;
            if inside && f.valid[i] {
                for (o, p) in out.iter_mut().zip(&planes) {
                    o[i] = sample_bicubic(p, width, height, sx, sy);
                }
            } else if !inside {
                for o in out.iter_mut() {
                    o[i] = 0.0;
                }
            }
        }
    }
    Ok((
        Raster::from_planes(width, height, warped.depth(), out),
        Mask::from_valid(width, height, &valid),
    ))
}
