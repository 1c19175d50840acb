//! Intensity mapping tables that carry one image's tones onto another's.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::imagekit::{quantize_u8, Depth, Raster};
use crate::mask::Mask;

pub const LEVELS: usize = 256;

/// Table for one channel. `value[k]` is the mean target level over pixels
/// whose source level is `k`; unpopulated levels are interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelLut {
    pub value: Vec<f64>,
    pub count: Vec<u64>,
    pub populated: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutEntry {
    pub value: f64,
    pub populated: bool,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorLUT {
    pub channels: Vec<ChannelLut>,
}

impl ChannelLut {
    fn from_sums(sum: &[u64], count: &[u64]) -> Self {
        let populated: Vec<bool> = count.iter().map(|&n| n > 0).collect();
        let mut value = vec![0f64; LEVELS];
        for k in 0..LEVELS {
            if populated[k] {
                value[k] = sum[k] as f64 / count[k] as f64;
            }
        }
        let mut lut = ChannelLut {
            value,
            count: count.to_vec(),
            populated,
        };
        lut.fill_gaps();
        lut
    }

    /// Linear interpolation between populated neighbours, constant beyond
    /// the outermost ones.
    fn fill_gaps(&mut self) {
        let known: Vec<usize> = (0..LEVELS).filter(|&k| self.populated[k]).collect();
        let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
            return;
        };
        for k in 0..first {
            self.value[k] = self.value[first];
        }
        for k in last + 1..LEVELS {
            self.value[k] = self.value[last];
        }
        for pair in known.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let (va, vb) = (self.value[a], self.value[b]);
            for k in a + 1..b {
                self.value[k] = va + (vb - va) * (k - a) as f64 / (b - a) as f64;
            }
        }
    }

    pub fn identity() -> Self {
        ChannelLut {
            value: (0..LEVELS).map(|k| k as f64).collect(),
            count: vec![0; LEVELS],
            populated: vec![false; LEVELS],
        }
    }

    pub fn map(&self, level: u8) -> u8 {
        quantize_u8(self.value[level as usize] as f32)
    }
}

impl ColorLUT {
    pub fn identity(channels: usize) -> Self {
        ColorLUT {
            channels: vec![ChannelLut::identity(); channels],
        }
    }

    pub fn entry(&self, channel: usize, level: u8) -> LutEntry {
        let c = &self.channels[channel];
        let k = level as usize;
        LutEntry {
            value: c.value[k],
            populated: c.populated[k],
            count: c.count[k],
        }
    }
}

fn check_roi(src: &Raster, roi: Option<&Mask>) -> Result<()> {
    if let Some(m) = roi {
        if (m.width(), m.height()) != (src.width(), src.height()) {
            return Err(Error::DimensionMismatch {
                expected: src.dims(),
                found: (m.width(), m.height(), 1),
            });
        }
        if m.valid_count() == 0 {
            return Err(Error::NoStatistics("region of interest is empty".into()));
        }
    }
    Ok(())
}

fn u8_samples(img: &Raster) -> Vec<u8> {
    let q = img.to_u8();
    q.as_u8().map(|d| d.to_vec()).unwrap_or_default()
}

/// Per-channel table mapping source levels to mean target levels, gathered
/// over pixels valid in `roi` (all pixels when `None`).
pub fn build_intensity_lut(src: &Raster, target: &Raster, roi: Option<&Mask>) -> Result<ColorLUT> {
    src.same_dims(target)?;
    check_roi(src, roi)?;
    let n = src.plane_len();
    let (s, t) = (u8_samples(src), u8_samples(target));
    let channels = (0..src.channels())
        .map(|c| {
            let mut sum = [0u64; LEVELS];
            let mut count = [0u64; LEVELS];
            for i in 0..n {
                if roi.is_some_and(|m| !m.is_valid_index(i)) {
                    continue;
                }
                let k = s[c * n + i] as usize;
                sum[k] += t[c * n + i] as u64;
                count[k] += 1;
            }
            ChannelLut::from_sums(&sum, &count)
        })
        .collect();
    Ok(ColorLUT { channels })
}

/// Table lookup per pixel and channel, rounded half-to-even to 8 bits.
pub fn apply_lut(img: &Raster, lut: &ColorLUT) -> Result<Raster> {
    if lut.channels.len() != img.channels() {
        return Err(contract(format!(
            "table has {} channels, image has {}",
            lut.channels.len(),
            img.channels()
        )));
    }
    let n = img.plane_len();
    let s = u8_samples(img);
    let mut out = Vec::with_capacity(s.len());
    for (c, table) in lut.channels.iter().enumerate() {
        let mapped: Vec<u8> = (0..LEVELS).map(|k| table.map(k as u8)).collect();
        out.extend(s[c * n..(c + 1) * n].iter().map(|&v| mapped[v as usize]));
    }
    Raster::new_u8(img.width(), img.height(), img.channels(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lut3DCell {
    pub count: u64,
    pub src_mean: [f64; 3],
    pub target_mean: [f64; 3],
}

/// Joint-RGB statistics on a `bins^3` grid, with a per-channel table as the
/// fallback for pixels whose neighbourhood saw no samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lut3D {
    pub bins: usize,
    pub cells: Vec<Lut3DCell>,
    pub fallback: ColorLUT,
}

impl Lut3D {
    pub fn build(src: &Raster, target: &Raster, bins: usize, roi: Option<&Mask>) -> Result<Self> {
        src.same_dims(target)?;
        if src.channels() != 3 {
            return Err(contract("joint colour table needs three channels"));
        }
        if bins == 0 || bins > LEVELS || !LEVELS.is_multiple_of(bins) {
            return Err(contract(format!("bins must divide {LEVELS}, got {bins}")));
        }
        let fallback = build_intensity_lut(src, target, roi)?;
        let n = src.plane_len();
        let (s, t) = (u8_samples(src), u8_samples(target));
        let mut sums = vec![([0u64; 3], [0u64; 3], 0u64); bins * bins * bins];
        let width = LEVELS / bins;
        for i in 0..n {
            if roi.is_some_and(|m| !m.is_valid_index(i)) {
                continue;
            }
            let px = [s[i], s[n + i], s[2 * n + i]];
            let cell = cell_index(bins, px.map(|v| v as usize / width));
            let e = &mut sums[cell];
            for c in 0..3 {
                e.0[c] += px[c] as u64;
                e.1[c] += t[c * n + i] as u64;
            }
            e.2 += 1;
        }
        let cells = sums
            .into_iter()
            .map(|(ss, ts, count)| {
                if count == 0 {
                    return Lut3DCell::default();
                }
                let k = count as f64;
                Lut3DCell {
                    count,
                    src_mean: ss.map(|v| v as f64 / k),
                    target_mean: ts.map(|v| v as f64 / k),
                }
            })
            .collect();
        Ok(Lut3D { bins, cells, fallback })
    }

    /// Each pixel is shifted by the trilinearly interpolated mean offset of
    /// the occupied cells around it.
    pub fn apply(&self, img: &Raster) -> Result<Raster> {
        if img.channels() != 3 {
            return Err(contract("joint colour table needs three channels"));
        }
        let n = img.plane_len();
        let s = u8_samples(img);
        let scale = self.bins as f64 / LEVELS as f64;
        let top = self.bins as isize - 1;
        let mut planes = vec![vec![0f32; n]; 3];
        for i in 0..n {
            let px = [s[i], s[n + i], s[2 * n + i]];
            let mut base = [0isize; 3];
            let mut frac = [0f64; 3];
            for c in 0..3 {
                let f = (px[c] as f64 + 0.5) * scale - 0.5;
                let fl = crate::math::floor(f);
                base[c] = fl as isize;
                frac[c] = f - fl;
            }
            let mut acc = [0f64; 3];
            let mut wsum = 0f64;
            for corner in 0..8 {
                let mut idx = [0usize; 3];
                let mut wgt = 1.0;
                for c in 0..3 {
                    let hi = (corner >> c) & 1 == 1;
                    wgt *= if hi { frac[c] } else { 1.0 - frac[c] };
                    idx[c] = (base[c] + hi as isize).clamp(0, top) as usize;
                }
                let cell = &self.cells[cell_index(self.bins, idx)];
                if wgt <= 0.0 || cell.count == 0 {
                    continue;
                }
                for c in 0..3 {
                    acc[c] += wgt * (cell.target_mean[c] - cell.src_mean[c]);
                }
                wsum += wgt;
            }
            for c in 0..3 {
                planes[c][i] = if wsum > 0.0 {
                    (px[c] as f64 + acc[c] / wsum) as f32
                } else {
                    self.fallback.channels[c].value[px[c] as usize] as f32
                };
            }
        }
        Ok(Raster::from_planes(img.width(), img.height(), Depth::U8, planes))
    }
}

fn cell_index(bins: usize, idx: [usize; 3]) -> usize {
    (idx[0] * bins + idx[1]) * bins + idx[2]
}

/// Builds a joint table from `(src, target)` and applies it to `src`.
pub fn build_apply_lut3d(src: &Raster, target: &Raster, bins: usize) -> Result<Raster> {
    Lut3D::build(src, target, bins, None)?.apply(src)
}
