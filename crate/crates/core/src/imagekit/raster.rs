use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::math;

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Depth {
    U8,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ColorSpace {
    #[default]
    Srgb,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

/// Planar image buffer. Sample `(c, x, y)` lives at `c * w * h + y * w + x`.
///
/// `U8` rasters hold values in `[0, 255]`. `F32` rasters produced from images
/// hold normalized values in `[0, 1]`; derived maps such as gradient
/// magnitudes may exceed 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Samples,
    color_space: ColorSpace,
}

fn check_shape(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(contract("raster dimensions must be at least 1x1"));
    }
    if channels != 1 && channels != 3 {
        return Err(contract(alloc::format!(
            "raster must have 1 or 3 channels, got {channels}"
        )));
    }
    let expected = width * height * channels;
    if len != expected {
        return Err(contract(alloc::format!(
            "sample count {len} does not match {width}x{height}x{channels}"
        )));
    }
    Ok(())
}

impl Raster {
    pub fn new_u8(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_shape(width, height, channels, data.len())?;
        Ok(Self {
            width,
            height,
            channels,
            samples: Samples::U8(data),
            color_space: ColorSpace::Srgb,
        })
    }

    pub fn new_f32(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_shape(width, height, channels, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(contract("f32 raster samples must be finite"));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples: Samples::F32(data),
            color_space: ColorSpace::Srgb,
        })
    }

    /// Builds a `U8` raster from a per-sample function `f(c, x, y)`.
    pub fn from_fn_u8(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::new_u8(width, height, channels, data)
    }

    pub fn from_fn_f32(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, x, y));
                }
            }
        }
        Self::new_f32(width, height, channels, data)
    }

    pub fn filled_u8(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new_u8(width, height, channels, vec![value; width * height * channels])
    }

    /// Converts interleaved (`RGBRGB...`) samples into a planar raster.
    pub fn from_interleaved_u8(
        width: usize,
        height: usize,
        channels: usize,
        interleaved: &[u8],
    ) -> Result<Self> {
        check_shape(width, height, channels, interleaved.len())?;
        let n = width * height;
        let mut data = vec![0u8; interleaved.len()];
        for (i, px) in interleaved.chunks_exact(channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * n + i] = v;
            }
        }
        Self::new_u8(width, height, channels, data)
    }

    /// Interleaved 8-bit samples. `F32` rasters are quantized first.
    pub fn to_interleaved_u8(&self) -> Vec<u8> {
        let quantized = self.to_u8();
        let data = quantized.as_u8().unwrap_or_default();
        let n = self.width * self.height;
        let mut out = vec![0u8; data.len()];
        for i in 0..n {
            for c in 0..self.channels {
                out[i * self.channels + c] = data[c * n + i];
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn depth(&self) -> Depth {
        match self.samples {
            Samples::U8(_) => Depth::U8,
            Samples::F32(_) => Depth::F32,
        }
    }

    pub fn color_space(&self) -> ColorSpace {
        self.color_space
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    pub fn as_u8(&self) -> Option<&[u8]> {
        match &self.samples {
            Samples::U8(d) => Some(d),
            Samples::F32(_) => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.samples {
            Samples::F32(d) => Some(d),
            Samples::U8(_) => None,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.width * self.height
    }

    /// Largest representable sample value in native units.
    pub fn max_value(&self) -> f32 {
        match self.depth() {
            Depth::U8 => 255.0,
            Depth::F32 => 1.0,
        }
    }

    /// Sample in native units (0..255 for `U8`).
    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        let i = c * self.plane_len() + y * self.width + x;
        match &self.samples {
            Samples::U8(d) => d[i] as f32,
            Samples::F32(d) => d[i],
        }
    }

    /// One channel in native units.
    pub fn plane(&self, c: usize) -> Vec<f32> {
        let n = self.plane_len();
        let range = c * n..(c + 1) * n;
        match &self.samples {
            Samples::U8(d) => d[range].iter().map(|&v| v as f32).collect(),
            Samples::F32(d) => d[range].to_vec(),
        }
    }

    /// One channel scaled to `[0, 1]`.
    pub fn normalized_plane(&self, c: usize) -> Vec<f32> {
        let n = self.plane_len();
        let range = c * n..(c + 1) * n;
        match &self.samples {
            Samples::U8(d) => d[range].iter().map(|&v| v as f32 / 255.0).collect(),
            Samples::F32(d) => d[range].to_vec(),
        }
    }

    /// Normalized BT.601 luma. Single-channel rasters are returned as is.
    pub fn luma(&self) -> Vec<f32> {
        if self.channels == 1 {
            return self.normalized_plane(0);
        }
        let r = self.normalized_plane(0);
        let g = self.normalized_plane(1);
        let b = self.normalized_plane(2);
        r.iter()
            .zip(&g)
            .zip(&b)
            .map(|((&r, &g), &b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
            .collect()
    }

    /// Luma as a single-channel `F32` raster.
    pub fn luma_raster(&self) -> Raster {
        Raster::from_planes_unclamped(self.width, self.height, vec![self.luma()])
    }

    pub fn to_f32(&self) -> Raster {
        match &self.samples {
            Samples::F32(_) => self.clone(),
            Samples::U8(d) => self.with_samples(Samples::F32(
                d.iter().map(|&v| v as f32 / 255.0).collect(),
            )),
        }
    }

    /// Quantizes to 8 bits with round-half-to-even.
    pub fn to_u8(&self) -> Raster {
        match &self.samples {
            Samples::U8(_) => self.clone(),
            Samples::F32(d) => self.with_samples(Samples::U8(
                d.iter().map(|&v| quantize_u8(v * 255.0)).collect(),
            )),
        }
    }

    fn with_samples(&self, samples: Samples) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples,
            color_space: self.color_space,
        }
    }

    /// Assembles a raster of `depth` from native-unit planes, clamping to the
    /// depth's valid range (and rounding half-to-even for `U8`).
    pub fn from_planes(width: usize, height: usize, depth: Depth, planes: Vec<Vec<f32>>) -> Self {
        let channels = planes.len();
        debug_assert!(planes.iter().all(|p| p.len() == width * height));
        let samples = match depth {
            Depth::U8 => Samples::U8(planes.iter().flatten().map(|&v| quantize_u8(v)).collect()),
            Depth::F32 => Samples::F32(
                planes
                    .iter()
                    .flatten()
                    .map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                    .collect(),
            ),
        };
        Raster {
            width,
            height,
            channels,
            samples,
            color_space: ColorSpace::Srgb,
        }
    }

    /// Like [`Raster::from_planes`] but keeps `F32` samples unclamped.
    pub(crate) fn from_planes_verbatim(
        width: usize,
        height: usize,
        depth: Depth,
        planes: Vec<Vec<f32>>,
    ) -> Self {
        match depth {
            Depth::U8 => Self::from_planes(width, height, depth, planes),
            Depth::F32 => Self::from_planes_unclamped(width, height, planes),
        }
    }

    /// `F32` raster without range clamping, for derived maps.
    pub fn from_planes_unclamped(width: usize, height: usize, planes: Vec<Vec<f32>>) -> Self {
        let channels = planes.len();
        Raster {
            width,
            height,
            channels,
            samples: Samples::F32(planes.into_iter().flatten().collect()),
            color_space: ColorSpace::Srgb,
        }
    }

    pub fn same_dims(&self, other: &Raster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }

    pub fn same_size(&self, other: &Raster) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

/// Round half to even, clamped to `[0, 255]`.
#[inline]
pub fn quantize_u8(v: f32) -> u8 {
    if v.is_nan() {
        return 0;
    }
    math::rintf(v).clamp(0.0, 255.0) as u8
}
