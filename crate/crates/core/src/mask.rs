//! Problematic-region masks: 0 marks a valid pixel, 255 a pixel excluded from
//! statistics and training.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::imagekit::Raster;

pub const VALID: u8 = 0;
pub const PROBLEMATIC: u8 = 255;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(contract("mask data does not match its dimensions"));
        }
        if let Some(v) = data.iter().find(|&&v| v != VALID && v != PROBLEMATIC) {
            return Err(contract(alloc::format!(
                "mask samples must be 0 or 255, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn all_valid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![VALID; width * height],
        }
    }

    /// `true` entries become valid pixels.
    pub fn from_valid(width: usize, height: usize, valid: &[bool]) -> Self {
        debug_assert_eq!(valid.len(), width * height);
        Self {
            width,
            height,
            data: valid
                .iter()
                .map(|&v| if v { VALID } else { PROBLEMATIC })
                .collect(),
        }
    }

    pub fn from_raster(r: &Raster) -> Result<Self> {
        if r.channels() != 1 {
            return Err(contract("mask raster must have one channel"));
        }
        let data = r
            .as_u8()
            .ok_or_else(|| contract("mask raster must be 8-bit"))?
            .to_vec();
        Self::new(r.width(), r.height(), data)
    }

    pub fn to_raster(&self) -> Raster {
        Raster::new_u8(self.width, self.height, 1, self.data.clone())
            .expect("mask dims are validated at construction")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] == VALID
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        self.data[i] == VALID
    }

    pub fn set(&mut self, x: usize, y: usize, valid: bool) {
        self.data[y * self.width + x] = if valid { VALID } else { PROBLEMATIC };
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == VALID).count()
    }

    pub fn problematic_count(&self) -> usize {
        self.data.len() - self.valid_count()
    }

    /// Pixels valid in both masks.
    pub fn intersect(&self, other: &Mask) -> Result<Mask> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(contract("mask dimensions differ"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| if a == VALID && b == VALID { VALID } else { PROBLEMATIC })
            .collect();
        Ok(Mask {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Rasterizes polygons with the even-odd rule over all edges of all polygons
/// jointly, so overlapping regions cancel. A pixel is inside when its center
/// `(x + 0.5, y + 0.5)` sees an odd number of edge crossings to its right.
/// Inside pixels are marked problematic (255).
pub fn rasterize_even_odd(width: usize, height: usize, polygons: &[Vec<[f64; 2]>]) -> Mask {
    let mut mask = Mask::all_valid(width, height);
    let mut xs: Vec<f64> = Vec::new();
    for y in 0..height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for poly in polygons {
            let n = poly.len();
            for i in 0..n {
                let [x0, y0] = poly[i];
                let [x1, y1] = poly[(i + 1) % n];
                if (y0 <= yc) != (y1 <= yc) {
                    xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            let start = (a - 1.0).max(0.0) as usize;
            for x in start..width {
                let xc = x as f64 + 0.5;
                if xc >= b {
                    break;
                }
                if xc >= a {
                    // pairs are disjoint after sorting, so toggling equals setting
                    let i = y * width + x;
                    mask.data[i] = if mask.data[i] == VALID { PROBLEMATIC } else { VALID };
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_binary_values() {
        assert!(Mask::new(2, 1, vec![0, 7]).is_err());
        assert!(Mask::new(2, 1, vec![0, 255]).is_ok());
    }

    #[test]
    fn empty_polygon_list_gives_clear_mask() {
        let m = rasterize_even_odd(8, 8, &[]);
        assert_eq!(m.valid_count(), 64);
    }

    #[test]
    fn overlapping_squares_cancel() {
        let a = vec![[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [1.0, 5.0]];
        let b = vec![[3.0, 3.0], [7.0, 3.0], [7.0, 7.0], [3.0, 7.0]];
        let m = rasterize_even_odd(8, 8, &[a, b]);
        assert!(!m.is_valid(1, 1));
        assert!(!m.is_valid(6, 6));
        // overlap [3,5)x[3,5) excluded
        for (x, y) in [(3, 3), (4, 4), (3, 4), (4, 3)] {
            assert!(m.is_valid(x, y), "{x},{y}");
        }
        assert_eq!(m.problematic_count(), 16 + 16 - 2 * 4);
    }
}
