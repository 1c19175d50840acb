use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::raster::Raster;
use crate::error::{contract, Result};

/// Integer pixel rectangle, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

pub fn crop(img: &Raster, rect: CropRect) -> Result<Raster> {
    if rect.width == 0
        || rect.height == 0
        || rect.x + rect.width > img.width()
        || rect.y + rect.height > img.height()
    {
        return Err(contract(format!(
            "crop {}x{}+{}+{} exceeds {}x{} image",
            rect.width,
            rect.height,
            rect.x,
            rect.y,
            img.width(),
            img.height()
        )));
    }
    let planes: Vec<Vec<f32>> = (0..img.channels())
        .map(|c| {
            let mut p = Vec::with_capacity(rect.width * rect.height);
            for y in rect.y..rect.y + rect.height {
                for x in rect.x..rect.x + rect.width {
                    p.push(img.get(c, x, y));
                }
            }
            p
        })
        .collect();
    Ok(Raster::from_planes_verbatim(
        rect.width,
        rect.height,
        img.depth(),
        planes,
    ))
}

/// Crops the centered `out_w x out_h` window, origin floored.
pub fn center_crop(img: &Raster, out_w: usize, out_h: usize) -> Result<Raster> {
    if out_w > img.width() || out_h > img.height() {
        return Err(contract(format!(
            "crop {out_w}x{out_h} is larger than {}x{} image",
            img.width(),
            img.height()
        )));
    }
    crop(
        img,
        CropRect {
            x: (img.width() - out_w) / 2,
            y: (img.height() - out_h) / 2,
            width: out_w,
            height: out_h,
        },
    )
}
