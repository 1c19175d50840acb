//! Evaluation protocol helpers and the occlusion check.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::flowalign::residual_map;
use crate::imagekit::{percentile, resample_bicubic, Raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Native resolution; oversized outputs are downsampled to the GT grid.
    Realistic,
    /// Outputs must already match the GT grid.
    Theoretical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub intermediate: Raster,
    pub output: Raster,
}

/// Bicubic downsample by `factor` (dimensions floored) followed by bicubic
/// upsampling back to the original size.
pub fn degrade_theoretical(w: &Raster, factor: usize) -> Result<Degraded> {
    if factor < 2 {
        return Err(contract("degradation factor must be at least 2"));
    }
    if w.width() < factor || w.height() < factor {
        return Err(contract(format!(
            "{}x{} image is smaller than the factor {factor}",
            w.width(),
            w.height()
        )));
    }
    let intermediate = resample_bicubic(w, w.width() / factor, w.height() / factor);
    let output = resample_bicubic(&intermediate, w.width(), w.height());
    Ok(Degraded { intermediate, output })
}

/// Brings a method output onto the GT grid as the protocol prescribes.
pub fn prepare_output(protocol: Protocol, output: &Raster, gt: &Raster) -> Result<Raster> {
    let (ow, oh) = (output.width(), output.height());
    let (gw, gh) = (gt.width(), gt.height());
    if output.channels() != gt.channels() {
        return Err(contract(format!(
            "output has {} channels, GT has {}",
            output.channels(),
            gt.channels()
        )));
    }
    if (ow, oh) == (gw, gh) {
        return Ok(output.clone());
    }
    match protocol {
        Protocol::Realistic if ow >= gw && oh >= gh => Ok(resample_bicubic(output, gw, gh)),
        _ => Err(contract(format!(
            "output is {ow}x{oh}, GT is {gw}x{gh}"
        ))),
    }
}

/// 99th percentile of the sigma-1 luma residual; high values point at
/// parallax or occlusion between the two views.
pub fn occlusion_score(w_cal: &Raster, gt_cal: &Raster) -> Result<f64> {
    let r = residual_map(w_cal, gt_cal, 1.0)?;
    let v = r.as_f32().unwrap_or(&[]);
    Ok(percentile(v, 0.99).unwrap_or(0.0).clamp(0.0, 1.0) as f64)
}
