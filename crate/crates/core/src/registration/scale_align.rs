use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::homography::{estimate_homography, Correspondence, EstimationMethod, Homography, RansacParams};
use super::matching::match_descriptors;
use super::sift::{detect_and_describe, Descriptor, SiftParams};
use super::warp::warp_with_map;
use crate::error::{contract, Error, Result};
use crate::imagekit::{crop, CropRect, Raster};
use crate::mask::Mask;
use crate::math;

/// Frame the calibrated triple lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GtFrame {
    /// Wide overlap is upsampled onto the telephoto grid; GT stays unresampled.
    #[default]
    Tele,
    /// GT is warped down onto the wide grid.
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleAlignConfig {
    pub sift: SiftParams,
    pub ratio: f32,
    pub ransac: RansacParams,
    pub min_matches: usize,
    /// Minimum side length of the shared rectangle, in output pixels.
    pub min_overlap: usize,
    pub gt_frame: GtFrame,
}

impl Default for ScaleAlignConfig {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            ratio: 0.75,
            ransac: RansacParams::default(),
            min_matches: 50,
            min_overlap: 32,
            gt_frame: GtFrame::Tele,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleAlignResult {
    pub w_cal: Raster,
    pub gt_cal: Raster,
    pub t_cal: Raster,
    /// Maps GT (telephoto) pixel coordinates to wide pixel coordinates.
    pub h_overlap: Homography,
    /// Output-pixel to raw-wide-pixel map used to produce `w_cal`.
    pub w_transform: Homography,
    /// Output-pixel to raw-tele-pixel map used to produce `t_cal`.
    pub t_transform: Homography,
    /// Shared rectangle in the wide frame.
    pub overlap: CropRect,
    /// Shared rectangle in the GT frame.
    pub gt_rect: CropRect,
    /// Pixels of `w_cal` whose samples came entirely from inside the wide image.
    pub coverage: Mask,
    pub matches: usize,
    pub inliers: usize,
}

/// JSON-friendly subset of [`ScaleAlignResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleAlignAudit {
    pub homography: Homography,
    pub w_transform: Homography,
    pub t_transform: Homography,
    pub overlap: CropRect,
    pub gt_rect: CropRect,
    pub matches: usize,
    pub inliers: usize,
    pub gt_frame: GtFrame,
}

impl ScaleAlignResult {
    pub fn audit(&self, gt_frame: GtFrame) -> ScaleAlignAudit {
        ScaleAlignAudit {
            homography: self.h_overlap,
            w_transform: self.w_transform,
            t_transform: self.t_transform,
            overlap: self.overlap,
            gt_rect: self.gt_rect,
            matches: self.matches,
            inliers: self.inliers,
            gt_frame,
        }
    }
}

const SNAP: f64 = 0.05;

/// Axis-aligned rectangle inside the image of a `src_w x src_h` frame under
/// `h`, clipped to `dst_w x dst_h`. Quad corners are pixel edges, so an
/// identity map yields the full frame.
pub fn interior_rect(
    h: &Homography,
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Option<CropRect> {
    let edge = |x: f64, y: f64| {
        let (u, v) = h.apply(x - 0.5, y - 0.5);
        (u + 0.5, v + 0.5)
    };
    let (sw, sh) = (src_w as f64, src_h as f64);
    let tl = edge(0.0, 0.0);
    let tr = edge(sw, 0.0);
    let br = edge(sw, sh);
    let bl = edge(0.0, sh);
    let x0 = tl.0.max(bl.0).max(0.0);
    let x1 = tr.0.min(br.0).min(dst_w as f64);
    let y0 = tl.1.max(tr.1).max(0.0);
    let y1 = bl.1.min(br.1).min(dst_h as f64);
    if ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
        return None;
    }
    let lo = |v: f64| math::ceil(v - SNAP).max(0.0) as usize;
    let hi = |v: f64| math::floor(v + SNAP).max(0.0) as usize;
    let (ix0, iy0) = (lo(x0), lo(y0));
    let (ix1, iy1) = (hi(x1).min(dst_w), hi(y1).min(dst_h));
    if ix1 <= ix0 || iy1 <= iy0 {
        return None;
    }
    Some(CropRect {
        x: ix0,
        y: iy0,
        width: ix1 - ix0,
        height: iy1 - iy0,
    })
}

/// Feature-based homography from `t1` into `w2`. Returns the estimate with
/// match and inlier counts.
pub fn register_pair(
    w2: &Raster,
    t1: &Raster,
    cfg: &ScaleAlignConfig,
) -> Result<(Homography, usize, usize)> {
    let fw = detect_and_describe(w2, &cfg.sift);
    let ft = detect_and_describe(t1, &cfg.sift);
    let dw: Vec<Descriptor> = fw.iter().map(|f| f.descriptor.clone()).collect();
    let dt: Vec<Descriptor> = ft.iter().map(|f| f.descriptor.clone()).collect();
    let matches = match_descriptors(&dt, &dw, cfg.ratio)?;
    let required = cfg.min_matches.max(4);
    if matches.len() < required {
        return Err(Error::AlignmentFailed {
            matches: matches.len(),
            required,
        });
    }
    let corr: Vec<Correspondence> = matches
        .iter()
        .map(|m| {
            let a = &ft[m.idx_a].keypoint;
            let b = &fw[m.idx_b].keypoint;
            Correspondence {
                src: [a.x as f64, a.y as f64],
                dst: [b.x as f64, b.y as f64],
            }
        })
        .collect();
    let est = estimate_homography(&corr, &EstimationMethod::Ransac(cfg.ransac))?;
    let inliers = est.inlier_count();
    if inliers < 4 {
        return Err(Error::AlignmentFailed {
            matches: inliers,
            required: 4,
        });
    }
    Ok((est.homography, matches.len(), inliers))
}

/// Brings a wide/telephoto/GT triple onto one shared grid. `t2` must have
/// the wide image's dimensions; it receives the exact transform used for `w2`.
pub fn scale_align(
    w2: &Raster,
    t1: &Raster,
    t2: &Raster,
    cfg: &ScaleAlignConfig,
) -> Result<ScaleAlignResult> {
    if t2.width() != w2.width() || t2.height() != w2.height() {
        return Err(contract(format!(
            "telephoto input is {}x{}, expected the wide dimensions {}x{}",
            t2.width(),
            t2.height(),
            w2.width(),
            w2.height()
        )));
    }
    let (h, matches, inliers) = register_pair(w2, t1, cfg)?;
    align_with_homography(w2, t1, t2, &h, cfg, matches, inliers)
}

/// Scale alignment with a known GT-to-wide homography.
pub fn align_with_homography(
    w2: &Raster,
    t1: &Raster,
    t2: &Raster,
    h: &Homography,
    cfg: &ScaleAlignConfig,
    matches: usize,
    inliers: usize,
) -> Result<ScaleAlignResult> {
    let (ww, wh) = (w2.width(), w2.height());
    let (tw, th) = (t1.width(), t1.height());
    let h_inv = h.inverse()?;
    let too_small = |width: usize, height: usize| Error::OverlapTooSmall {
        width,
        height,
        min: cfg.min_overlap,
    };
    let overlap = interior_rect(h, tw, th, ww, wh).ok_or_else(|| too_small(0, 0))?;
    let gt_rect = interior_rect(&h_inv, ww, wh, tw, th).ok_or_else(|| too_small(0, 0))?;
    let (transform, out, gt_cal) = match cfg.gt_frame {
        GtFrame::Tele => {
            let m = *h * Homography::translation(gt_rect.x as f64, gt_rect.y as f64);
            (m, gt_rect, crop(t1, gt_rect)?)
        }
        GtFrame::Wide => {
            let m = Homography::translation(overlap.x as f64, overlap.y as f64);
            let to_gt = h_inv * m;
            let (gt, _) = warp_with_map(t1, &to_gt, overlap.width, overlap.height);
            (m, overlap, gt)
        }
    };
    if out.width < cfg.min_overlap || out.height < cfg.min_overlap {
        return Err(too_small(out.width, out.height));
    }
    let (w_cal, coverage) = warp_with_map(w2, &transform, out.width, out.height);
    let (t_cal, _) = warp_with_map(t2, &transform, out.width, out.height);
    Ok(ScaleAlignResult {
        w_cal,
        gt_cal,
        t_cal,
        h_overlap: *h,
        w_transform: transform,
        t_transform: transform,
        overlap,
        gt_rect,
        coverage,
        matches,
        inliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_rect_is_full_frame() {
        let r = interior_rect(&Homography::IDENTITY, 40, 30, 40, 30).unwrap();
        assert_eq!(r, CropRect { x: 0, y: 0, width: 40, height: 30 });
    }

    #[test]
    fn scaled_rect() {
        // 100x80 tele frame shown at half size, offset by (10, 20) in the wide frame
        let h = Homography::translation(10.0, 20.0) * Homography::scaling(0.5, 0.5);
        let h = Homography::translation(-0.25, -0.25) * h;
        let r = interior_rect(&h, 100, 80, 200, 200).unwrap();
        assert_eq!(r, CropRect { x: 10, y: 20, width: 50, height: 40 });
    }

    #[test]
    fn rect_clipped_to_destination() {
        let r = interior_rect(&Homography::translation(-5.0, 3.0), 20, 20, 20, 20).unwrap();
        assert_eq!(r, CropRect { x: 0, y: 3, width: 15, height: 17 });
        assert!(interior_rect(&Homography::translation(50.0, 0.0), 20, 20, 20, 20).is_none());
    }

    #[test]
    fn featureless_input_fails() {
        let w = Raster::filled_u8(64, 64, 3, 128).unwrap();
        let err = scale_align(&w, &w, &w, &ScaleAlignConfig::default()).unwrap_err();
        assert!(matches!(err, Error::AlignmentFailed { matches: 0, .. }));
    }

    #[test]
    fn known_homography_tele_frame() {
        let w = Raster::from_fn_u8(64, 48, 3, |c, x, y| ((x * 7 + y * 3 + c * 40) % 256) as u8).unwrap();
        let h = Homography::translation(8.0, 6.0);
        let t1 = Raster::from_fn_u8(32, 24, 3, |c, x, y| w.get(c, x + 8, y + 6) as u8).unwrap();
        let cfg = ScaleAlignConfig { min_overlap: 8, ..Default::default() };
        let r = align_with_homography(&w, &t1, &w, &h, &cfg, 0, 0).unwrap();
        assert_eq!(r.overlap, CropRect { x: 8, y: 6, width: 32, height: 24 });
        assert_eq!(r.w_cal, t1);
        assert_eq!(r.gt_cal, t1);
        assert_eq!(r.w_transform, r.t_transform);
        assert_eq!(r.coverage.valid_count(), 32 * 24);
    }

    #[test]
    fn known_homography_wide_frame() {
        let w = Raster::from_fn_u8(64, 48, 3, |c, x, y| ((x * 7 + y * 3 + c * 40) % 256) as u8).unwrap();
        let h = Homography::translation(8.0, 6.0);
        let t1 = Raster::from_fn_u8(32, 24, 3, |c, x, y| w.get(c, x + 8, y + 6) as u8).unwrap();
        let cfg = ScaleAlignConfig { min_overlap: 8, gt_frame: GtFrame::Wide, ..Default::default() };
        let r = align_with_homography(&w, &t1, &w, &h, &cfg, 0, 0).unwrap();
        assert_eq!(r.gt_cal, t1);
        assert_eq!(r.w_cal, t1);
    }

    #[test]
    fn overlap_minimum_enforced() {
        let w = Raster::filled_u8(64, 48, 3, 9).unwrap();
        let t1 = Raster::filled_u8(16, 16, 3, 9).unwrap();
        let err = align_with_homography(&w, &t1, &w, &Homography::IDENTITY, &ScaleAlignConfig::default(), 0, 0)
            .unwrap_err();
        assert!(matches!(err, Error::OverlapTooSmall { .. }));
    }
}
