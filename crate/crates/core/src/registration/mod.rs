//! Features, matching, projective geometry and scale alignment.

mod homography;
mod linalg;
mod matching;
mod scale_align;
mod sift;
mod warp;

pub use homography::{
    dlt, estimate_homography, symmetric_transfer_error2, Correspondence, EstimationMethod, Homography,
    HomographyEstimate, RansacParams,
};
pub use matching::{match_descriptors, Match};
pub use scale_align::{
    align_with_homography, interior_rect, register_pair, scale_align, GtFrame, ScaleAlignAudit,
    ScaleAlignConfig, ScaleAlignResult,
};
pub use sift::{detect_and_describe, Descriptor, Feature, Keypoint, SiftParams, DESCRIPTOR_LEN};
pub use warp::{warp_projective, warp_with_map};
