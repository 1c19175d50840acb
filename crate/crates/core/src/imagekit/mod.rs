//! Raster buffers and the resampling / filtering primitives shared by every
//! other module. All border handling is clamp-to-edge.

mod crop;
mod filter;
mod kernel;
mod raster;
mod resample;
mod stats;

pub use crop::{center_crop, crop, CropRect};
pub use filter::{
    blur_plane, gaussian_blur, gaussian_blur_f32, sobel_magnitude, sobel_plane,
};
pub use kernel::{gaussian_kernel_1d, Kernel2D};
pub use raster::{quantize_u8, ColorSpace, Depth, Raster, Samples, LUMA_WEIGHTS};
pub use resample::{
    catmull_rom_weights, resample_bicubic, resample_plane_bicubic, sample_bicubic,
};
pub use stats::percentile;
