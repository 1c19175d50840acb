//! Image registration, dense alignment, tone mapping and quality metrics for
//! building wide-angle / telephoto dual-camera fusion datasets.
//!
//! Everything in this crate is a pure function over in-memory rasters. It
//! needs an allocator but no operating system, so file formats, manifests and
//! the review service live in the `dualcam` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod colormap;
pub mod error;
pub mod flowalign;
pub mod fusion;
pub mod imagekit;
pub mod mask;
mod math;
pub mod protocol;
pub mod quality;
pub mod registration;

pub use error::{Error, Result};
pub use imagekit::{ColorSpace, Depth, Kernel2D, Raster};
pub use mask::Mask;
pub use registration::Homography;
