//! Dataset tooling around `dualcam-core`: PNG IO, the JSONL manifest, the
//! batch pipeline, annotation handling and the review service.

pub mod codec;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod annotation;
pub mod service;
