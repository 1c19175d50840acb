//! Flat TOML configuration. Every key is optional; missing keys take the
//! defaults below.

use std::path::Path;

use dualcam_core::flowalign::FlowParams;
use dualcam_core::fusion::FusionParams;
use dualcam_core::registration::{GtFrame, RansacParams, ScaleAlignConfig, SiftParams};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SPLIT_SEED: u64 = 2024;
pub const CONFIG_FILE: &str = "dualcam.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LutMode {
    /// Per-channel 256-level table.
    Channel,
    /// Binned joint-RGB table.
    Joint,
}

/// Which image of the calibrated pair the flow warps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTarget {
    Gt,
    Wide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub crop_width: usize,
    pub crop_height: usize,
    pub gt_frame: GtFrame,

    pub sift_octaves: usize,
    pub sift_levels: usize,
    pub sift_contrast_threshold: f32,
    pub sift_edge_ratio: f32,
    pub sift_max_features: usize,
    pub match_ratio: f32,
    pub min_matches: usize,
    pub min_overlap: usize,

    pub ransac_inlier_px: f64,
    pub ransac_max_iters: usize,
    pub ransac_confidence: f64,
    pub seed: u64,

    pub flow_enabled: bool,
    pub flow_target: FlowTarget,
    pub flow_levels: usize,
    pub flow_window: usize,
    pub flow_iters: usize,
    pub flow_min_eigen: f64,

    pub lut_mode: LutMode,
    pub lut_bins: usize,

    pub split_seed: u64,
    pub train_fraction: f64,

    pub fusion_smooth_sigma: f64,
    pub fusion_gain: f32,
    pub fusion_highpass_sigma: f64,
    /// LK window for the fusion alignment. Wider than the calibration window
    /// because the wide and telephoto inputs differ in sharpness, which biases
    /// small windows.
    pub fusion_flow_window: usize,

    /// Worker threads for calibration; 0 picks the machine's core count.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sift = SiftParams::default();
        let ransac = RansacParams::default();
        let flow = FlowParams::default();
        let fusion = FusionParams::default();
        Self {
            crop_width: 3496,
            crop_height: 2472,
            gt_frame: GtFrame::Tele,
            sift_octaves: sift.octaves,
            sift_levels: sift.levels,
            sift_contrast_threshold: sift.contrast_threshold,
            sift_edge_ratio: sift.edge_ratio,
            sift_max_features: 8000,
            match_ratio: 0.75,
            min_matches: 50,
            min_overlap: 32,
            ransac_inlier_px: ransac.inlier_px,
            ransac_max_iters: ransac.max_iters,
            ransac_confidence: ransac.confidence,
            seed: ransac.seed,
            flow_enabled: true,
            flow_target: FlowTarget::Gt,
            flow_levels: flow.levels,
            flow_window: flow.window,
            flow_iters: flow.iters,
            flow_min_eigen: flow.min_eigen,
            lut_mode: LutMode::Channel,
            lut_bins: 32,
            split_seed: DEFAULT_SPLIT_SEED,
            train_fraction: 0.728,
            fusion_smooth_sigma: fusion.smooth_sigma,
            fusion_gain: fusion.gain,
            fusion_highpass_sigma: fusion.highpass_sigma,
            fusion_flow_window: 61,
            workers: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config key {key}: {message}")]
    Range { key: &'static str, message: String },
}

fn range(key: &'static str, ok: bool, message: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range {
            key,
            message: message.into(),
        })
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Read {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Read { message, .. } => ConfigError::Read {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        range("crop_width", self.crop_width >= 1, "must be at least 1")?;
        range("crop_height", self.crop_height >= 1, "must be at least 1")?;
        range("sift_octaves", (1..=8).contains(&self.sift_octaves), "must be in 1..=8")?;
        range("sift_levels", (1..=8).contains(&self.sift_levels), "must be in 1..=8")?;
        range(
            "sift_contrast_threshold",
            self.sift_contrast_threshold > 0.0 && self.sift_contrast_threshold < 1.0,
            "must be in (0, 1)",
        )?;
        range("sift_edge_ratio", self.sift_edge_ratio > 1.0, "must exceed 1")?;
        range(
            "match_ratio",
            self.match_ratio > 0.0 && self.match_ratio < 1.0,
            "must be in (0, 1)",
        )?;
        range("min_matches", self.min_matches >= 4, "must be at least 4")?;
        range("ransac_inlier_px", self.ransac_inlier_px > 0.0, "must be positive")?;
        range("ransac_max_iters", self.ransac_max_iters >= 1, "must be at least 1")?;
        range(
            "ransac_confidence",
            self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0,
            "must be in (0, 1)",
        )?;
        range("flow_levels", (1..=8).contains(&self.flow_levels), "must be in 1..=8")?;
        range(
            "flow_window",
            self.flow_window >= 5 && self.flow_window % 2 == 1,
            "must be odd and at least 5",
        )?;
        range("flow_iters", self.flow_iters >= 1, "must be at least 1")?;
        range("flow_min_eigen", self.flow_min_eigen >= 0.0, "must be non-negative")?;
        range(
            "lut_bins",
            matches!(self.lut_bins, 1 | 16 | 32 | 64),
            "must be 16, 32 or 64 (1 for a global shift)",
        )?;
        range(
            "train_fraction",
            (0.0..=1.0).contains(&self.train_fraction),
            "must be in [0, 1]",
        )?;
        range("fusion_smooth_sigma", self.fusion_smooth_sigma > 0.0, "must be positive")?;
        range("fusion_gain", self.fusion_gain > 0.0, "must be positive")?;
        range("fusion_highpass_sigma", self.fusion_highpass_sigma > 0.0, "must be positive")?;
        range(
            "fusion_flow_window",
            self.fusion_flow_window >= 5 && self.fusion_flow_window % 2 == 1,
            "must be odd and at least 5",
        )?;
        Ok(())
    }

    pub fn scale_align(&self) -> ScaleAlignConfig {
        ScaleAlignConfig {
            sift: SiftParams {
                octaves: self.sift_octaves,
                levels: self.sift_levels,
                contrast_threshold: self.sift_contrast_threshold,
                edge_ratio: self.sift_edge_ratio,
                max_features: self.sift_max_features,
                ..SiftParams::default()
            },
            ratio: self.match_ratio,
            ransac: RansacParams {
                inlier_px: self.ransac_inlier_px,
                max_iters: self.ransac_max_iters,
                seed: self.seed,
                confidence: self.ransac_confidence,
            },
            min_matches: self.min_matches,
            min_overlap: self.min_overlap,
            gt_frame: self.gt_frame,
        }
    }

    pub fn flow(&self) -> FlowParams {
        FlowParams {
            levels: self.flow_levels,
            window: self.flow_window,
            iters: self.flow_iters,
            min_eigen: self.flow_min_eigen,
        }
    }

    pub fn fusion(&self) -> FusionParams {
        FusionParams {
            smooth_sigma: self.fusion_smooth_sigma,
            gain: self.fusion_gain,
            highpass_sigma: self.fusion_highpass_sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string();
        assert!(text.contains("crop_width = 3496"));
        assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_and_validation() {
        let cfg = PipelineConfig::from_toml_str("crop_width = 512\nlut_mode = \"joint\"\n").unwrap();
        assert_eq!(cfg.crop_width, 512);
        assert_eq!(cfg.lut_mode, LutMode::Joint);
        assert_eq!(cfg.crop_height, 2472);
        assert!(PipelineConfig::from_toml_str("flow_window = 4").is_err());
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        assert!(PipelineConfig::from_toml_str("train_fraction = 1.5").is_err());
    }
}
