//! Ingest, calibration, evaluation, statistics and split over a dataset root.
//!
//! Layout under the root:
//! `manifest.jsonl`, and `calibrated/<id>/` holding `wide_cal.png`,
//! `tele_cal.png`, `gt_cal.png`, `coverage.png`, `calibration.json` and, once
//! reviewed, `mask.png` and `annotation.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dualcam_core::colormap::{apply_lut, build_intensity_lut, Lut3D};
use dualcam_core::flowalign::{compute_flow, warp_with_flow};
use dualcam_core::imagekit::{center_crop, resample_bicubic};
use dualcam_core::protocol::{occlusion_score, prepare_output, Protocol};
use dualcam_core::quality::{metrics_report, psnr, MetricsReport};
use dualcam_core::registration::scale_align;
use dualcam_core::{Mask, Raster};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{load_mask, load_png, save_mask, save_png};
use crate::config::{FlowTarget, LutMode, PipelineConfig};
use crate::manifest::{EntryPaths, Manifest, ManifestEntry, Split, Stage};

pub const CALIBRATED_DIR: &str = "calibrated";
pub const RAW_NAMES: [&str; 3] = ["wide.png", "tele.png", "gt.png"];

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error(transparent)]
    Core(#[from] dualcam_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// First 16 hex digits of SHA-256 over the three raw files, each prefixed
/// with its byte length.
pub fn entry_id(files: &[Vec<u8>; 3]) -> String {
    let mut h = Sha256::new();
    for f in files {
        h.update((f.len() as u64).to_le_bytes());
        h.update(f);
    }
    let digest = h.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub added: Vec<String>,
    pub existing: Vec<String>,
    /// `(capture directory, problem)` for captures that were skipped.
    pub skipped: Vec<(String, String)>,
}

impl IngestReport {
    pub fn warnings(&self) -> usize {
        self.skipped.len() + usize::from(self.added.is_empty() && self.existing.is_empty())
    }
}

/// Adds every `session_dir/<capture>/{wide,tele,gt}.png` triple as an
/// ACQUIRED entry. Captures are visited in name order; known ids are left
/// untouched.
pub fn ingest(manifest: &mut Manifest, session_dir: &Path) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut dirs: Vec<PathBuf> = fs::read_dir(session_dir)
        .map_err(io_err(session_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let label = dir.display().to_string();
        let missing: Vec<&str> = RAW_NAMES.iter().copied().filter(|n| !dir.join(n).is_file()).collect();
        if !missing.is_empty() {
            tracing::warn!("{label}: missing {}", missing.join(", "));
            report.skipped.push((label, format!("missing {}", missing.join(", "))));
            continue;
        }
        let mut files: [Vec<u8>; 3] = Default::default();
        for (slot, name) in files.iter_mut().zip(RAW_NAMES) {
            let p = dir.join(name);
            *slot = fs::read(&p).map_err(io_err(&p))?;
        }
        let id = entry_id(&files);
        if manifest.get(&id).is_some() {
            report.existing.push(id);
            continue;
        }
        let paths = EntryPaths {
            wide: manifest.relativize(&dir.join(RAW_NAMES[0])),
            tele: manifest.relativize(&dir.join(RAW_NAMES[1])),
            gt_raw: manifest.relativize(&dir.join(RAW_NAMES[2])),
            ..Default::default()
        };
        manifest.put(ManifestEntry::new(id.clone(), paths))?;
        report.added.push(id);
    }
    if report.added.is_empty() && report.existing.is_empty() {
        tracing::warn!("{}: nothing to ingest", session_dir.display());
    }
    Ok(report)
}

/// Directory holding an entry's derived files.
pub fn entry_dir(root: &Path, id: &str) -> PathBuf {
    root.join(CALIBRATED_DIR).join(id)
}

/// In-memory result of calibrating one triple.
#[derive(Debug, Clone)]
pub struct CalibratedTriple {
    pub wide_cal: Raster,
    pub tele_cal: Raster,
    pub gt_cal: Raster,
    pub coverage: Mask,
    pub audit: CalibrationAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAudit {
    pub scale: dualcam_core::registration::ScaleAlignAudit,
    pub lut: dualcam_core::colormap::ColorLUT,
    pub flow_valid_fraction: Option<f64>,
    pub crop: Option<dualcam_core::imagekit::CropRect>,
    pub notes: Vec<String>,
    pub psnr_uncalibrated: f64,
    pub psnr_calibrated: f64,
    pub occlusion_score: f64,
}

/// PSNR between the raw wide and GT images after bringing the wide image to
/// the GT size; the reference point calibration has to beat.
pub fn uncalibrated_psnr(wide: &Raster, gt: &Raster) -> Result<f64> {
    let w = if (wide.width(), wide.height()) == (gt.width(), gt.height()) {
        wide.clone()
    } else {
        resample_bicubic(wide, gt.width(), gt.height())
    };
    Ok(psnr(&w, gt, None)?)
}

/// Scale alignment, flow refinement, colour mapping and crop, in that order.
pub fn calibrate_triple(wide: &Raster, tele: &Raster, gt: &Raster, cfg: &PipelineConfig) -> Result<CalibratedTriple> {
    let sa_cfg = cfg.scale_align();
    let sa = scale_align(wide, gt, tele, &sa_cfg)?;
    let mut notes = Vec::new();
    let mut w_cal = sa.w_cal.clone();
    let mut gt_cal = sa.gt_cal.clone();
    let mut roi = sa.coverage.clone();

    let mut flow_valid_fraction = None;
    if cfg.flow_enabled {
        // LK assumes constant brightness, so the flow runs on a provisionally
        // tone-matched GT; the warp itself is applied to the untouched GT.
        let provisional = apply_lut(&gt_cal, &build_intensity_lut(&gt_cal, &w_cal, Some(&roi))?)?;
        let flow = match cfg.flow_target {
            FlowTarget::Gt => compute_flow(&w_cal, &provisional, &cfg.flow())?,
            FlowTarget::Wide => compute_flow(&provisional, &w_cal, &cfg.flow())?,
        };
        flow_valid_fraction = Some(flow.valid_count() as f64 / (flow.width * flow.height) as f64);
        match cfg.flow_target {
            FlowTarget::Gt => gt_cal = warp_with_flow(&gt_cal, &flow)?,
            FlowTarget::Wide => w_cal = warp_with_flow(&w_cal, &flow)?,
        }
    }

    let lut = build_intensity_lut(&gt_cal, &w_cal, Some(&roi))?;
    gt_cal = match cfg.lut_mode {
        LutMode::Channel => apply_lut(&gt_cal, &lut)?,
        LutMode::Joint => Lut3D::build(&gt_cal, &w_cal, cfg.lut_bins, Some(&roi))?.apply(&gt_cal)?,
    };
    let mut tele_cal = sa.t_cal.clone();

    let mut crop = None;
    let (cw, ch) = (cfg.crop_width, cfg.crop_height);
    if w_cal.width() >= cw && w_cal.height() >= ch {
        let x = (w_cal.width() - cw) / 2;
        let y = (w_cal.height() - ch) / 2;
        w_cal = center_crop(&w_cal, cw, ch)?;
        gt_cal = center_crop(&gt_cal, cw, ch)?;
        tele_cal = center_crop(&tele_cal, cw, ch)?;
        let cov = center_crop(&roi.to_raster(), cw, ch)?;
        roi = Mask::from_raster(&cov)?;
        crop = Some(dualcam_core::imagekit::CropRect { x, y, width: cw, height: ch });
    } else {
        notes.push(format!(
            "crop to {cw}x{ch} skipped: calibrated frame is {}x{}",
            w_cal.width(),
            w_cal.height()
        ));
    }

    let psnr_uncalibrated = uncalibrated_psnr(wide, gt)?;
    let psnr_calibrated = psnr(&w_cal, &gt_cal, Some(&roi)).or_else(|_| psnr(&w_cal, &gt_cal, None))?;
    let occ = occlusion_score(&w_cal, &gt_cal)?;
    Ok(CalibratedTriple {
        wide_cal: w_cal,
        tele_cal,
        gt_cal,
        coverage: roi,
        audit: CalibrationAudit {
            scale: sa.audit(sa_cfg.gt_frame),
            lut,
            flow_valid_fraction,
            crop,
            notes,
            psnr_uncalibrated,
            psnr_calibrated,
            occlusion_score: occ,
        },
    })
}

/// Calibrates one ACQUIRED entry and writes its derived files. Returns the
/// updated entry; on failure the entry keeps its stage and records the error.
pub fn calibrate_entry(root: &Path, entry: &ManifestEntry, cfg: &PipelineConfig) -> ManifestEntry {
    let mut out = entry.clone();
    match calibrate_entry_inner(root, entry, cfg) {
        Ok(updated) => updated,
        Err(e) => {
            tracing::warn!("{}: calibration failed: {e}", entry.id);
            out.error = Some(e.to_string());
            out
        }
    }
}

fn resolve(root: &Path, stored: &str) -> PathBuf {
    let p = Path::new(stored);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn calibrate_entry_inner(root: &Path, entry: &ManifestEntry, cfg: &PipelineConfig) -> Result<ManifestEntry> {
    if entry.stage != Stage::Acquired {
        return Err(PipelineError::Invalid(format!(
            "entry {} is {}, calibration needs ACQUIRED",
            entry.id,
            entry.stage.as_str()
        )));
    }
    let wide = load_png(&resolve(root, &entry.paths.wide))?;
    let tele = load_png(&resolve(root, &entry.paths.tele))?;
    let gt = load_png(&resolve(root, &entry.paths.gt_raw))?;
    let cal = calibrate_triple(&wide, &tele, &gt, cfg)?;
    let dir = entry_dir(root, &entry.id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let rel = |name: &str| format!("{CALIBRATED_DIR}/{}/{name}", entry.id);
    save_png(&cal.wide_cal, &dir.join("wide_cal.png"))?;
    save_png(&cal.tele_cal, &dir.join("tele_cal.png"))?;
    save_png(&cal.gt_cal, &dir.join("gt_cal.png"))?;
    save_mask(&cal.coverage, &dir.join("coverage.png"))?;
    let audit_path = dir.join("calibration.json");
    let audit = serde_json::to_vec_pretty(&cal.audit).expect("audit serializes");
    fs::write(&audit_path, audit).map_err(io_err(&audit_path))?;

    let mut out = entry.clone();
    out.paths.wide_cal = Some(rel("wide_cal.png"));
    out.paths.tele_cal = Some(rel("tele_cal.png"));
    out.paths.gt_cal = Some(rel("gt_cal.png"));
    out.homography = Some(cal.audit.scale.homography);
    out.occlusion_score = Some(cal.audit.occlusion_score);
    out.calibration = Some(crate::manifest::CalibrationInfo {
        matches: cal.audit.scale.matches,
        inliers: cal.audit.scale.inliers,
        psnr_uncalibrated: cal.audit.psnr_uncalibrated,
        psnr_calibrated: cal.audit.psnr_calibrated,
        width: cal.wide_cal.width(),
        height: cal.wide_cal.height(),
        notes: cal.audit.notes.clone(),
    });
    out.error = None;
    out.advance(Stage::Calibrated)?;
    Ok(out)
}

#[derive(Debug, Default, Clone, PartialEq, Serialize)]
pub struct CalibrateReport {
    pub calibrated: Vec<String>,
    pub failed: Vec<(String, String)>,
}

/// Calibrates the given ids (all ACQUIRED entries when `ids` is empty) on a
/// worker pool. Results are written back to the manifest in id order from
/// this thread only.
pub fn calibrate(manifest: &mut Manifest, ids: &[String], cfg: &PipelineConfig) -> Result<CalibrateReport> {
    let mut todo: Vec<ManifestEntry> = if ids.is_empty() {
        manifest.entries().filter(|e| e.stage == Stage::Acquired).cloned().collect()
    } else {
        ids.iter()
            .map(|id| {
                manifest
                    .get(id)
                    .cloned()
                    .ok_or_else(|| crate::manifest::ManifestError::UnknownEntry(id.clone()).into())
            })
            .collect::<Result<_>>()?
    };
    todo.sort_by(|a, b| a.id.cmp(&b.id));
    let root = manifest.root().to_path_buf();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let results: Vec<ManifestEntry> = pool.install(|| todo.par_iter().map(|e| calibrate_entry(&root, e, cfg)).collect());
    let mut report = CalibrateReport::default();
    for updated in results {
        if updated.stage == Stage::Calibrated && updated.error.is_none() {
            report.calibrated.push(updated.id.clone());
        } else if let Some(err) = &updated.error {
            report.failed.push((updated.id.clone(), err.clone()));
        }
        manifest.put(updated)?;
    }
    Ok(report)
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// Entries that reached at least the given stage.
    pub acquired: usize,
    pub calibrated: usize,
    pub annotated: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejected_by_reason: BTreeMap<String, usize>,
    pub train: usize,
    pub test: usize,
}

pub fn stage_report(manifest: &Manifest) -> StageReport {
    let mut r = StageReport::default();
    for e in manifest.entries() {
        r.acquired += 1;
        if e.stage.rank() >= Stage::Calibrated.rank() {
            r.calibrated += 1;
        }
        if e.stage.rank() >= Stage::Annotated.rank() {
            r.annotated += 1;
        }
        match e.stage {
            Stage::Accepted => r.accepted += 1,
            Stage::Rejected => {
                r.rejected += 1;
                let reason = e.verdict_reason.map_or("unspecified", |v| v.as_str());
                *r.rejected_by_reason.entry(reason.to_string()).or_default() += 1;
            }
            _ => {}
        }
        if e.stage == Stage::Accepted {
            match e.split {
                Some(Split::Train) => r.train += 1,
                Some(Split::Test) => r.test += 1,
                None => {}
            }
        }
    }
    r
}

/// Seeded shuffle of the ACCEPTED ids; the first `round(n * fraction)` go to
/// training. Pure function of the id set, seed and fraction.
pub fn assign_split(accepted: &[String], seed: u64, train_fraction: f64) -> Vec<(String, Split)> {
    let mut ids = accepted.to_vec();
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n_train = ((ids.len() as f64) * train_fraction).round() as usize;
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| (id, if i < n_train { Split::Train } else { Split::Test }))
        .collect()
}

/// Records a split for every ACCEPTED entry and returns the updated counts.
pub fn stats_and_split(manifest: &mut Manifest, seed: u64, train_fraction: f64) -> Result<StageReport> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(PipelineError::Invalid("train fraction must lie in [0, 1]".into()));
    }
    let accepted: Vec<String> = manifest
        .entries()
        .filter(|e| e.stage == Stage::Accepted)
        .map(|e| e.id.clone())
        .collect();
    let mut changed = Vec::new();
    for (id, split) in assign_split(&accepted, seed, train_fraction) {
        let e = manifest.get(&id).expect("id from manifest");
        if e.split != Some(split) {
            let mut e = e.clone();
            e.split = Some(split);
            changed.push(e);
        }
    }
    for e in changed {
        manifest.put(e)?;
    }
    Ok(stage_report(manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryMetrics {
    pub id: String,
    pub metrics: MetricsReport,
    /// Output size before protocol resampling.
    pub output_dims: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub entries: Vec<EntryMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub diagnostics: Vec<String>,
}

impl MethodRow {
    /// `name  PSNR  SSIM` with four decimals.
    pub fn table_line(&self) -> String {
        format!("{:<24} {:>9.4} {:>7.4}", self.method, self.mean_psnr, self.mean_ssim)
    }
}

fn load_entry_mask(manifest: &Manifest, e: &ManifestEntry) -> Result<Option<Mask>> {
    match &e.paths.mask {
        Some(p) => Ok(Some(load_mask(&manifest.resolve(p))?)),
        None => Ok(None),
    }
}

/// Scores `outputs_dir/<id>.png` against each ACCEPTED entry's GT with the
/// entry's mask applied.
pub fn evaluate(manifest: &Manifest, outputs_dir: &Path, protocol: Protocol) -> Result<MethodRow> {
    let method = outputs_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| outputs_dir.display().to_string());
    let mut entries = Vec::new();
    let mut diagnostics = Vec::new();
    for e in manifest.entries().filter(|e| e.stage == Stage::Accepted) {
        let out_path = outputs_dir.join(format!("{}.png", e.id));
        if !out_path.is_file() {
            diagnostics.push(format!("{}: no output at {}", e.id, out_path.display()));
            continue;
        }
        let Some(gt_path) = &e.paths.gt_cal else {
            diagnostics.push(format!("{}: entry has no calibrated GT", e.id));
            continue;
        };
        let gt = load_png(&manifest.resolve(gt_path))?;
        let output = load_png(&out_path)?;
        let prepared = match prepare_output(protocol, &output, &gt) {
            Ok(p) => p,
            Err(err) => {
                diagnostics.push(format!("{}: {err}", e.id));
                continue;
            }
        };
        let mask = load_entry_mask(manifest, e)?;
        let metrics = match metrics_report(&prepared, &gt, mask.as_ref()) {
            Ok(m) => m,
            Err(err) => {
                diagnostics.push(format!("{}: {err}", e.id));
                continue;
            }
        };
        entries.push(EntryMetrics {
            id: e.id.clone(),
            metrics,
            output_dims: (output.width(), output.height()),
        });
    }
    if entries.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no evaluable entries for {}: {}",
            method,
            diagnostics.join("; ")
        )));
    }
    let n = entries.len() as f64;
    let mean_psnr = entries.iter().map(|e| e.metrics.psnr_db).sum::<f64>() / n;
    let mean_ssim = entries.iter().map(|e| e.metrics.ssim).sum::<f64>() / n;
    Ok(MethodRow {
        method,
        entries,
        mean_psnr,
        mean_ssim,
        diagnostics,
    })
}

/// Writes the theoretical-protocol input (`wide_cal` degraded by `factor`)
/// for every calibrated, non-rejected entry to `out_dir/<id>.png`.
pub fn degrade_entries(manifest: &Manifest, factor: usize, out_dir: &Path) -> Result<Vec<String>> {
    let mut done = Vec::new();
    for e in manifest.entries() {
        if e.stage.rank() < Stage::Calibrated.rank() || e.stage == Stage::Rejected {
            continue;
        }
        let Some(w) = &e.paths.wide_cal else { continue };
        let img = load_png(&manifest.resolve(w))?;
        let d = dualcam_core::protocol::degrade_theoretical(&img, factor)?;
        save_png(&d.output, &out_dir.join(format!("{}.png", e.id)))?;
        done.push(e.id.clone());
    }
    Ok(done)
}

/// Aligns `tele` to `wide`, matches its tones over the covered area and
/// transfers edge-gated detail. Returns the fused image and the confidence.
pub fn fuse_pair(wide: &Raster, tele: &Raster, cfg: &PipelineConfig) -> Result<(Raster, Raster)> {
    use dualcam_core::fusion::{align_reference, detail_transfer, edge_confidence};
    let flow = dualcam_core::flowalign::FlowParams {
        window: cfg.fusion_flow_window,
        ..cfg.flow()
    };
    let (aligned, coverage) = align_reference(wide, tele, &cfg.scale_align(), &flow)?;
    let matched = apply_lut(&aligned, &build_intensity_lut(&aligned, wide, Some(&coverage))?)?;
    let p = cfg.fusion();
    let conf = edge_confidence(wide, p.smooth_sigma, p.gain)?;
    let fused = detail_transfer(wide, &matched, &conf, p.highpass_sigma, Some(&coverage))?;
    Ok((fused, conf.to_raster()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_is_stable_hex() {
        let files = [b"a".to_vec(), b"bc".to_vec(), b"".to_vec()];
        let id = entry_id(&files);
        assert_eq!(id.len(), 16);
        assert!(id.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(id, entry_id(&files));
        // moving a byte between files changes the id
        assert_ne!(id, entry_id(&[b"ab".to_vec(), b"c".to_vec(), b"".to_vec()]));
    }

    #[test]
    fn split_counts_and_determinism() {
        let ids: Vec<String> = (0..250).map(|i| format!("{i:04}")).collect();
        let a = assign_split(&ids, 2024, 0.728);
        let train = a.iter().filter(|x| x.1 == Split::Train).count();
        assert_eq!((train, a.len() - train), (182, 68));
        assert_eq!(a, assign_split(&ids, 2024, 0.728));
        assert_ne!(a, assign_split(&ids, 7, 0.728));
        assert!(assign_split(&[], 1, 0.5).is_empty());
    }
}
