//! Reviewer annotations: problem polygons, their rasterized mask and the
//! keep/reject verdict.

use std::fs;
use std::path::Path;

use dualcam_core::mask::rasterize_even_odd;
use serde::{Deserialize, Serialize};

use crate::codec::save_mask;
use crate::manifest::{Decision, Manifest, ManifestEntry, Reason, Stage, VerdictRecord};
use crate::pipeline::entry_dir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLabel {
    Motion,
    Defocus,
    CalibrationError,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub label: RegionLabel,
    /// Vertices in calibrated-image pixel coordinates, pixel (0,0) covering
    /// `[0,1) x [0,1)`.
    pub points: Vec<[f64; 2]>,
}

/// Body of an annotation submission. `revision` is the entry revision the
/// reviewer started from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    #[serde(default)]
    pub entry_id: String,
    pub revision: u64,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    #[serde(default)]
    pub reason: Option<Reason>,
    #[serde(default)]
    pub author: String,
}

/// One problem found while validating a submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown entry {0}")]
    NotFound(String),
    #[error("entry {id} is {stage}; {needed}")]
    WrongStage {
        id: String,
        stage: &'static str,
        needed: &'static str,
    },
    #[error("stale revision: submitted {submitted}, current {current}")]
    Conflict { submitted: u64, current: u64 },
    #[error("invalid submission ({} issue(s))", .0.len())]
    Invalid(Vec<FieldIssue>),
    #[error("{0}")]
    Storage(String),
}

fn storage(e: impl std::fmt::Display) -> AnnotationError {
    AnnotationError::Storage(e.to_string())
}

/// Checks polygon shape and bounds for a `width x height` image. Every
/// offending vertex gets its own issue.
pub fn validate(set: &AnnotationSet, width: usize, height: usize) -> Vec<FieldIssue> {
    let mut issues = Vec::new();
    for (i, poly) in set.polygons.iter().enumerate() {
        if poly.points.len() < 3 {
            issues.push(FieldIssue {
                field: format!("polygons[{i}].points"),
                message: format!("needs at least 3 points, got {}", poly.points.len()),
            });
        }
        for (j, p) in poly.points.iter().enumerate() {
            let ok = p.iter().all(|v| v.is_finite())
                && (0.0..=width as f64).contains(&p[0])
                && (0.0..=height as f64).contains(&p[1]);
            if !ok {
                issues.push(FieldIssue {
                    field: format!("polygons[{i}].points[{j}]"),
                    message: format!("({}, {}) is outside the {width}x{height} image", p[0], p[1]),
                });
            }
        }
    }
    issues
}

fn calibrated_dims(e: &ManifestEntry) -> Result<(usize, usize), AnnotationError> {
    e.calibration
        .as_ref()
        .map(|c| (c.width, c.height))
        .ok_or_else(|| storage(format!("entry {} has no calibration record", e.id)))
}

/// Stores the polygons and the derived mask, moves the entry to ANNOTATED
/// and bumps its revision. The mask holds the polygons only; an empty list
/// yields an all-valid mask.
pub fn apply_annotation(manifest: &mut Manifest, id: &str, set: &AnnotationSet) -> Result<ManifestEntry, AnnotationError> {
    let entry = manifest.get(id).ok_or_else(|| AnnotationError::NotFound(id.to_string()))?;
    if !matches!(entry.stage, Stage::Calibrated | Stage::Annotated) {
        return Err(AnnotationError::WrongStage {
            id: id.to_string(),
            stage: entry.stage.as_str(),
            needed: "annotation needs CALIBRATED or ANNOTATED",
        });
    }
    if set.revision != entry.revision {
        return Err(AnnotationError::Conflict {
            submitted: set.revision,
            current: entry.revision,
        });
    }
    if !set.entry_id.is_empty() && set.entry_id != id {
        return Err(AnnotationError::Invalid(vec![FieldIssue {
            field: "entry_id".into(),
            message: format!("does not match {id}"),
        }]));
    }
    let (w, h) = calibrated_dims(entry)?;
    let issues = validate(set, w, h);
    if !issues.is_empty() {
        return Err(AnnotationError::Invalid(issues));
    }

    let polys: Vec<Vec<[f64; 2]>> = set.polygons.iter().map(|p| p.points.clone()).collect();
    let mask = rasterize_even_odd(w, h, &polys);
    let dir = entry_dir(manifest.root(), id);
    save_mask(&mask, &dir.join("mask.png")).map_err(storage)?;
    let mut stored = set.clone();
    stored.entry_id = id.to_string();
    stored.revision = entry.revision + 1;
    write_json(&dir.join("annotation.json"), &stored)?;

    let mut e = entry.clone();
    e.advance(Stage::Annotated).map_err(storage)?;
    e.paths.mask = Some(manifest.relativize(&dir.join("mask.png")));
    e.paths.annotation = Some(manifest.relativize(&dir.join("annotation.json")));
    e.revision += 1;
    manifest.put(e.clone()).map_err(storage)?;
    Ok(e)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnnotationError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(storage)?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(storage)?;
    fs::rename(&tmp, path).map_err(storage)
}

pub fn load_annotation(manifest: &Manifest, e: &ManifestEntry) -> Result<Option<AnnotationSet>, AnnotationError> {
    let Some(p) = &e.paths.annotation else { return Ok(None) };
    let bytes = fs::read(manifest.resolve(p)).map_err(storage)?;
    serde_json::from_slice(&bytes).map(Some).map_err(storage)
}

/// Records a verdict on an ANNOTATED entry. Rejections need a reason.
pub fn apply_verdict(manifest: &mut Manifest, id: &str, verdict: &Verdict) -> Result<ManifestEntry, AnnotationError> {
    let entry = manifest.get(id).ok_or_else(|| AnnotationError::NotFound(id.to_string()))?;
    if entry.stage != Stage::Annotated {
        return Err(AnnotationError::WrongStage {
            id: id.to_string(),
            stage: entry.stage.as_str(),
            needed: "a verdict needs ANNOTATED",
        });
    }
    let next = match (verdict.decision, verdict.reason) {
        (Decision::Reject, None) => {
            return Err(AnnotationError::Invalid(vec![FieldIssue {
                field: "reason".into(),
                message: "a rejection needs a reason".into(),
            }]))
        }
        (Decision::Reject, Some(_)) => Stage::Rejected,
        (Decision::Keep, _) => Stage::Accepted,
    };
    let mut e = entry.clone();
    e.advance(next).map_err(storage)?;
    e.verdict_reason = if next == Stage::Rejected { verdict.reason } else { None };
    e.verdict = Some(VerdictRecord {
        decision: verdict.decision,
        reason: e.verdict_reason,
        author: verdict.author.clone(),
    });
    e.revision += 1;
    manifest.put(e.clone()).map_err(storage)?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(polys: Vec<Vec<[f64; 2]>>) -> AnnotationSet {
        AnnotationSet {
            entry_id: String::new(),
            revision: 0,
            author: "r".into(),
            polygons: polys
                .into_iter()
                .map(|points| Polygon {
                    label: RegionLabel::Motion,
                    points,
                })
                .collect(),
        }
    }

    #[test]
    fn validation_lists_each_bad_point() {
        let s = set(vec![
            vec![[0.0, 0.0], [1.0, 1.0]],
            vec![[0.0, 0.0], [20.0, 1.0], [1.0, -2.0], [f64::NAN, 0.0]],
        ]);
        let issues = validate(&s, 10, 10);
        let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(
            fields,
            ["polygons[0].points", "polygons[1].points[1]", "polygons[1].points[2]", "polygons[1].points[3]"]
        );
        assert!(validate(&set(vec![vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]]), 10, 10).is_empty());
    }

    #[test]
    fn label_names() {
        let json = serde_json::to_string(&RegionLabel::CalibrationError).unwrap();
        assert_eq!(json, "\"calibration_error\"");
    }
}
