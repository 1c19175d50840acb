//! JSON Lines manifest: one entry per line, later lines for the same id
//! replace earlier ones.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dualcam_core::Homography;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Acquired,
    Calibrated,
    Annotated,
    Accepted,
    Rejected,
}

impl Stage {
    /// Position along ACQUIRED -> CALIBRATED -> ANNOTATED -> verdict.
    pub fn rank(self) -> u8 {
        match self {
            Stage::Acquired => 0,
            Stage::Calibrated => 1,
            Stage::Annotated => 2,
            Stage::Accepted | Stage::Rejected => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Acquired => "ACQUIRED",
            Stage::Calibrated => "CALIBRATED",
            Stage::Annotated => "ANNOTATED",
            Stage::Accepted => "ACCEPTED",
            Stage::Rejected => "REJECTED",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s.to_ascii_uppercase().as_str() {
            "ACQUIRED" => Some(Stage::Acquired),
            "CALIBRATED" => Some(Stage::Calibrated),
            "ANNOTATED" => Some(Stage::Annotated),
            "ACCEPTED" => Some(Stage::Accepted),
            "REJECTED" => Some(Stage::Rejected),
            _ => None,
        }
    }

    /// Staying put is allowed; moving backwards or between the two
    /// verdicts is not.
    pub fn can_move_to(self, next: Stage) -> bool {
        if self == next {
            return true;
        }
        next.rank() > self.rank()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Misaligned,
    Blur,
    Shaking,
    Motion,
    Defocus,
    Other,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::Misaligned => "misaligned",
            Reason::Blur => "blur",
            Reason::Shaking => "shaking",
            Reason::Motion => "motion",
            Reason::Defocus => "defocus",
            Reason::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Reject,
}

/// Paths are stored relative to the dataset root when they live under it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryPaths {
    pub wide: String,
    pub tele: String,
    pub gt_raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wide_cal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tele_cal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_cal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    pub matches: usize,
    pub inliers: usize,
    /// PSNR of the raw pair resampled to a common grid.
    pub psnr_uncalibrated: f64,
    pub psnr_calibrated: f64,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<Reason>,
    pub author: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub created: u64,
    pub updated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub schema: u32,
    pub id: String,
    pub paths: EntryPaths,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict_reason: Option<Reason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<VerdictRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homography: Option<Homography>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationInfo>,
    /// Last pipeline failure for this entry, cleared on success.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Annotation revision; 0 until the first save.
    #[serde(default)]
    pub revision: u64,
    pub timestamps: Timestamps,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("entry {id}: cannot move from {from} to {to}")]
    StageOrder { id: String, from: &'static str, to: &'static str },
    #[error("unknown entry {0}")]
    UnknownEntry(String),
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ManifestEntry {
    pub fn new(id: String, paths: EntryPaths) -> Self {
        let t = now_unix();
        Self {
            schema: SCHEMA_VERSION,
            id,
            paths,
            stage: Stage::Acquired,
            verdict_reason: None,
            verdict: None,
            split: None,
            homography: None,
            occlusion_score: None,
            calibration: None,
            error: None,
            revision: 0,
            timestamps: Timestamps { created: t, updated: t },
        }
    }

    pub fn advance(&mut self, next: Stage) -> Result<(), ManifestError> {
        if !self.stage.can_move_to(next) {
            return Err(ManifestError::StageOrder {
                id: self.id.clone(),
                from: self.stage.as_str(),
                to: next.as_str(),
            });
        }
        self.stage = next;
        Ok(())
    }

    pub fn has_annotation(&self) -> bool {
        self.paths.annotation.is_some()
    }
}

/// In-memory view of the manifest file plus the dataset root it lives in.
#[derive(Debug)]
pub struct Manifest {
    root: PathBuf,
    entries: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    /// Opens `root/manifest.jsonl`, creating an empty manifest if absent.
    pub fn open(root: &Path) -> Result<Self, ManifestError> {
        let path = root.join(MANIFEST_FILE);
        let mut entries = BTreeMap::new();
        if path.exists() {
            let io = |source| ManifestError::Io {
                path: path.display().to_string(),
                source,
            };
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: ManifestEntry = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    // a torn final line from an interrupted append
                    Err(e) if e.is_eof() => continue,
                    Err(e) => {
                        return Err(ManifestError::Parse {
                            path: path.display().to_string(),
                            line: n + 1,
                            message: e.to_string(),
                        })
                    }
                };
                if entry.schema != SCHEMA_VERSION {
                    return Err(ManifestError::Parse {
                        path: path.display().to_string(),
                        line: n + 1,
                        message: format!("unsupported schema {}", entry.schema),
                    });
                }
                entries.insert(entry.id.clone(), entry);
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            entries,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.get(id)
    }

    /// Entries in id order.
    pub fn entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.values()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    /// Resolves a stored path against the dataset root.
    pub fn resolve(&self, stored: &str) -> PathBuf {
        let p = Path::new(stored);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Stored form of `path`: relative to the root when under it.
    pub fn relativize(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.to_string_lossy().replace('\\', "/")
    }

    /// Appends `entry` to the file and updates the in-memory view. Stage
    /// order is checked against the current record.
    pub fn put(&mut self, mut entry: ManifestEntry) -> Result<(), ManifestError> {
        if let Some(cur) = self.entries.get(&entry.id) {
            if !cur.stage.can_move_to(entry.stage) {
                return Err(ManifestError::StageOrder {
                    id: entry.id.clone(),
                    from: cur.stage.as_str(),
                    to: entry.stage.as_str(),
                });
            }
            entry.timestamps.created = cur.timestamps.created;
        }
        entry.timestamps.updated = now_unix();
        self.append_line(&entry)?;
        self.entries.insert(entry.id.clone(), entry);
        Ok(())
    }

    fn append_line(&self, entry: &ManifestEntry) -> Result<(), ManifestError> {
        let path = self.path();
        let io = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        fs::create_dir_all(&self.root).map_err(io)?;
        let mut line = serde_json::to_string(entry).expect("entries serialize");
        line.push('\n');
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.sync_data().map_err(io)
    }

    /// Rewrites the file with one line per entry, in id order.
    pub fn compact(&self) -> Result<(), ManifestError> {
        let path = self.path();
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let io = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = String::new();
        for e in self.entries.values() {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        fs::write(&tmp, out).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)
    }
}

/// Manifest text with every `timestamps` object removed, for comparisons.
pub fn strip_timestamps(jsonl: &str) -> String {
    jsonl
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).expect("valid manifest line");
            if let Some(o) = v.as_object_mut() {
                o.remove("timestamps");
            }
            v.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> ManifestEntry {
        ManifestEntry::new(
            id.into(),
            EntryPaths {
                wide: "a/wide.png".into(),
                tele: "a/tele.png".into(),
                gt_raw: "a/gt.png".into(),
                ..Default::default()
            },
        )
    }

    #[test]
    fn stage_order() {
        assert!(Stage::Acquired.can_move_to(Stage::Calibrated));
        assert!(Stage::Annotated.can_move_to(Stage::Rejected));
        assert!(!Stage::Accepted.can_move_to(Stage::Rejected));
        assert!(!Stage::Annotated.can_move_to(Stage::Calibrated));
        let mut e = entry("x");
        e.advance(Stage::Annotated).unwrap();
        assert!(e.advance(Stage::Acquired).is_err());
    }

    #[test]
    fn last_writer_wins_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        m.put(entry("b")).unwrap();
        m.put(entry("a")).unwrap();
        let mut b = m.get("b").unwrap().clone();
        b.stage = Stage::Calibrated;
        m.put(b).unwrap();
        let text = fs::read_to_string(m.path()).unwrap();
        assert_eq!(text.lines().count(), 3);
        let reopened = Manifest::open(dir.path()).unwrap();
        assert_eq!(reopened.get("b").unwrap().stage, Stage::Calibrated);
        assert_eq!(reopened.ids(), vec!["a", "b"]);
        reopened.compact().unwrap();
        let text = fs::read_to_string(reopened.path()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().all(|l| l.contains("\"schema\":1")));
    }

    #[test]
    fn backward_put_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        let mut e = entry("a");
        e.stage = Stage::Annotated;
        m.put(e.clone()).unwrap();
        e.stage = Stage::Calibrated;
        assert!(matches!(m.put(e), Err(ManifestError::StageOrder { .. })));
    }

    #[test]
    fn torn_tail_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::open(dir.path()).unwrap();
        m.put(entry("a")).unwrap();
        let mut f = OpenOptions::new().append(true).open(m.path()).unwrap();
        f.write_all(b"{\"schema\":1,\"id\":\"b\",\"pa").unwrap();
        let again = Manifest::open(dir.path()).unwrap();
        assert_eq!(again.len(), 1);
    }

    #[test]
    fn timestamps_stripped() {
        let a = serde_json::to_string(&entry("a")).unwrap();
        let mut e = entry("a");
        e.timestamps.updated += 100;
        let b = serde_json::to_string(&e).unwrap();
        assert_ne!(a, b);
        assert_eq!(strip_timestamps(&a), strip_timestamps(&b));
    }
}
