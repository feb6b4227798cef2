//! Pose-log ingestion.
//!
//! Pose files are either CSV (`log_id,frame_id,t,x,y,yaw,area_id`, header
//! optional) or JSON lines with the same field names. Coordinates are planar
//! meters in a shared global frame; no geodetic conversion happens here.
//! Yaw is counterclockwise radians with 0 along global +x and is normalized
//! to `[-π, π)` on load.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CSV_COLUMNS: [&str; 7] = ["log_id", "frame_id", "t", "x", "y", "yaw", "area_id"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed field `{field}`: {reason}")]
    MalformedRecord {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate frame ({log_id}, {frame_id})")]
    DuplicateFrame { log_id: String, frame_id: u64 },
    #[error("log id {0} appears in more than one traversal")]
    DuplicateLog(String),
    #[error("line {line}: non-finite value in field `{field}`")]
    NonFiniteValue { line: usize, field: &'static str },
    #[error("log {log_id}: timestamp {t} appears more than once")]
    DuplicateTimestamp { log_id: String, t: f64 },
    #[error("log {log_id}: records disagree on area ({first} vs {second})")]
    AreaMismatch {
        log_id: String,
        first: String,
        second: String,
    },
    #[error("pose file contains no records")]
    EmptyFile,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseFormat {
    Csv,
    Jsonl,
}

impl PoseFormat {
    /// `.jsonl` / `.ndjson` select JSON lines, everything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => PoseFormat::Jsonl,
            _ => PoseFormat::Csv,
        }
    }
}

/// Identity of a pose within a dataset. Ordered by log id, then frame id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PoseKey {
    pub log_id: String,
    pub frame_id: u64,
}

impl PoseKey {
    pub fn new(log_id: impl Into<String>, frame_id: u64) -> Self {
        Self {
            log_id: log_id.into(),
            frame_id,
        }
    }

    /// Parses the `log_id:frame_id` token used by the pair file.
    pub fn parse_token(token: &str) -> Option<Self> {
        let (log, frame) = token.rsplit_once(':')?;
        if log.is_empty() {
            return None;
        }
        Some(Self::new(log, frame.parse().ok()?))
    }
}

impl fmt::Display for PoseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.log_id, self.frame_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub log_id: String,
    pub frame_id: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn new(log_id: impl Into<String>, frame_id: u64, t: f64, x: f64, y: f64, yaw: f64) -> Self {
        Self {
            log_id: log_id.into(),
            frame_id,
            t,
            x,
            y,
            yaw: normalize_yaw(yaw),
        }
    }

    pub fn key(&self) -> PoseKey {
        PoseKey::new(self.log_id.clone(), self.frame_id)
    }
}

/// Maps an angle to `[-π, π)`. Values already in range are returned unchanged
/// so that re-normalizing a stored yaw is the identity.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if (-PI..PI).contains(&yaw) {
        return yaw;
    }
    let wrapped = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traversal {
    pub log_id: String,
    pub area_id: String,
    /// Strictly ascending in `t`.
    pub poses: Vec<Pose>,
}

impl Traversal {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Traversals ordered by log id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub traversals: Vec<Traversal>,
    pub total_poses: usize,
}

impl Dataset {
    /// Builds a dataset from loose traversals, enforcing the same invariants
    /// as the parsers: unique log ids, unique frames, ascending timestamps.
    pub fn from_traversals(mut traversals: Vec<Traversal>) -> Result<Self, IngestError> {
        let mut seen = HashSet::new();
        for trav in &mut traversals {
            if !seen.insert(trav.log_id.clone()) {
                return Err(IngestError::DuplicateLog(trav.log_id.clone()));
            }
            finish_traversal(trav)?;
        }
        traversals.retain(|t| !t.poses.is_empty());
        traversals.sort_by(|a, b| a.log_id.cmp(&b.log_id));
        let total_poses = traversals.iter().map(Traversal::len).sum();
        Ok(Self {
            traversals,
            total_poses,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.traversals.is_empty()
    }

    pub fn traversal(&self, log_id: &str) -> Option<&Traversal> {
        self.traversals
            .binary_search_by(|t| t.log_id.as_str().cmp(log_id))
            .ok()
            .map(|i| &self.traversals[i])
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose> {
        self.traversals.iter().flat_map(|t| t.poses.iter())
    }

    /// Pose counts per log id.
    pub fn pose_counts(&self) -> BTreeMap<String, usize> {
        self.traversals
            .iter()
            .map(|t| (t.log_id.clone(), t.len()))
            .collect()
    }

    /// Finds a pose by key.
    pub fn pose(&self, key: &PoseKey) -> Option<&Pose> {
        let trav = self.traversal(&key.log_id)?;
        trav.poses.iter().find(|p| p.frame_id == key.frame_id)
    }

    /// Canonical CSV (with header) used for persistence and hashing.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&CSV_COLUMNS.join(","));
        out.push('\n');
        for trav in &self.traversals {
            for p in &trav.poses {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    p.log_id, p.frame_id, p.t, p.x, p.y, p.yaw, trav.area_id
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(self.to_csv_string().as_bytes())
    }

    /// SHA-256 of the canonical CSV form.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

#[derive(Debug, Deserialize)]
struct JsonRecord {
    log_id: String,
    frame_id: u64,
    t: f64,
    x: f64,
    y: f64,
    yaw: f64,
    area_id: String,
}

struct RawRecord {
    line: usize,
    area_id: String,
    pose: Pose,
}

pub fn parse_pose_file(path: &Path, format: PoseFormat) -> Result<Dataset, IngestError> {
    let text = fs::read_to_string(path)?;
    parse_pose_str(&text, format)
}

pub fn parse_pose_str(text: &str, format: PoseFormat) -> Result<Dataset, IngestError> {
    let records = match format {
        PoseFormat::Csv => parse_csv_records(text)?,
        PoseFormat::Jsonl => parse_jsonl_records(text)?,
    };
    if records.is_empty() {
        return Err(IngestError::EmptyFile);
    }
    group_records(records)
}

fn parse_csv_records(text: &str) -> Result<Vec<RawRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::MalformedRecord {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            field: "record",
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if idx == 0 && rec.get(0) == Some("log_id") {
            continue;
        }
        if rec.len() != CSV_COLUMNS.len() {
            return Err(IngestError::MalformedRecord {
                line,
                field: "record",
                reason: format!("expected {} fields, found {}", CSV_COLUMNS.len(), rec.len()),
            });
        }
        let log_id = parse_id(&rec[0], line, "log_id")?;
        let frame_id = rec[1]
            .parse::<u64>()
            .map_err(|e| IngestError::MalformedRecord {
                line,
                field: "frame_id",
                reason: e.to_string(),
            })?;
        let t = parse_float(&rec[2], line, "t")?;
        let x = parse_float(&rec[3], line, "x")?;
        let y = parse_float(&rec[4], line, "y")?;
        let yaw = parse_float(&rec[5], line, "yaw")?;
        let area_id = parse_id(&rec[6], line, "area_id")?;
        out.push(RawRecord {
            line,
            area_id,
            pose: Pose::new(log_id, frame_id, t, x, y, yaw),
        });
    }
    Ok(out)
}

fn parse_jsonl_records(text: &str) -> Result<Vec<RawRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: JsonRecord =
            serde_json::from_str(trimmed).map_err(|e| IngestError::MalformedRecord {
                line,
                field: "record",
                reason: e.to_string(),
            })?;
        let log_id = parse_id(&rec.log_id, line, "log_id")?;
        let area_id = parse_id(&rec.area_id, line, "area_id")?;
        for (field, v) in [("t", rec.t), ("x", rec.x), ("y", rec.y), ("yaw", rec.yaw)] {
            if !v.is_finite() {
                return Err(IngestError::NonFiniteValue { line, field });
            }
        }
        out.push(RawRecord {
            line,
            area_id,
            pose: Pose::new(log_id, rec.frame_id, rec.t, rec.x, rec.y, rec.yaw),
        });
    }
    Ok(out)
}

// Ids become tokens in the line-oriented artifact files, so they may not
// contain separators.
fn parse_id(s: &str, line: usize, field: &'static str) -> Result<String, IngestError> {
    if s.is_empty() {
        return Err(IngestError::MalformedRecord {
            line,
            field,
            reason: "empty identifier".into(),
        });
    }
    if s.chars().any(|c| c.is_whitespace() || c == ',' || c == ':') {
        return Err(IngestError::MalformedRecord {
            line,
            field,
            reason: format!("identifier `{s}` contains whitespace, ',' or ':'"),
        });
    }
    Ok(s.to_string())
}

fn parse_float(s: &str, line: usize, field: &'static str) -> Result<f64, IngestError> {
    let v = s
        .parse::<f64>()
        .map_err(|e| IngestError::MalformedRecord {
            line,
            field,
            reason: e.to_string(),
        })?;
    if !v.is_finite() {
        return Err(IngestError::NonFiniteValue { line, field });
    }
    Ok(v)
}

fn group_records(records: Vec<RawRecord>) -> Result<Dataset, IngestError> {
    let mut by_log: BTreeMap<String, Traversal> = BTreeMap::new();
    let mut first_line: BTreeMap<String, usize> = BTreeMap::new();
    for rec in records {
        let log_id = rec.pose.log_id.clone();
        first_line.entry(log_id.clone()).or_insert(rec.line);
        let trav = by_log.entry(log_id.clone()).or_insert_with(|| Traversal {
            log_id: log_id.clone(),
            area_id: rec.area_id.clone(),
            poses: Vec::new(),
        });
        if trav.area_id != rec.area_id {
            return Err(IngestError::AreaMismatch {
                log_id,
                first: trav.area_id.clone(),
                second: rec.area_id,
            });
        }
        trav.poses.push(rec.pose);
    }
    let mut traversals = Vec::with_capacity(by_log.len());
    for (_, mut trav) in by_log {
        finish_traversal(&mut trav)?;
        traversals.push(trav);
    }
    let total_poses = traversals.iter().map(Traversal::len).sum();
    Ok(Dataset {
        traversals,
        total_poses,
    })
}

fn finish_traversal(trav: &mut Traversal) -> Result<(), IngestError> {
    let mut frames = HashSet::with_capacity(trav.poses.len());
    for p in &trav.poses {
        if !frames.insert(p.frame_id) {
            return Err(IngestError::DuplicateFrame {
                log_id: trav.log_id.clone(),
                frame_id: p.frame_id,
            });
        }
    }
    trav.poses
        .sort_by(|a, b| a.t.total_cmp(&b.t).then(a.frame_id.cmp(&b.frame_id)));
    if let Some(w) = trav.poses.windows(2).find(|w| w[0].t == w[1].t) {
        return Err(IngestError::DuplicateTimestamp {
            log_id: trav.log_id.clone(),
            t: w[0].t,
        });
    }
    Ok(())
}

/// Splits a dataset by area id. Traversal order inside each partition
/// follows the input order.
pub fn partition_by_area(d: &Dataset) -> BTreeMap<String, Dataset> {
    let mut out: BTreeMap<String, Dataset> = BTreeMap::new();
    for trav in &d.traversals {
        let part = out.entry(trav.area_id.clone()).or_default();
        part.total_poses += trav.len();
        part.traversals.push(trav.clone());
    }
    out
}
