//! BEV grids attached to poses and anchor/positive/negative cell sampling.
//!
//! Grid layout: row 0 is the minimum longitudinal coordinate (rear), column 0
//! the minimum lateral coordinate (right side); cell centers sit at
//! half-cell offsets. Vehicle-frame `(lon, lat)` maps to the global frame by
//! rotating with the pose yaw and translating by the pose position.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_contains, convex_intersection, footprint, FootprintConfig, Point};
use crate::ingest::{Pose, PoseKey};
use crate::pose_graph::PoseGraph;
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum CorrespondenceError {
    #[error("cell ({row}, {col}) outside a {rows}x{cols} grid")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("footprints of {reference} and {adjacent} do not overlap")]
    NoOverlap { reference: PoseKey, adjacent: PoseKey },
    #[error("not enough cells: needed {needed} {what}, only {available} available")]
    Exhausted {
        what: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("malformed pair file, line {line}: {reason}")]
    MalformedPairFile { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGridSpec {
    /// Cells along the heading.
    pub rows: usize,
    /// Cells across the heading.
    pub cols: usize,
    pub lon_range: (f64, f64),
    pub lat_range: (f64, f64),
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            rows: 100,
            cols: 50,
            lon_range: (-30.0, 30.0),
            lat_range: (-15.0, 15.0),
        }
    }
}

impl BevGridSpec {
    pub fn validate(&self) -> Result<(), CorrespondenceError> {
        let span_ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.1 > r.0;
        if self.rows == 0 || self.cols == 0 {
            return Err(CorrespondenceError::InvalidSpec("rows and cols must be >= 1".into()));
        }
        if !span_ok(self.lon_range) || !span_ok(self.lat_range) {
            return Err(CorrespondenceError::InvalidSpec("ranges must be finite and non-empty".into()));
        }
        Ok(())
    }

    /// Cell size along the heading.
    pub fn cell_length(&self) -> f64 {
        (self.lon_range.1 - self.lon_range.0) / self.rows as f64
    }

    /// Cell size across the heading.
    pub fn cell_width(&self) -> f64 {
        (self.lat_range.1 - self.lat_range.0) / self.cols as f64
    }

    pub fn cell_diagonal(&self) -> f64 {
        libm::hypot(self.cell_length(), self.cell_width())
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    fn check(&self, row: usize, col: usize) -> Result<(), CorrespondenceError> {
        if row < self.rows && col < self.cols {
            Ok(())
        } else {
            Err(CorrespondenceError::IndexOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            })
        }
    }

    fn lon_center(&self, row: usize) -> f64 {
        self.lon_range.0 + (row as f64 + 0.5) * self.cell_length()
    }

    fn lat_center(&self, col: usize) -> f64 {
        self.lat_range.0 + (col as f64 + 0.5) * self.cell_width()
    }

    /// Vehicle-frame `(lon, lat)` of a cell center.
    pub fn cell_center_local(&self, row: usize, col: usize) -> Result<(f64, f64), CorrespondenceError> {
        self.check(row, col)?;
        Ok((self.lon_center(row), self.lat_center(col)))
    }
}

fn to_global(p: &Pose, lon: f64, lat: f64) -> Point {
    let (s, c) = libm::sincos(p.yaw);
    Point::new(p.x + lon * c - lat * s, p.y + lon * s + lat * c)
}

fn to_local(p: &Pose, q: Point) -> (f64, f64) {
    let (s, c) = libm::sincos(p.yaw);
    let dx = q.x - p.x;
    let dy = q.y - p.y;
    (dx * c + dy * s, -dx * s + dy * c)
}

pub fn cell_center_global(
    p: &Pose,
    spec: &BevGridSpec,
    row: usize,
    col: usize,
) -> Result<Point, CorrespondenceError> {
    let (lon, lat) = spec.cell_center_local(row, col)?;
    Ok(to_global(p, lon, lat))
}

/// Index of the nearest center along one axis; ties go to the lower index.
fn nearest_axis(u: f64, min: f64, size: f64, n: usize) -> usize {
    let f = (u - min) / size - 0.5;
    let lo = f.floor().clamp(0.0, (n - 1) as f64) as usize;
    let hi = (lo + 1).min(n - 1);
    let center = |i: usize| min + (i as f64 + 0.5) * size;
    if (u - center(hi)).abs() < (u - center(lo)).abs() {
        hi
    } else {
        lo
    }
}

/// Cell of `p`'s grid whose global center is nearest `q`. Cell centers form
/// a rectangular lattice, so the search separates per axis.
pub fn nearest_cell(p: &Pose, spec: &BevGridSpec, q: Point) -> (usize, usize) {
    let (lon, lat) = to_local(p, q);
    let row = nearest_axis(lon, spec.lon_range.0, spec.cell_length(), spec.rows);
    let col = nearest_axis(lat, spec.lat_range.0, spec.cell_width(), spec.cols);
    (row, col)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum GridTag {
    Reference,
    Adjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GridCell {
    pub grid: GridTag,
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellRef {
    pub pose: PoseKey,
    pub row: usize,
    pub col: usize,
}

impl CellRef {
    pub fn new(pose: PoseKey, row: usize, col: usize) -> Self {
        Self { pose, row, col }
    }
}

/// Cells of both grids whose centers lie inside the footprint overlap,
/// sorted (reference grid first, row-major).
pub fn overlap_inliers(
    reference: &Pose,
    adjacent: &Pose,
    spec: &BevGridSpec,
    cfg: &FootprintConfig,
) -> Result<Vec<GridCell>, CorrespondenceError> {
    spec.validate()?;
    let origin = Point::new(reference.x, reference.y);
    let local = |r: [Point; 4]| r.map(|p| p - origin);
    let a = local(footprint(reference, cfg).corners);
    let b = local(footprint(adjacent, cfg).corners);
    let overlap = convex_intersection(&a, &b).unwrap_or_default();
    if overlap.is_empty() {
        return Err(CorrespondenceError::NoOverlap {
            reference: reference.key(),
            adjacent: adjacent.key(),
        });
    }
    let mut out = Vec::new();
    for (grid, pose) in [(GridTag::Reference, reference), (GridTag::Adjacent, adjacent)] {
        for row in 0..spec.rows {
            for col in 0..spec.cols {
                let c = to_global(pose, spec.lon_center(row), spec.lat_center(col)) - origin;
                if convex_contains(&overlap, c) {
                    out.push(GridCell { grid, row, col });
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_anchors: usize,
    pub n_negatives: usize,
    /// Anchors whose nearest adjacent cell is farther than this are
    /// dropped. `None` means one cell diagonal of the grid.
    pub max_match_dist: Option<f64>,
    /// Also exclude negatives whose center lies within this radius of any
    /// anchor center. Off by default.
    pub exclusion_radius: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_anchors: 64,
            n_negatives: 256,
            max_match_dist: None,
            exclusion_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairBatch {
    pub reference: PoseKey,
    pub adjacent: PoseKey,
    /// Cells of the reference grid.
    pub anchors: Vec<CellRef>,
    /// Cells of the adjacent grid, index-aligned with `anchors`.
    pub positives: Vec<CellRef>,
    /// Global distance between each anchor and its positive, meters.
    pub distances: Vec<f64>,
    pub negatives: Vec<CellRef>,
    pub seed: u64,
}

pub fn sample_pairs(
    reference: &Pose,
    adjacent: &Pose,
    spec: &BevGridSpec,
    cfg: &FootprintConfig,
    sampling: &SamplingConfig,
    seed: u64,
) -> Result<PairBatch, CorrespondenceError> {
    let inliers: Vec<(usize, usize)> = overlap_inliers(reference, adjacent, spec, cfg)?
        .into_iter()
        .filter(|c| c.grid == GridTag::Reference)
        .map(|c| (c.row, c.col))
        .collect();
    if inliers.len() < sampling.n_anchors {
        return Err(CorrespondenceError::Exhausted {
            what: "anchors",
            needed: sampling.n_anchors,
            available: inliers.len(),
        });
    }
    let max_dist = sampling.max_match_dist.unwrap_or_else(|| spec.cell_diagonal());
    let ref_key = reference.key();
    let adj_key = adjacent.key();
    let mut rng = SeededRng::new(seed);

    let mut anchors = Vec::with_capacity(sampling.n_anchors);
    let mut positives = Vec::with_capacity(sampling.n_anchors);
    let mut distances = Vec::with_capacity(sampling.n_anchors);
    let mut anchor_centers = Vec::with_capacity(sampling.n_anchors);
    let mut pool = inliers;
    let mut usable = pool.len();
    let mut next = 0;
    while anchors.len() < sampling.n_anchors {
        if next == pool.len() {
            return Err(CorrespondenceError::Exhausted {
                what: "anchors within match distance",
                needed: sampling.n_anchors,
                available: usable,
            });
        }
        let j = next + rng.below((pool.len() - next) as u64) as usize;
        pool.swap(next, j);
        let (row, col) = pool[next];
        next += 1;
        let center = to_global(reference, spec.lon_center(row), spec.lat_center(col));
        let (prow, pcol) = nearest_cell(adjacent, spec, center);
        let pcenter = to_global(adjacent, spec.lon_center(prow), spec.lat_center(pcol));
        let dist = center.dist(pcenter);
        if dist > max_dist {
            usable -= 1;
            continue;
        }
        anchors.push(CellRef::new(ref_key.clone(), row, col));
        positives.push(CellRef::new(adj_key.clone(), prow, pcol));
        distances.push(dist);
        anchor_centers.push(center);
    }

    let mut excluded: HashSet<&CellRef> = anchors.iter().chain(positives.iter()).collect();
    let mut candidates = Vec::with_capacity(2 * spec.num_cells());
    for pose in [reference, adjacent] {
        let key = pose.key();
        for row in 0..spec.rows {
            for col in 0..spec.cols {
                let cell = CellRef::new(key.clone(), row, col);
                if excluded.contains(&cell) {
                    continue;
                }
                if let Some(r) = sampling.exclusion_radius {
                    let c = to_global(pose, spec.lon_center(row), spec.lat_center(col));
                    if anchor_centers.iter().any(|a| a.dist(c) <= r) {
                        continue;
                    }
                }
                candidates.push(cell);
            }
        }
        if ref_key == adj_key {
            break;
        }
    }
    excluded.clear();
    if candidates.len() < sampling.n_negatives {
        return Err(CorrespondenceError::Exhausted {
            what: "negatives",
            needed: sampling.n_negatives,
            available: candidates.len(),
        });
    }
    let negatives = rng.sample_without_replacement(&candidates, sampling.n_negatives);

    Ok(PairBatch {
        reference: ref_key,
        adjacent: adj_key,
        anchors,
        positives,
        distances,
        negatives,
        seed,
    })
}

/// One semi-supervised batch: `n` labeled poses plus `m` reference–adjacent
/// pairs, `n + 2m` samples in total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingBatch {
    pub supervised: Vec<PoseKey>,
    pub pairs: Vec<(PoseKey, PoseKey)>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.supervised.len() + 2 * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `n` labeled poses from `labeled` and `m` distinct pose-graph edges
/// as reference–adjacent pairs. The edge's smaller key serves as reference
/// unless the draw flips it.
pub fn assemble_batch(
    labeled: &[PoseKey],
    graph: &PoseGraph,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<TrainingBatch, CorrespondenceError> {
    if labeled.len() < n {
        return Err(CorrespondenceError::Exhausted {
            what: "labeled poses",
            needed: n,
            available: labeled.len(),
        });
    }
    if graph.edges.len() < m {
        return Err(CorrespondenceError::Exhausted {
            what: "reference-adjacent pairs",
            needed: m,
            available: graph.edges.len(),
        });
    }
    let mut rng = SeededRng::new(seed);
    let supervised = rng.sample_without_replacement(labeled, n);
    let edges = rng.sample_without_replacement(&graph.edges, m);
    let pairs = edges
        .iter()
        .map(|e| {
            let (a, b) = graph.edge_keys(e);
            if rng.below(2) == 0 {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            }
        })
        .collect();
    Ok(TrainingBatch { supervised, pairs })
}

/// A batch as stored in a pair file.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub anchors: Vec<CellRef>,
    pub positives: Vec<CellRef>,
    pub distances: Vec<f64>,
    pub negatives: Vec<CellRef>,
}

impl From<&PairBatch> for PairRecord {
    fn from(b: &PairBatch) -> Self {
        Self {
            anchors: b.anchors.clone(),
            positives: b.positives.clone(),
            distances: b.distances.clone(),
            negatives: b.negatives.clone(),
        }
    }
}

/// `PAIR ref_key a_row a_col adj_key p_row p_col dist_m` lines followed by
/// `NEG key row col` lines, one block per batch. Keys are `log_id:frame_id`.
pub fn write_pair_file(batches: &[PairBatch]) -> String {
    let mut out = String::new();
    for (i, b) in batches.iter().enumerate() {
        let _ = writeln!(
            out,
            "# batch {i} reference {} adjacent {} seed {}",
            b.reference, b.adjacent, b.seed
        );
        for ((a, p), d) in b.anchors.iter().zip(&b.positives).zip(&b.distances) {
            let _ = writeln!(
                out,
                "PAIR {} {} {} {} {} {} {}",
                a.pose, a.row, a.col, p.pose, p.row, p.col, d
            );
        }
        for n in &b.negatives {
            let _ = writeln!(out, "NEG {} {} {}", n.pose, n.row, n.col);
        }
    }
    out
}

/// Parses a pair file. A `PAIR` line after `NEG` lines starts a new batch.
pub fn parse_pair_file(text: &str) -> Result<Vec<PairRecord>, CorrespondenceError> {
    let mut out: Vec<PairRecord> = Vec::new();
    let mut in_negatives = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: String| CorrespondenceError::MalformedPairFile {
            line: line_no,
            reason,
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        let key = |s: &str| PoseKey::parse_token(s).ok_or_else(|| bad(format!("bad pose key `{s}`")));
        let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad index `{s}`")));
        match f.as_slice() {
            ["PAIR", rk, ar, ac, pk, pr, pc, d] => {
                if in_negatives || out.is_empty() {
                    out.push(PairRecord {
                        anchors: Vec::new(),
                        positives: Vec::new(),
                        distances: Vec::new(),
                        negatives: Vec::new(),
                    });
                    in_negatives = false;
                }
                let rec = out.last_mut().unwrap();
                rec.anchors.push(CellRef::new(key(rk)?, idx(ar)?, idx(ac)?));
                rec.positives.push(CellRef::new(key(pk)?, idx(pr)?, idx(pc)?));
                rec.distances
                    .push(d.parse().map_err(|_| bad(format!("bad distance `{d}`")))?);
            }
            ["NEG", k, r, c] => {
                let Some(rec) = out.last_mut() else {
                    return Err(bad("NEG before any PAIR".into()));
                };
                rec.negatives.push(CellRef::new(key(k)?, idx(r)?, idx(c)?));
                in_negatives = true;
            }
            _ => return Err(bad(format!("unrecognized line `{line}`"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pose(log: &str, x: f64, y: f64, yaw: f64) -> Pose {
        Pose::new(log, 0, 0.0, x, y, yaw)
    }

    fn small_spec() -> BevGridSpec {
        BevGridSpec {
            rows: 2,
            cols: 2,
            lon_range: (-1.0, 1.0),
            lat_range: (-1.0, 1.0),
        }
    }

    fn close(p: Point, x: f64, y: f64) -> bool {
        (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12
    }

    #[test]
    fn cell_center_identity_pose() {
        let c = cell_center_global(&pose("a", 0.0, 0.0, 0.0), &small_spec(), 0, 0).unwrap();
        assert!(close(c, -0.5, -0.5), "{c:?}");
        let c = cell_center_global(&pose("a", 0.0, 0.0, 0.0), &small_spec(), 1, 0).unwrap();
        assert!(close(c, 0.5, -0.5), "row advances along heading: {c:?}");
    }

    #[test]
    fn cell_center_half_turn() {
        let c = cell_center_global(&pose("a", 0.0, 0.0, PI), &small_spec(), 0, 0).unwrap();
        assert!(close(c, 0.5, 0.5), "{c:?}");
    }

    #[test]
    fn cell_center_translation() {
        let spec = small_spec();
        for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let a = cell_center_global(&pose("a", 0.0, 0.0, 0.0), &spec, r, c).unwrap();
            let b = cell_center_global(&pose("a", 10.0, 0.0, 0.0), &spec, r, c).unwrap();
            assert!(close(b, a.x + 10.0, a.y));
        }
    }

    #[test]
    fn cell_center_out_of_range() {
        assert!(matches!(
            cell_center_global(&pose("a", 0.0, 0.0, 0.0), &small_spec(), 2, 0),
            Err(CorrespondenceError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_spec() {
        let mut s = small_spec();
        s.rows = 0;
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.lat_range = (1.0, 1.0);
        assert!(s.validate().is_err());
    }

    #[test]
    fn identical_poses_all_inliers() {
        let spec = BevGridSpec {
            rows: 10,
            cols: 6,
            lon_range: (-30.0, 30.0),
            lat_range: (-15.0, 15.0),
        };
        let p = pose("a", 3.0, 4.0, 0.7);
        let q = pose("b", 3.0, 4.0, 0.7);
        let inl = overlap_inliers(&p, &q, &spec, &FootprintConfig::default()).unwrap();
        assert_eq!(inl.len(), 2 * spec.num_cells());
    }

    #[test]
    fn disjoint_poses_no_overlap() {
        let r = overlap_inliers(
            &pose("a", 0.0, 0.0, 0.0),
            &pose("b", 500.0, 0.0, 0.0),
            &BevGridSpec::default(),
            &FootprintConfig::default(),
        );
        assert!(matches!(r, Err(CorrespondenceError::NoOverlap { .. })));
    }

    #[test]
    fn nearest_axis_ties_low() {
        // u exactly between centers 0.5 and 1.5.
        assert_eq!(nearest_axis(1.0, 0.0, 1.0, 4), 0);
        assert_eq!(nearest_axis(1.01, 0.0, 1.0, 4), 1);
        assert_eq!(nearest_axis(-5.0, 0.0, 1.0, 4), 0);
        assert_eq!(nearest_axis(50.0, 0.0, 1.0, 4), 3);
    }

    #[test]
    fn identical_poses_zero_distance() {
        let spec = BevGridSpec::default();
        let sampling = SamplingConfig {
            n_anchors: 32,
            n_negatives: 64,
            ..Default::default()
        };
        let p = pose("a", 1.0, 2.0, 0.3);
        let q = pose("b", 1.0, 2.0, 0.3);
        let b = sample_pairs(&p, &q, &spec, &FootprintConfig::default(), &sampling, 9).unwrap();
        assert_eq!(b.anchors.len(), 32);
        for ((a, pos), d) in b.anchors.iter().zip(&b.positives).zip(&b.distances) {
            assert_eq!((a.row, a.col), (pos.row, pos.col));
            assert!(*d < 1e-9);
        }
    }

    #[test]
    fn shift_one_cell_along_heading() {
        let spec = BevGridSpec::default();
        let step = spec.cell_length();
        let p = pose("a", 0.0, 0.0, 0.0);
        let q = pose("b", step, 0.0, 0.0);
        let sampling = SamplingConfig {
            n_anchors: 50,
            n_negatives: 10,
            ..Default::default()
        };
        let b = sample_pairs(&p, &q, &spec, &FootprintConfig::default(), &sampling, 1).unwrap();
        for ((a, pos), d) in b.anchors.iter().zip(&b.positives).zip(&b.distances) {
            assert_eq!(pos.row + 1, a.row);
            assert_eq!(pos.col, a.col);
            assert!(*d < 1e-9);
        }
    }

    #[test]
    fn negatives_exclude_anchors_and_positives() {
        let spec = BevGridSpec {
            rows: 8,
            cols: 4,
            lon_range: (-30.0, 30.0),
            lat_range: (-15.0, 15.0),
        };
        let sampling = SamplingConfig {
            n_anchors: 10,
            n_negatives: 40,
            ..Default::default()
        };
        let p = pose("a", 0.0, 0.0, 0.0);
        let q = pose("b", 10.0, 3.0, 0.2);
        let b = sample_pairs(&p, &q, &spec, &FootprintConfig::default(), &sampling, 4).unwrap();
        let taken: HashSet<&CellRef> = b.anchors.iter().chain(&b.positives).collect();
        assert!(b.negatives.iter().all(|n| !taken.contains(n)));
        let uniq: HashSet<&CellRef> = b.negatives.iter().collect();
        assert_eq!(uniq.len(), b.negatives.len());
    }

    #[test]
    fn exhausted_when_too_many_anchors() {
        let spec = small_spec();
        let sampling = SamplingConfig {
            n_anchors: 5,
            n_negatives: 0,
            ..Default::default()
        };
        let p = pose("a", 0.0, 0.0, 0.0);
        let r = sample_pairs(&p, &pose("b", 0.0, 0.0, 0.0), &spec, &FootprintConfig::new(1.0, 1.0).unwrap(), &sampling, 0);
        assert!(matches!(r, Err(CorrespondenceError::Exhausted { .. })));
    }

    #[test]
    fn exclusion_radius_removes_neighbors() {
        let spec = BevGridSpec {
            rows: 20,
            cols: 10,
            lon_range: (-30.0, 30.0),
            lat_range: (-15.0, 15.0),
        };
        let p = pose("a", 0.0, 0.0, 0.0);
        let q = pose("b", 0.0, 0.0, 0.0);
        let sampling = SamplingConfig {
            n_anchors: 3,
            n_negatives: 50,
            max_match_dist: None,
            exclusion_radius: Some(10.0),
        };
        let b = sample_pairs(&p, &q, &spec, &FootprintConfig::default(), &sampling, 2).unwrap();
        for n in &b.negatives {
            let c = cell_center_global(&p, &spec, n.row, n.col).unwrap();
            for a in &b.anchors {
                let ac = cell_center_global(&p, &spec, a.row, a.col).unwrap();
                assert!(ac.dist(c) > 10.0);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = BevGridSpec::default();
        let p = pose("a", 0.0, 0.0, 0.0);
        let q = pose("b", 12.0, -4.0, 0.4);
        let s = SamplingConfig::default();
        let cfg = FootprintConfig::default();
        assert_eq!(
            sample_pairs(&p, &q, &spec, &cfg, &s, 77).unwrap(),
            sample_pairs(&p, &q, &spec, &cfg, &s, 77).unwrap()
        );
        assert_ne!(
            sample_pairs(&p, &q, &spec, &cfg, &s, 77).unwrap().anchors,
            sample_pairs(&p, &q, &spec, &cfg, &s, 78).unwrap().anchors
        );
    }

    #[test]
    fn pair_file_round_trip() {
        let spec = BevGridSpec::default();
        let cfg = FootprintConfig::default();
        let s = SamplingConfig {
            n_anchors: 4,
            n_negatives: 6,
            ..Default::default()
        };
        let b1 = sample_pairs(&pose("a", 0.0, 0.0, 0.0), &pose("b", 5.0, 1.0, 0.1), &spec, &cfg, &s, 1).unwrap();
        let b2 = sample_pairs(&pose("c", 0.0, 0.0, 0.0), &pose("d", -5.0, 1.0, 0.1), &spec, &cfg, &s, 2).unwrap();
        let text = write_pair_file(&[b1.clone(), b2.clone()]);
        let parsed = parse_pair_file(&text).unwrap();
        assert_eq!(parsed, vec![PairRecord::from(&b1), PairRecord::from(&b2)]);
        assert!(parse_pair_file("NEG a:0 1 1\n").is_err());
        assert!(parse_pair_file("PAIR a:0 1\n").is_err());
    }

    #[test]
    fn batch_has_n_plus_two_m() {
        let graph = PoseGraph {
            vertices: (0..6).map(|i| PoseKey::new(format!("l{i}"), 0)).collect(),
            edges: vec![
                crate::pose_graph::PoseEdge { i: 0, j: 1, iou: 0.5 },
                crate::pose_graph::PoseEdge { i: 2, j: 3, iou: 0.4 },
                crate::pose_graph::PoseEdge { i: 4, j: 5, iou: 0.6 },
            ],
            iou_min: 0.3,
            iou_max: 0.9,
            cross_only: true,
        };
        let labeled: Vec<PoseKey> = (0..10).map(|i| PoseKey::new("s", i)).collect();
        let b = assemble_batch(&labeled, &graph, 4, 2, 3).unwrap();
        assert_eq!(b.len(), 4 + 2 * 2);
        assert_ne!(b.pairs[0], b.pairs[1]);
        assert!(assemble_batch(&labeled, &graph, 4, 4, 3).is_err());
        assert!(assemble_batch(&labeled, &graph, 11, 1, 3).is_err());
    }
}
