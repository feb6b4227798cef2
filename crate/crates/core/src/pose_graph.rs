//! Pose-level spatial graph. Vertices are poses; an edge links two poses
//! whose footprint IoU lies inside `[iou_min, iou_max]`. These edges are the
//! reference–adjacent pairs used for contrastive sampling.

use std::collections::HashMap;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use thiserror::Error;

use crate::geometry::{footprint, footprint_overlap, FootprintConfig};
use crate::ingest::{partition_by_area, Dataset, PoseKey};
use crate::spatial::FootprintIndex;

pub const GRAPH_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 8] = b"GTPGRAPH";
const BINARY_TRAILER: &[u8; 8] = b"GTPGEND\0";

pub const DEFAULT_IOU_MIN: f64 = 0.3;
pub const DEFAULT_IOU_MAX: f64 = 0.9;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid IoU range [{min}, {max}]: need 0 <= min <= max <= 1")]
    InvalidRange { min: f64, max: f64 },
    #[error("pose {0} is not a vertex of the graph")]
    UnknownPose(PoseKey),
    #[error("unsupported graph file version {found} (expected {GRAPH_VERSION})")]
    VersionMismatch { found: String },
    #[error("corrupt graph file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEdge {
    /// Vertex indices, `i < j`.
    pub i: usize,
    pub j: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    /// Sorted by key.
    pub vertices: Vec<PoseKey>,
    /// Sorted by `(i, j)`.
    pub edges: Vec<PoseEdge>,
    pub iou_min: f64,
    pub iou_max: f64,
    pub cross_only: bool,
}

pub fn check_range(iou_min: f64, iou_max: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&iou_min) && (0.0..=1.0).contains(&iou_max) && iou_min <= iou_max {
        Ok(())
    } else {
        Err(GraphError::InvalidRange {
            min: iou_min,
            max: iou_max,
        })
    }
}

/// Only pairs with positive overlap area qualify, so a `[0, 1]` range yields
/// exactly the intersecting pairs.
pub fn build_pose_graph(
    d: &Dataset,
    cfg: &FootprintConfig,
    iou_min: f64,
    iou_max: f64,
    cross_only: bool,
) -> Result<PoseGraph, GraphError> {
    check_range(iou_min, iou_max)?;
    let mut vertices: Vec<PoseKey> = d.poses().map(|p| p.key()).collect();
    vertices.sort();
    let index_of: HashMap<&PoseKey, usize> =
        vertices.iter().enumerate().map(|(i, k)| (k, i)).collect();

    let mut edges = Vec::new();
    for part in partition_by_area(d).values() {
        let poses: Vec<_> = part.poses().collect();
        let rects: Vec<_> = poses.iter().map(|p| footprint(p, cfg)).collect();
        let global: Vec<usize> = rects.iter().map(|r| index_of[&r.source_pose]).collect();
        let index = FootprintIndex::build(&rects);
        let pairs = index.pairs_where(|i, j| !cross_only || poses[i].log_id != poses[j].log_id);
        for (a, b) in pairs {
            let ov = footprint_overlap(&rects[a], &rects[b]);
            if ov.intersection_area > 0.0 && ov.iou >= iou_min && ov.iou <= iou_max {
                let (i, j) = if global[a] < global[b] {
                    (global[a], global[b])
                } else {
                    (global[b], global[a])
                };
                edges.push(PoseEdge { i, j, iou: ov.iou });
            }
        }
    }
    edges.sort_by_key(|e| (e.i, e.j));
    Ok(PoseGraph {
        vertices,
        edges,
        iou_min,
        iou_max,
        cross_only,
    })
}

impl PoseGraph {
    pub fn vertex_index(&self, key: &PoseKey) -> Option<usize> {
        self.vertices.binary_search(key).ok()
    }

    /// Neighbors of `reference`, by descending IoU, then key.
    pub fn adjacents(&self, reference: &PoseKey) -> Result<Vec<(PoseKey, f64)>, GraphError> {
        let r = self
            .vertex_index(reference)
            .ok_or_else(|| GraphError::UnknownPose(reference.clone()))?;
        let mut out: Vec<(PoseKey, f64)> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.i == r {
                    Some((self.vertices[e.j].clone(), e.iou))
                } else if e.j == r {
                    Some((self.vertices[e.i].clone(), e.iou))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    pub fn edge_keys(&self, e: &PoseEdge) -> (&PoseKey, &PoseKey) {
        (&self.vertices[e.i], &self.vertices[e.j])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("POSEGRAPH {GRAPH_VERSION}\n"));
        out.push_str(&format!("IOU_RANGE {} {}\n", self.iou_min, self.iou_max));
        out.push_str(&format!("CROSS_ONLY {}\n", self.cross_only));
        out.push_str(&format!("VERTICES {}\n", self.vertices.len()));
        for v in &self.vertices {
            out.push_str(&format!("VERTEX {} {}\n", v.log_id, v.frame_id));
        }
        out.push_str(&format!("EDGES {}\n", self.edges.len()));
        for e in &self.edges {
            let (a, b) = self.edge_keys(e);
            out.push_str(&format!(
                "EDGE {} {} {} {} {}\n",
                a.log_id, a.frame_id, b.log_id, b.frame_id, e.iou
            ));
        }
        out.push_str("END\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| GraphError::CorruptFile(format!("truncated before {what}")))
        };
        let header = next("header")?;
        let version = header
            .strip_prefix("POSEGRAPH ")
            .ok_or_else(|| GraphError::CorruptFile(format!("bad header `{header}`")))?;
        if version != GRAPH_VERSION.to_string() {
            return Err(GraphError::VersionMismatch {
                found: version.to_string(),
            });
        }
        let range = fields(next("IOU_RANGE")?, "IOU_RANGE", 2)?;
        let iou_min = parse_num::<f64>(range[0])?;
        let iou_max = parse_num::<f64>(range[1])?;
        let cross_only = match fields(next("CROSS_ONLY")?, "CROSS_ONLY", 1)?[0] {
            "true" => true,
            "false" => false,
            other => return Err(GraphError::CorruptFile(format!("bad CROSS_ONLY `{other}`"))),
        };
        let nv = parse_num::<usize>(fields(next("VERTICES")?, "VERTICES", 1)?[0])?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let f = fields(next("VERTEX")?, "VERTEX", 2)?;
            vertices.push(PoseKey::new(f[0], parse_num(f[1])?));
        }
        let ne = parse_num::<usize>(fields(next("EDGES")?, "EDGES", 1)?[0])?;
        let index: HashMap<PoseKey, usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, k)| (k.clone(), i))
            .collect();
        let lookup = |k: PoseKey| {
            index
                .get(&k)
                .copied()
                .ok_or_else(|| GraphError::CorruptFile(format!("edge references unknown pose {k}")))
        };
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let f = fields(next("EDGE")?, "EDGE", 5)?;
            let i = lookup(PoseKey::new(f[0], parse_num(f[1])?))?;
            let j = lookup(PoseKey::new(f[2], parse_num(f[3])?))?;
            edges.push(PoseEdge {
                i,
                j,
                iou: parse_num(f[4])?,
            });
        }
        if next("END")? != "END" {
            return Err(GraphError::CorruptFile("missing END marker".into()));
        }
        let g = PoseGraph {
            vertices,
            edges,
            iou_min,
            iou_max,
            cross_only,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&GRAPH_VERSION.to_le_bytes());
        out.extend_from_slice(&self.iou_min.to_le_bytes());
        out.extend_from_slice(&self.iou_max.to_le_bytes());
        out.push(self.cross_only as u8);
        out.extend_from_slice(&(self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            out.extend_from_slice(&(v.log_id.len() as u32).to_le_bytes());
            out.extend_from_slice(v.log_id.as_bytes());
            out.extend_from_slice(&v.frame_id.to_le_bytes());
        }
        out.extend_from_slice(&(self.edges.len() as u64).to_le_bytes());
        for e in &self.edges {
            out.extend_from_slice(&(e.i as u64).to_le_bytes());
            out.extend_from_slice(&(e.j as u64).to_le_bytes());
            out.extend_from_slice(&e.iou.to_le_bytes());
        }
        out.extend_from_slice(BINARY_TRAILER);
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, GraphError> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(GraphError::CorruptFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != GRAPH_VERSION {
            return Err(GraphError::VersionMismatch {
                found: version.to_string(),
            });
        }
        let iou_min = f64::from_le_bytes(read_array(&mut r)?);
        let iou_max = f64::from_le_bytes(read_array(&mut r)?);
        let cross_only = match read_array::<1>(&mut r)?[0] {
            0 => false,
            1 => true,
            b => return Err(GraphError::CorruptFile(format!("bad cross_only byte {b}"))),
        };
        let nv = read_len(&mut r, bytes.len())?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let len = u32::from_le_bytes(read_array(&mut r)?) as usize;
            if len > bytes.len() {
                return Err(GraphError::CorruptFile("string length out of range".into()));
            }
            let mut buf = vec![0u8; len];
            read_exact(&mut r, &mut buf)?;
            let log_id = String::from_utf8(buf)
                .map_err(|_| GraphError::CorruptFile("log id is not utf-8".into()))?;
            let frame = u64::from_le_bytes(read_array(&mut r)?);
            vertices.push(PoseKey::new(log_id, frame));
        }
        let ne = read_len(&mut r, bytes.len())?;
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let i = u64::from_le_bytes(read_array(&mut r)?) as usize;
            let j = u64::from_le_bytes(read_array(&mut r)?) as usize;
            let iou = f64::from_le_bytes(read_array(&mut r)?);
            edges.push(PoseEdge { i, j, iou });
        }
        let mut trailer = [0u8; 8];
        read_exact(&mut r, &mut trailer)?;
        if &trailer != BINARY_TRAILER || (r.position() as usize) != bytes.len() {
            return Err(GraphError::CorruptFile("bad trailer".into()));
        }
        let g = PoseGraph {
            vertices,
            edges,
            iou_min,
            iou_max,
            cross_only,
        };
        g.validate()?;
        Ok(g)
    }

    /// Structural checks applied after loading.
    pub fn validate(&self) -> Result<(), GraphError> {
        check_range(self.iou_min, self.iou_max)
            .map_err(|e| GraphError::CorruptFile(e.to_string()))?;
        if self.vertices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GraphError::CorruptFile("vertices not strictly sorted".into()));
        }
        let n = self.vertices.len();
        for e in &self.edges {
            if e.i >= e.j || e.j >= n {
                return Err(GraphError::CorruptFile(format!(
                    "bad edge ({}, {})",
                    e.i, e.j
                )));
            }
            if !(e.iou >= self.iou_min && e.iou <= self.iou_max) {
                return Err(GraphError::CorruptFile(format!(
                    "edge iou {} outside [{}, {}]",
                    e.iou, self.iou_min, self.iou_max
                )));
            }
            if self.cross_only && self.vertices[e.i].log_id == self.vertices[e.j].log_id {
                return Err(GraphError::CorruptFile("same-log edge in cross-only graph".into()));
            }
        }
        if self.edges.windows(2).any(|w| (w[0].i, w[0].j) >= (w[1].i, w[1].j)) {
            return Err(GraphError::CorruptFile("edges not strictly sorted".into()));
        }
        Ok(())
    }
}

/// Binary for `.bin`, text otherwise.
pub fn save_graph(g: &PoseGraph, path: &Path) -> Result<(), GraphError> {
    if is_binary_path(path) {
        fs::write(path, g.to_binary())?;
    } else {
        fs::write(path, g.to_text())?;
    }
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<PoseGraph, GraphError> {
    if is_binary_path(path) {
        PoseGraph::from_binary(&fs::read(path)?)
    } else {
        PoseGraph::from_text(&fs::read_to_string(path)?)
    }
}

pub fn is_binary_path(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("bin")
}

fn fields<'a>(line: &'a str, tag: &str, n: usize) -> Result<Vec<&'a str>, GraphError> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(GraphError::CorruptFile(format!("expected {tag}, got `{line}`")));
    }
    let rest: Vec<&str> = parts.collect();
    if rest.len() != n {
        return Err(GraphError::CorruptFile(format!("malformed {tag} line `{line}`")));
    }
    Ok(rest)
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T, GraphError> {
    s.parse()
        .map_err(|_| GraphError::CorruptFile(format!("bad number `{s}`")))
}

fn read_exact(r: &mut Cursor<&[u8]>, buf: &mut [u8]) -> Result<(), GraphError> {
    r.read_exact(buf)
        .map_err(|_| GraphError::CorruptFile("unexpected end of file".into()))
}

fn read_array<const N: usize>(r: &mut Cursor<&[u8]>) -> Result<[u8; N], GraphError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_len(r: &mut Cursor<&[u8]>, limit: usize) -> Result<usize, GraphError> {
    let n = u64::from_le_bytes(read_array(r)?) as usize;
    if n > limit {
        return Err(GraphError::CorruptFile(format!("count {n} exceeds file size")));
    }
    Ok(n)
}
