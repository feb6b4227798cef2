//! Single- vs multi-traversal classification.
//!
//! Two logs are linked when any pair of their footprints overlaps with
//! positive area. This is the same relation as intersecting the merged
//! per-log polygons, since a union of sets meets another union iff some
//! member pair meets. Logs are only compared within their own area.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::{footprint, footprint_overlap, FootprintConfig, FootprintRect};
use crate::ingest::{partition_by_area, Dataset};
use crate::spatial::FootprintIndex;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogIntersectionGraph {
    /// Sorted log ids.
    pub nodes: Vec<String>,
    /// Unordered pairs stored as `(smaller, larger)`.
    pub edges: BTreeSet<(String, String)>,
}

impl LogIntersectionGraph {
    pub fn new(nodes: impl IntoIterator<Item = String>) -> Self {
        let nodes: BTreeSet<String> = nodes.into_iter().collect();
        Self {
            nodes: nodes.into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    /// Adds an undirected edge. Self-loops are ignored; unknown nodes are
    /// added.
    pub fn add_edge(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        for n in [a, b] {
            if let Err(pos) = self.nodes.binary_search_by(|x| x.as_str().cmp(n)) {
                self.nodes.insert(pos, n.to_string());
            }
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.insert((lo.to_string(), hi.to_string()));
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.edges.contains(&(lo.to_string(), hi.to_string()))
    }

    pub fn neighbors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.iter().map(|n| (n.as_str(), BTreeSet::new())).collect();
        for (a, b) in &self.edges {
            adj.entry(a.as_str()).or_default().insert(b.as_str());
            adj.entry(b.as_str()).or_default().insert(a.as_str());
        }
        adj
    }

    pub fn degree(&self, node: &str) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| a == node || b == node)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum TraversalKind {
    Single,
    Multi,
}

impl TraversalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraversalKind::Single => "single",
            TraversalKind::Multi => "multi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "single" => Some(TraversalKind::Single),
            "multi" => Some(TraversalKind::Multi),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraversalClass {
    pub log_id: String,
    pub class: TraversalKind,
    pub intersecting_logs: usize,
}

/// Footprints of one area, with the owning log index of each.
struct AreaFootprints {
    rects: Vec<FootprintRect>,
    owner: Vec<usize>,
    logs: Vec<String>,
}

fn area_footprints(d: &Dataset, cfg: &FootprintConfig) -> AreaFootprints {
    let mut rects = Vec::with_capacity(d.total_poses);
    let mut owner = Vec::with_capacity(d.total_poses);
    let mut logs = Vec::with_capacity(d.traversals.len());
    for (li, trav) in d.traversals.iter().enumerate() {
        logs.push(trav.log_id.clone());
        for p in &trav.poses {
            rects.push(footprint(p, cfg));
            owner.push(li);
        }
    }
    AreaFootprints { rects, owner, logs }
}

/// Builds the log graph with R-tree candidate generation and an exact
/// oriented-rectangle overlap test on each candidate.
pub fn build_log_graph(d: &Dataset, cfg: &FootprintConfig) -> LogIntersectionGraph {
    let mut graph = LogIntersectionGraph::new(d.traversals.iter().map(|t| t.log_id.clone()));
    for part in partition_by_area(d).values() {
        let fp = area_footprints(part, cfg);
        let index = FootprintIndex::build(&fp.rects);
        let pairs = index.pairs_where(|i, j| {
            fp.owner[i] != fp.owner[j]
                && footprint_overlap(&fp.rects[i], &fp.rects[j]).intersection_area > 0.0
        });
        for (i, j) in pairs {
            graph.add_edge(&fp.logs[fp.owner[i]], &fp.logs[fp.owner[j]]);
        }
    }
    graph
}

/// Degree 0 is single; a connected component of exactly two logs is single
/// as well (the isolated-pair exception); everything else is multi.
pub fn classify(g: &LogIntersectionGraph) -> Vec<TraversalClass> {
    let adj = g.neighbors();
    let mut component: BTreeMap<&str, usize> = BTreeMap::new();
    let mut sizes = Vec::new();
    for &start in adj.keys() {
        if component.contains_key(start) {
            continue;
        }
        let id = sizes.len();
        let mut stack = vec![start];
        component.insert(start, id);
        let mut size = 0;
        while let Some(n) = stack.pop() {
            size += 1;
            for &m in &adj[n] {
                if !component.contains_key(m) {
                    component.insert(m, id);
                    stack.push(m);
                }
            }
        }
        sizes.push(size);
    }
    adj.iter()
        .map(|(&log, nbrs)| {
            let degree = nbrs.len();
            let comp_size = sizes[component[log]];
            let class = if degree == 0 || comp_size == 2 {
                TraversalKind::Single
            } else {
                TraversalKind::Multi
            };
            TraversalClass {
                log_id: log.to_string(),
                class,
                intersecting_logs: degree,
            }
        })
        .collect()
}

/// Intersecting-log count → number of logs.
pub fn intersection_histogram(classes: &[TraversalClass]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for c in classes {
        *hist.entry(c.intersecting_logs).or_insert(0) += 1;
    }
    hist
}

pub fn classes_to_csv(classes: &[TraversalClass]) -> String {
    let mut out = String::from("log_id,class,intersecting_logs\n");
    for c in classes {
        let _ = writeln!(out, "{},{},{}", c.log_id, c.class.as_str(), c.intersecting_logs);
    }
    out
}

/// Parses the CSV written by [`classes_to_csv`]; `#` lines are ignored.
pub fn classes_from_csv(text: &str) -> Result<Vec<TraversalClass>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("log_id,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || format!("line {}: malformed classification row `{line}`", i + 1);
        if fields.len() != 3 {
            return Err(bad());
        }
        out.push(TraversalClass {
            log_id: fields[0].to_string(),
            class: TraversalKind::parse(fields[1]).ok_or_else(bad)?,
            intersecting_logs: fields[2].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

pub fn histogram_to_csv(hist: &BTreeMap<usize, usize>) -> String {
    let mut out = String::from("intersecting_logs,num_logs\n");
    for (k, v) in hist {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}
