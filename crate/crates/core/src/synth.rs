//! Synthetic multi-traversal scenes with known overlap structure.
//!
//! Each connected component of the declared overlap graph is laid out as one
//! of three constructions, and components are placed far apart along x:
//!
//! - isolated log: a single route of any shape;
//! - clique: every route passes through one shared junction. Logs joined by
//!   `full` edges drive the same route; other logs cross at distinct headings;
//! - chain: straight collinear segments where each overlaps only its
//!   neighbours.
//!
//! Any other component shape is rejected as infeasible.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::LogIntersectionGraph;
use crate::geometry::{FootprintConfig, Point};
use crate::ingest::{Dataset, Pose, Traversal};
use crate::rng::SeededRng;

pub const FIELD_DIM: usize = 16;
/// Largest position noise the layouts keep their overlap margins for.
pub const MAX_NOISE: f64 = 1.0;
/// Gap between the bounding boxes of neighbouring components.
const COMPONENT_GAP: f64 = 200.0;
const DENSE_STEPS: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible scene: {0}")]
    InfeasiblePlan(String),
    #[error("malformed truth file, line {line}: {reason}")]
    MalformedTruth { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteShape {
    #[default]
    Straight,
    Arc,
    FigureEight,
}

impl RouteShape {
    pub fn as_str(self) -> &'static str {
        match self {
            RouteShape::Straight => "straight",
            RouteShape::Arc => "arc",
            RouteShape::FigureEight => "figure-eight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    None,
    Partial,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapPlan {
    pub a: usize,
    pub b: usize,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub n_logs: usize,
    /// Shape per log index; missing entries are straight.
    pub shapes: Vec<RouteShape>,
    pub plan: Vec<OverlapPlan>,
    pub poses_per_log: usize,
    /// Arc-length spacing between consecutive poses, meters.
    pub spacing: f64,
    /// Standard deviation of the position noise, meters.
    pub noise: f64,
    /// Components are assigned to areas round-robin.
    pub areas: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            n_logs: 2,
            shapes: Vec::new(),
            plan: Vec::new(),
            poses_per_log: 20,
            spacing: 5.0,
            noise: 0.0,
            areas: 1,
            seed: 0,
        }
    }
}

pub fn log_name(i: usize) -> String {
    format!("log{i:03}")
}

impl SceneSpec {
    /// A random mix of isolated logs, pairs, cliques and chains.
    pub fn random(seed: u64, max_logs: usize, max_poses_per_log: usize) -> Self {
        let mut rng = SeededRng::stream(seed, 0x5ce7e);
        let n_logs = 1 + rng.below(max_logs.max(1) as u64) as usize;
        let shapes_all = [RouteShape::Straight, RouteShape::Arc, RouteShape::FigureEight];
        let mut shapes = vec![RouteShape::Straight; n_logs];
        let mut plan = Vec::new();
        let mut next = 0;
        while next < n_logs {
            let left = n_logs - next;
            let roll = rng.uniform();
            let (size, chain) = if roll < 0.3 || left == 1 {
                (1, false)
            } else if roll < 0.6 || left == 2 {
                (2, false)
            } else if roll < 0.8 {
                (3 + rng.below(3).min(left as u64 - 3) as usize, false)
            } else {
                (3 + rng.below(4).min(left as u64 - 3) as usize, true)
            };
            let members: Vec<usize> = (next..next + size).collect();
            if chain {
                for w in members.windows(2) {
                    plan.push(OverlapPlan { a: w[0], b: w[1], regime: Regime::Partial });
                }
            } else {
                let shape = shapes_all[rng.below(3) as usize];
                for &m in &members {
                    shapes[m] = shape;
                }
                for (x, &a) in members.iter().enumerate() {
                    for &b in &members[x + 1..] {
                        let regime = if rng.uniform() < 0.25 { Regime::Full } else { Regime::Partial };
                        plan.push(OverlapPlan { a, b, regime });
                    }
                }
            }
            next += size;
        }
        Self {
            n_logs,
            shapes,
            plan,
            poses_per_log: 1 + rng.below(max_poses_per_log.max(1) as u64) as usize,
            spacing: rng.uniform_in(2.0, 10.0),
            noise: rng.uniform_in(0.0, 0.5),
            areas: 1 + rng.below(2) as usize,
            seed,
        }
    }

    fn shape(&self, i: usize) -> RouteShape {
        self.shapes.get(i).copied().unwrap_or_default()
    }
}

/// Low-frequency sinusoid mixture over global `(x, y)`, one row of waves
/// per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    pub seed: u64,
    pub dim: usize,
    /// `(amplitude, kx, ky, phase)` per wave, `WAVES` consecutive per dim.
    waves: Vec<(f64, f64, f64, f64)>,
}

const WAVES: usize = 3;
const MIN_WAVELENGTH: f64 = 15.0;
const MAX_WAVELENGTH: f64 = 60.0;

impl FeatureField {
    pub fn new(seed: u64, dim: usize) -> Self {
        let mut rng = SeededRng::stream(seed, 0xf1e1d);
        let amp = (2.0 / WAVES as f64).sqrt();
        let waves = (0..dim * WAVES)
            .map(|_| {
                let wavelength = rng.uniform_in(MIN_WAVELENGTH, MAX_WAVELENGTH);
                let dir = rng.uniform_in(0.0, TAU);
                let k = TAU / wavelength;
                (amp, k * libm::cos(dir), k * libm::sin(dir), rng.uniform_in(0.0, TAU))
            })
            .collect();
        Self { seed, dim, waves }
    }

    pub fn eval_into(&self, p: Point, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate().take(self.dim) {
            *o = self.waves[d * WAVES..(d + 1) * WAVES]
                .iter()
                .map(|&(a, kx, ky, ph)| a * libm::sin(kx * p.x + ky * p.y + ph))
                .sum();
        }
    }

    pub fn eval(&self, p: Point) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(p, &mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub dataset: Dataset,
    pub truth: LogIntersectionGraph,
    pub field: FeatureField,
    pub spec: SceneSpec,
}

enum Layout {
    Isolated(usize),
    /// Groups of logs sharing one route; groups cross at the junction.
    Clique(Vec<Vec<usize>>),
    Chain(Vec<usize>),
}

fn infeasible(msg: impl Into<String>) -> SynthError {
    SynthError::InfeasiblePlan(msg.into())
}

fn plan_layouts(spec: &SceneSpec) -> Result<(Vec<Layout>, LogIntersectionGraph), SynthError> {
    let n = spec.n_logs;
    let mut regimes: BTreeMap<(usize, usize), Regime> = BTreeMap::new();
    for e in &spec.plan {
        if e.a >= n || e.b >= n || e.a == e.b {
            return Err(infeasible(format!("bad pair ({}, {})", e.a, e.b)));
        }
        let key = (e.a.min(e.b), e.a.max(e.b));
        if let Some(prev) = regimes.insert(key, e.regime) {
            if prev != e.regime {
                return Err(infeasible(format!("conflicting regimes for {key:?}")));
            }
        }
    }
    let mut truth = LogIntersectionGraph::new((0..n).map(log_name));
    let mut adj = vec![BTreeSet::new(); n];
    for (&(a, b), &r) in &regimes {
        if r != Regime::None {
            truth.add_edge(&log_name(a), &log_name(b));
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }

    let mut seen = vec![false; n];
    let mut layouts = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut i = 0;
        while i < comp.len() {
            for &m in &adj[comp[i]] {
                if !seen[m] {
                    seen[m] = true;
                    comp.push(m);
                }
            }
            i += 1;
        }
        comp.sort_unstable();
        let k = comp.len();
        let edges: usize = comp.iter().map(|&c| adj[c].len()).sum::<usize>() / 2;
        if k == 1 {
            layouts.push(Layout::Isolated(start));
        } else if edges == k * (k - 1) / 2 {
            // Union logs joined by `full` edges into shared routes.
            let mut group: BTreeMap<usize, usize> = comp.iter().map(|&c| (c, c)).collect();
            fn root(g: &mut BTreeMap<usize, usize>, x: usize) -> usize {
                let p = g[&x];
                if p == x {
                    return x;
                }
                let r = root(g, p);
                g.insert(x, r);
                r
            }
            for (x, &a) in comp.iter().enumerate() {
                for &b in &comp[x + 1..] {
                    if regimes.get(&(a, b)) == Some(&Regime::Full) {
                        let (ra, rb) = (root(&mut group, a), root(&mut group, b));
                        group.insert(ra.max(rb), ra.min(rb));
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &c in &comp {
                let r = root(&mut group, c);
                groups.entry(r).or_default().push(c);
            }
            for g in groups.values() {
                if g.iter().any(|&m| spec.shape(m) != spec.shape(g[0])) {
                    return Err(infeasible("logs with a full overlap must share a route shape"));
                }
            }
            layouts.push(Layout::Clique(groups.into_values().collect()));
        } else if edges == k - 1 && comp.iter().all(|&c| adj[c].len() <= 2) {
            let mut order = vec![*comp.iter().find(|&&c| adj[c].len() == 1).unwrap()];
            while order.len() < k {
                let last = *order.last().unwrap();
                let next = adj[last].iter().copied().find(|m| !order.contains(m)).unwrap();
                order.push(next);
            }
            for w in order.windows(2) {
                if regimes[&(w[0].min(w[1]), w[0].max(w[1]))] == Regime::Full {
                    return Err(infeasible("a chain cannot contain a full overlap"));
                }
            }
            if order.iter().any(|&m| spec.shape(m) != RouteShape::Straight) {
                return Err(infeasible("chain members must be straight routes"));
            }
            layouts.push(Layout::Chain(order));
        } else {
            return Err(infeasible(format!(
                "component {:?} is neither a clique nor a chain",
                comp.iter().map(|&c| log_name(c)).collect::<Vec<_>>()
            )));
        }
    }
    Ok((layouts, truth))
}

/// Dense unit-scale polyline of a shape, centered so that parameter 0 is
/// the junction at the origin with heading 0, scaled to `length`.
fn route_polyline(shape: RouteShape, length: f64) -> Vec<Point> {
    let half = length / 2.0;
    match shape {
        RouteShape::Straight => (0..=DENSE_STEPS)
            .map(|i| Point::new(-half + length * i as f64 / DENSE_STEPS as f64, 0.0))
            .collect(),
        RouteShape::Arc => {
            // Quarter turn in total, curving left.
            let kappa = if length > 0.0 { (PI / 2.0) / length } else { 0.0 };
            (0..=DENSE_STEPS)
                .map(|i| {
                    let s = -half + length * i as f64 / DENSE_STEPS as f64;
                    if kappa == 0.0 {
                        Point::new(s, 0.0)
                    } else {
                        Point::new(libm::sin(kappa * s) / kappa, (1.0 - libm::cos(kappa * s)) / kappa)
                    }
                })
                .collect()
        }
        RouteShape::FigureEight => {
            // x = A sin u, y = A sin u cos u crosses the origin at u = 0 with
            // heading pi/4; rotate that to 0 and scale by arc length.
            let raw: Vec<Point> = (0..=DENSE_STEPS)
                .map(|i| {
                    let u = -PI + TAU * i as f64 / DENSE_STEPS as f64;
                    let (x, y) = (libm::sin(u), libm::sin(u) * libm::cos(u));
                    let (s, c) = libm::sincos(-PI / 4.0);
                    Point::new(x * c - y * s, x * s + y * c)
                })
                .collect();
            let total: f64 = raw.windows(2).map(|w| w[0].dist(w[1])).sum();
            let scale = if total > 0.0 { length / total } else { 0.0 };
            raw.into_iter().map(|p| p * scale).collect()
        }
    }
}

/// `n` poses at equal arc-length spacing along a dense polyline, yaw from
/// the local tangent.
fn resample(poly: &[Point], n: usize, spacing: f64) -> Vec<(Point, f64)> {
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        cum.push(cum.last().unwrap() + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    let start = (total - spacing * (n.saturating_sub(1)) as f64) / 2.0;
    let mut seg = 0;
    (0..n)
        .map(|i| {
            let s = (start + spacing * i as f64).clamp(0.0, total);
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let (a, b) = (poly[seg], poly[seg + 1]);
            let len = cum[seg + 1] - cum[seg];
            let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
            let d = b - a;
            let yaw = if d.norm() > 0.0 { libm::atan2(d.y, d.x) } else { 0.0 };
            (a + d * t, yaw)
        })
        .collect()
}

fn rotate(p: Point, angle: f64) -> Point {
    let (s, c) = libm::sincos(angle);
    Point::new(p.x * c - p.y * s, p.x * s + p.y * c)
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene, SynthError> {
    if !(spec.spacing > 0.0 && spec.spacing.is_finite()) {
        return Err(infeasible("spacing must be positive"));
    }
    let cfg = FootprintConfig::default();
    if spec.spacing > cfg.lon_extent {
        return Err(infeasible(format!(
            "spacing above {} m leaves gaps in a route's coverage",
            cfg.lon_extent
        )));
    }
    if !(0.0..=MAX_NOISE).contains(&spec.noise) {
        return Err(infeasible(format!("noise must lie in [0, {MAX_NOISE}]")));
    }
    if spec.poses_per_log == 0 || spec.areas == 0 {
        return Err(infeasible("poses_per_log and areas must be >= 1"));
    }
    let (layouts, truth) = plan_layouts(spec)?;
    let mut rng = SeededRng::stream(spec.seed, 0x7a10);
    let length = spec.spacing * (spec.poses_per_log - 1) as f64;

    // Noise-free (position, yaw) per log, in component-local coordinates.
    let mut routes: Vec<Vec<(Point, f64)>> = vec![Vec::new(); spec.n_logs];
    let mut component_of = vec![0; spec.n_logs];
    let mut cursor = 0.0;
    for (ci, layout) in layouts.iter().enumerate() {
        let mut local: Vec<(usize, Vec<(Point, f64)>)> = Vec::new();
        match layout {
            Layout::Isolated(log) => {
                let base = rng.uniform_in(0.0, TAU);
                let poly = route_polyline(spec.shape(*log), length);
                local.push((*log, resample(&poly, spec.poses_per_log, spec.spacing)
                    .into_iter()
                    .map(|(p, y)| (rotate(p, base), y + base))
                    .collect()));
            }
            Layout::Clique(groups) => {
                let base = rng.uniform_in(0.0, TAU);
                for (gi, g) in groups.iter().enumerate() {
                    let heading = base + PI * gi as f64 / groups.len() as f64;
                    let poly = route_polyline(spec.shape(g[0]), length);
                    let poses: Vec<(Point, f64)> = resample(&poly, spec.poses_per_log, spec.spacing)
                        .into_iter()
                        .map(|(p, y)| (rotate(p, heading), y + heading))
                        .collect();
                    for &m in g {
                        local.push((m, poses.clone()));
                    }
                }
            }
            Layout::Chain(order) => {
                let stride = 0.75 * (length + 2.0 * cfg.lon_extent);
                for (k, &m) in order.iter().enumerate() {
                    let x0 = k as f64 * stride;
                    local.push((
                        m,
                        (0..spec.poses_per_log)
                            .map(|i| (Point::new(x0 + spec.spacing * i as f64, 0.0), 0.0))
                            .collect(),
                    ));
                }
            }
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (_, poses) in &local {
            for (p, _) in poses {
                lo = lo.min(p.x);
                hi = hi.max(p.x);
            }
        }
        let shift = cursor - lo + cfg.circumradius();
        for (m, poses) in local {
            routes[m] = poses.into_iter().map(|(p, y)| (p + Point::new(shift, 0.0), y)).collect();
            component_of[m] = ci;
        }
        cursor += (hi - lo) + 2.0 * cfg.circumradius() + COMPONENT_GAP;
    }

    let mut traversals = Vec::with_capacity(spec.n_logs);
    for (i, poses) in routes.into_iter().enumerate() {
        let log = log_name(i);
        let area = format!("area{}", component_of[i] % spec.areas);
        let poses = poses
            .into_iter()
            .enumerate()
            .map(|(f, (p, yaw))| {
                let (nx, ny) = if spec.noise > 0.0 {
                    (spec.noise * rng.normal(), spec.noise * rng.normal())
                } else {
                    (0.0, 0.0)
                };
                Pose::new(log.clone(), f as u64, f as f64 * 0.1, p.x + nx, p.y + ny, yaw)
            })
            .collect();
        traversals.push(Traversal { log_id: log, area_id: area, poses });
    }
    let dataset = Dataset::from_traversals(traversals)
        .map_err(|e| infeasible(format!("generated dataset rejected: {e}")))?;
    Ok(Scene {
        dataset,
        truth,
        field: FeatureField::new(spec.seed, FIELD_DIM),
        spec: spec.clone(),
    })
}

/// Sidecar with the declared log graph and the feature field parameters.
pub fn truth_to_text(scene: &Scene) -> String {
    let mut out = String::from("synth_truth 1\n");
    let _ = writeln!(out, "seed {}", scene.spec.seed);
    let _ = writeln!(out, "field_seed {}", scene.field.seed);
    let _ = writeln!(out, "field_dim {}", scene.field.dim);
    for n in &scene.truth.nodes {
        let _ = writeln!(out, "log {n}");
    }
    for (a, b) in &scene.truth.edges {
        let _ = writeln!(out, "edge {a} {b}");
    }
    out.push_str("end\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub seed: u64,
    pub graph: LogIntersectionGraph,
    pub field: FeatureField,
}

pub fn truth_from_text(text: &str) -> Result<Truth, SynthError> {
    let mut seed = None;
    let mut field_seed = None;
    let mut field_dim = None;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut ended = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| SynthError::MalformedTruth { line: i + 1, reason: reason.into() };
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        match f.as_slice() {
            ["synth_truth", "1"] => {}
            ["synth_truth", _] => return Err(bad("unsupported version")),
            ["seed", v] => seed = Some(num(v)?),
            ["field_seed", v] => field_seed = Some(num(v)?),
            ["field_dim", v] => field_dim = Some(num(v)? as usize),
            ["log", n] => nodes.push(n.to_string()),
            ["edge", a, b] => edges.push((a.to_string(), b.to_string())),
            ["end"] => ended = true,
            _ => return Err(bad("unrecognized line")),
        }
    }
    let missing = |what: &str| SynthError::MalformedTruth { line: 0, reason: format!("missing {what}") };
    if !ended {
        return Err(missing("end marker"));
    }
    let mut graph = LogIntersectionGraph::new(nodes);
    for (a, b) in edges {
        graph.add_edge(&a, &b);
    }
    Ok(Truth {
        seed: seed.ok_or_else(|| missing("seed"))?,
        graph,
        field: FeatureField::new(
            field_seed.ok_or_else(|| missing("field_seed"))?,
            field_dim.ok_or_else(|| missing("field_dim"))?,
        ),
    })
}
