//! Reference implementations used by the integration tests. Everything here
//! is written independently of the library internals: plain std math, naive
//! loops, different algorithms.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use geotrav::contrastive::ProjectionHead;
use geotrav::correspondence::BevGridSpec;
use geotrav::ingest::{Dataset, Pose, PoseKey};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// `(pos_sim, neg_sims, tau, loss)` evaluated with 256-bit arithmetic by
/// `tests/oracles/infonce_mpmath.py`.
#[allow(clippy::excessive_precision)]
pub const INFONCE_REFERENCE: &[(f64, &[f64], f64, f64)] = &[
    (0.5, &[0.0], 0.5, 0.3132616875182228340489955),
    (1.0, &[-1.0; 8], 0.1, 0.00000001648922884356114625556253),
    (0.3, &[0.1, -0.2, 0.25, 0.0], 0.07, 0.4456651850414360478242043),
    (-0.4, &[0.9, 0.8, 0.7], 0.2, 7.181030843346662886104277),
    (0.99, &[0.98, -0.5], 0.05, 0.5981388693816546075898612),
    (1.0, &[-1.0, 0.5, 0.999], 0.0014285714285714286, 0.4031860488854576866935234),
    (-1.0, &[1.0, -1.0], 0.0014285714285714286, 1400.000000000000001214306),
    (0.7, &[0.7, -0.7, 0.69], 0.001, 0.6931698802671862477844849),
    (-0.7, &[0.7], 0.001, 1399.999999999999882038804),
    (
        0.123456789,
        &[0.987654321, -0.5, 0.25, 0.111, -0.999],
        0.013,
        66.47673323076922988686562,
    ),
    (0.0, &[0.0; 63], 1000000.0, 4.158883083359671856503393),
    (0.8, &[0.1, 0.2, 0.3, 0.4, 0.5], 1000000.0, 1.791759052561414028591457),
];

// ---------------------------------------------------------------- geometry

#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub cx: f64,
    pub cy: f64,
    /// Heading as (cos, sin).
    pub cos: f64,
    pub sin: f64,
    pub half_lon: f64,
    pub half_lat: f64,
}

impl Rect {
    pub fn of(p: &Pose, half_lat: f64, half_lon: f64) -> Self {
        let (sin, cos) = p.yaw.sin_cos();
        Self {
            cx: p.x,
            cy: p.y,
            cos,
            sin,
            half_lon,
            half_lat,
        }
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_lon * self.half_lat
    }

    fn axes(&self) -> [(f64, f64); 2] {
        [(self.cos, self.sin), (-self.sin, self.cos)]
    }

    /// Point in vehicle-frame coordinates `(lon, lat)`.
    pub fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let [f, l] = self.axes();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (dx * f.0 + dy * f.1, dx * l.0 + dy * l.1)
    }

    pub fn global(&self, lon: f64, lat: f64) -> (f64, f64) {
        let [f, l] = self.axes();
        (self.cx + lon * f.0 + lat * l.0, self.cy + lon * f.1 + lat * l.1)
    }

    pub fn contains(&self, x: f64, y: f64, tol: f64) -> bool {
        let (u, v) = self.local(x, y);
        u.abs() <= self.half_lon + tol && v.abs() <= self.half_lat + tol
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            self.global(self.half_lon, self.half_lat),
            self.global(-self.half_lon, self.half_lat),
            self.global(-self.half_lon, -self.half_lat),
            self.global(self.half_lon, -self.half_lat),
        ]
    }

    pub fn shifted(&self, ox: f64, oy: f64) -> Self {
        Self {
            cx: self.cx - ox,
            cy: self.cy - oy,
            ..*self
        }
    }
}

/// IoU estimated from `n` points drawn uniformly inside `a`.
pub fn monte_carlo_iou(a: &Rect, b: &Rect, n: usize, seed: u64) -> f64 {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let u = rng.random_range(-a.half_lon..a.half_lon);
        let v = rng.random_range(-a.half_lat..a.half_lat);
        let (x, y) = a.global(u, v);
        if b.contains(x, y, 0.0) {
            hits += 1;
        }
    }
    let inter = a.area() * hits as f64 / n as f64;
    inter / (a.area() + b.area() - inter)
}

/// Separating-axis test for overlap of positive area. Projections that
/// touch within `tol` count as separated.
pub fn overlaps_sat(a: &Rect, b: &Rect, tol: f64) -> bool {
    let (ca, cb) = (a.corners(), b.corners());
    for axis in a.axes().into_iter().chain(b.axes()) {
        let proj = |cs: &[(f64, f64); 4]| {
            cs.iter()
                .map(|c| c.0 * axis.0 + c.1 * axis.1)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (alo, ahi) = proj(&ca);
        let (blo, bhi) = proj(&cb);
        if ahi.min(bhi) - alo.max(blo) <= tol {
            return false;
        }
    }
    true
}

fn segment_hit(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> Option<(f64, f64)> {
    let r = (p2.0 - p1.0, p2.1 - p1.1);
    let s = (q2.0 - q1.0, q2.1 - q1.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = (q1.0 - p1.0, q1.1 - p1.1);
    let t = (w.0 * s.1 - w.1 * s.0) / denom;
    let u = (w.0 * r.1 - w.1 * r.0) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some((p1.0 + t * r.0, p1.1 + t * r.1))
    } else {
        None
    }
}

/// Exact intersection area of two rectangles: collect corners inside the
/// other rectangle and all edge crossings, sort by angle, apply the
/// shoelace formula. Coordinates are taken relative to `a`'s center.
pub fn intersection_area(a: &Rect, b: &Rect) -> f64 {
    let (a, b) = (a.shifted(a.cx, a.cy), b.shifted(a.cx, a.cy));
    let (ca, cb) = (a.corners(), b.corners());
    let mut pts: Vec<(f64, f64)> = Vec::new();
    pts.extend(ca.iter().filter(|c| b.contains(c.0, c.1, 1e-9)));
    pts.extend(cb.iter().filter(|c| a.contains(c.0, c.1, 1e-9)));
    for i in 0..4 {
        for j in 0..4 {
            if let Some(p) = segment_hit(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                pts.push(p);
            }
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.sort_by(|p, q| {
        let ap = (p.1 - my).atan2(p.0 - mx);
        let aq = (q.1 - my).atan2(q.0 - mx);
        ap.total_cmp(&aq)
    });
    let mut twice = 0.0;
    for i in 0..pts.len() {
        let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
        twice += p.0 * q.1 - q.0 * p.1;
    }
    (twice * 0.5).abs()
}

pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let i = intersection_area(a, b);
    i / (a.area() + b.area() - i)
}

// ------------------------------------------------------------------ graphs

struct Flat<'a> {
    pose: &'a Pose,
    log: usize,
    area: &'a str,
    rect: Rect,
}

fn flatten(d: &Dataset, half_lat: f64, half_lon: f64) -> Vec<Flat<'_>> {
    let mut out = Vec::new();
    for (li, t) in d.traversals.iter().enumerate() {
        for p in &t.poses {
            out.push(Flat {
                pose: p,
                log: li,
                area: &t.area_id,
                rect: Rect::of(p, half_lat, half_lon),
            });
        }
    }
    out
}

/// Log pairs (sorted ids) with at least one positively overlapping pose
/// pair in the same area, by exhaustive search.
pub fn brute_log_edges(d: &Dataset, half_lat: f64, half_lon: f64) -> BTreeSet<(String, String)> {
    let flat = flatten(d, half_lat, half_lon);
    let reach = 2.0 * half_lat.hypot(half_lon);
    let mut found = BTreeSet::new();
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            let (a, b) = (&flat[i], &flat[j]);
            if a.log == b.log || a.area != b.area {
                continue;
            }
            let key = (a.log.min(b.log), a.log.max(b.log));
            if found.contains(&key) {
                continue;
            }
            if (a.rect.cx - b.rect.cx).hypot(a.rect.cy - b.rect.cy) > reach {
                continue;
            }
            if overlaps_sat(&a.rect, &b.rect, 1e-9) {
                found.insert(key);
            }
        }
    }
    found
        .into_iter()
        .map(|(x, y)| (d.traversals[x].log_id.clone(), d.traversals[y].log_id.clone()))
        .collect()
}

/// All pose pairs with positive overlap and IoU within range, keyed by the
/// sorted pose keys.
pub fn brute_pose_edges(
    d: &Dataset,
    half_lat: f64,
    half_lon: f64,
    iou_min: f64,
    iou_max: f64,
    cross_only: bool,
) -> BTreeMap<(PoseKey, PoseKey), f64> {
    let flat = flatten(d, half_lat, half_lon);
    let mut out = BTreeMap::new();
    for i in 0..flat.len() {
        for j in i + 1..flat.len() {
            let (a, b) = (&flat[i], &flat[j]);
            if a.area != b.area || (cross_only && a.log == b.log) {
                continue;
            }
            let inter = intersection_area(&a.rect, &b.rect);
            if inter <= 1e-12 {
                continue;
            }
            let v = inter / (a.rect.area() + b.rect.area() - inter);
            if v >= iou_min && v <= iou_max {
                let (ka, kb) = (a.pose.key(), b.pose.key());
                let k = if ka < kb { (ka, kb) } else { (kb, ka) };
                out.insert(k, v);
            }
        }
    }
    out
}

// ------------------------------------------------------------------- cells

/// Global center of a grid cell: row walks the heading, column walks the
/// left-pointing lateral axis.
pub fn cell_center(p: &Pose, spec: &BevGridSpec, row: usize, col: usize) -> (f64, f64) {
    let lon = spec.lon_range.0 + (row as f64 + 0.5) * (spec.lon_range.1 - spec.lon_range.0) / spec.rows as f64;
    let lat = spec.lat_range.0 + (col as f64 + 0.5) * (spec.lat_range.1 - spec.lat_range.0) / spec.cols as f64;
    let (s, c) = p.yaw.sin_cos();
    (p.x + lon * c - lat * s, p.y + lon * s + lat * c)
}

/// Nearest cell of `p`'s grid to `q` by scanning every cell.
pub fn exhaustive_nearest(p: &Pose, spec: &BevGridSpec, q: (f64, f64)) -> ((usize, usize), f64) {
    let mut best = ((0, 0), f64::INFINITY);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let (x, y) = cell_center(p, spec, r, c);
            let d = (x - q.0).hypot(y - q.1);
            if d < best.1 {
                best = ((r, c), d);
            }
        }
    }
    best
}

// -------------------------------------------------------------------- loss

fn naive_head(head: &ProjectionHead, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (di, dh, dout) = (head.dim_in, head.dim_hidden, head.dim_out);
    let w1 = &params[..di * dh];
    let b1 = &params[di * dh..di * dh + dh];
    let w2 = &params[di * dh + dh..di * dh + dh + dh * dout];
    let b2 = &params[di * dh + dh + dh * dout..];
    let mut pre = vec![0.0; dh];
    for k in 0..dh {
        let mut acc = b1[k];
        for i in 0..di {
            acc += w1[k * di + i] * x[i];
        }
        pre[k] = acc;
    }
    let mut z = vec![0.0; dout];
    for o in 0..dout {
        let mut acc = b2[o];
        for k in 0..dh {
            acc += w2[o * dh + k] * if pre[k] > 0.0 { pre[k] } else { 0.0 };
        }
        z[o] = acc;
    }
    (z, pre)
}

fn naive_cos(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len() {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// Problem for the finite-difference oracle: one flat vector holding the
/// head parameters followed by anchor, positive and negative rows.
pub struct FlatProblem {
    pub head: ProjectionHead,
    pub anchors: usize,
    pub negatives: usize,
    pub tau: f64,
    /// Negatives are grouped per anchor instead of shared.
    pub per_anchor: bool,
}

impl FlatProblem {
    pub fn num_head_params(&self) -> usize {
        self.head.num_params()
    }

    /// Summed InfoNCE over anchors, computed without any stabilization, and
    /// the sign pattern of every hidden pre-activation.
    pub fn loss(&self, x: &[f64]) -> (f64, Vec<bool>) {
        let np = self.num_head_params();
        let d = self.head.dim_in;
        let params = &x[..np];
        let row = |block: usize, r: usize| {
            let base = np + (block + r) * d;
            &x[base..base + d]
        };
        let mut signs = Vec::new();
        let mut project = |v: &[f64]| {
            let (z, pre) = naive_head(&self.head, params, v);
            signs.extend(pre.iter().map(|&a| a > 0.0));
            z
        };
        let za: Vec<Vec<f64>> = (0..self.anchors).map(|r| project(row(0, r))).collect();
        let zp: Vec<Vec<f64>> = (0..self.anchors).map(|r| project(row(self.anchors, r))).collect();
        let zn: Vec<Vec<f64>> = (0..self.negatives)
            .map(|r| project(row(2 * self.anchors, r)))
            .collect();
        let k = if self.per_anchor {
            self.negatives / self.anchors
        } else {
            self.negatives
        };
        let mut total = 0.0;
        for i in 0..self.anchors {
            let pos = (naive_cos(&za[i], &zp[i]) / self.tau).exp();
            let start = if self.per_anchor { i * k } else { 0 };
            let mut denom = pos;
            for zj in &zn[start..start + k] {
                denom += (naive_cos(&za[i], zj) / self.tau).exp();
            }
            total += -(pos / denom).ln();
        }
        (total, signs)
    }

    /// Fourth-order central differences for every coordinate; `None` where
    /// a probe changes the ReLU sign pattern.
    pub fn numeric_grad(&self, x: &[f64], h: f64) -> Vec<Option<f64>> {
        let (_, base) = self.loss(x);
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let mut at = |delta: f64| {
                    probe[i] = x[i] + delta;
                    let (l, s) = self.loss(&probe);
                    probe[i] = x[i];
                    (l, s == base)
                };
                let (p1, s1) = at(h);
                let (m1, s2) = at(-h);
                let (p2, s3) = at(2.0 * h);
                let (m2, s4) = at(-2.0 * h);
                (s1 && s2 && s3 && s4).then(|| (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
            })
            .collect()
    }
}
