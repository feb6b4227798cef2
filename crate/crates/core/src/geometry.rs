//! Oriented perception footprints and convex polygon overlap.
//!
//! Every pose carries a rectangle of `±lon_extent` meters along its heading
//! and `±lat_extent` meters across it. Overlap between two footprints is the
//! Sutherland–Hodgman clip of one against the half-planes of the other.
//! Points within [`CLIP_EPS`] of a clip edge count as inside.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Pose, PoseKey};

/// Distance tolerance (meters) for point-on-edge classification.
pub const CLIP_EPS: f64 = 1e-9;

/// Polygons with less area than this (m²) are degenerate. Clip results below
/// it are reported as empty, so touching footprints do not overlap.
pub const AREA_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate polygon: {0}")]
    DegenerateInput(String),
    #[error("invalid footprint config: extents must be positive and finite (lat {lat}, lon {lon})")]
    InvalidConfig { lat: f64, lon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        libm::hypot(self.x, self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Half-extents of the perception rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintConfig {
    /// Half-width across the heading, meters.
    pub lat_extent: f64,
    /// Half-length along the heading, meters.
    pub lon_extent: f64,
}

impl Default for FootprintConfig {
    fn default() -> Self {
        Self {
            lat_extent: 15.0,
            lon_extent: 30.0,
        }
    }
}

impl FootprintConfig {
    pub fn new(lat_extent: f64, lon_extent: f64) -> Result<Self, GeometryError> {
        let cfg = Self {
            lat_extent,
            lon_extent,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.lat_extent) && ok(self.lon_extent) {
            Ok(())
        } else {
            Err(GeometryError::InvalidConfig {
                lat: self.lat_extent,
                lon: self.lon_extent,
            })
        }
    }

    /// Radius of the circle circumscribing every footprint.
    pub fn circumradius(&self) -> f64 {
        libm::hypot(self.lat_extent, self.lon_extent)
    }
}

/// Oriented rectangle, corners counterclockwise starting front-left.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintRect {
    pub corners: [Point; 4],
    pub source_pose: PoseKey,
}

impl FootprintRect {
    pub fn center(&self) -> Point {
        (self.corners[0] + self.corners[2]) * 0.5
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.corners)
    }

    /// Axis-aligned bounds as `(min, max)`.
    pub fn aabb(&self) -> (Point, Point) {
        bounds(&self.corners)
    }

    pub fn contains(&self, p: Point) -> bool {
        convex_contains(&self.corners, p)
    }
}

pub fn footprint(p: &Pose, cfg: &FootprintConfig) -> FootprintRect {
    let (s, c) = libm::sincos(p.yaw);
    let center = Point::new(p.x, p.y);
    let fwd = Point::new(c, s) * cfg.lon_extent;
    let left = Point::new(-s, c) * cfg.lat_extent;
    FootprintRect {
        corners: [
            center + fwd + left,
            center - fwd + left,
            center - fwd - left,
            center + fwd - left,
        ],
        source_pose: p.key(),
    }
}

/// Shoelace area, nonnegative regardless of orientation.
pub fn polygon_area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

fn signed_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    // Anchored at the first vertex to limit cancellation far from the origin.
    let o = poly[0];
    let mut twice = 0.0;
    for w in poly[1..].windows(2) {
        twice += (w[0] - o).cross(w[1] - o);
    }
    0.5 * twice
}

pub fn bounds(poly: &[Point]) -> (Point, Point) {
    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in poly {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Signed distance of `p` from the directed line `a → b`, positive on the
/// left.
fn edge_distance(a: Point, b: Point, p: Point) -> f64 {
    let d = b - a;
    d.cross(p - a) / d.norm()
}

/// Point-in-convex-CCW-polygon with boundary points counted inside.
pub fn convex_contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    (0..n).all(|i| edge_distance(poly[i], poly[(i + 1) % n], p) >= -CLIP_EPS)
}

fn clip_halfplane(poly: &[Point], a: Point, b: Point) -> Vec<Point> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 2);
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let ds = edge_distance(a, b, s);
        let de = edge_distance(a, b, e);
        let s_in = ds >= -CLIP_EPS;
        let e_in = de >= -CLIP_EPS;
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push(s + (e - s) * t);
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

fn dedup_ring(poly: &mut Vec<Point>) {
    poly.dedup_by(|b, a| a.dist(*b) <= CLIP_EPS);
    while poly.len() > 1 && poly[0].dist(poly[poly.len() - 1]) <= CLIP_EPS {
        poly.pop();
    }
}

fn check_convex_input(poly: &[Point], name: &str) -> Result<(), GeometryError> {
    if poly.len() < 3 {
        return Err(GeometryError::DegenerateInput(format!(
            "{name} has {} vertices",
            poly.len()
        )));
    }
    let area = polygon_area(poly);
    if area.is_nan() || area < AREA_EPS {
        return Err(GeometryError::DegenerateInput(format!(
            "{name} has area {area:e}"
        )));
    }
    Ok(())
}

/// Intersection of two convex CCW polygons. An empty vector means no
/// overlap of positive area.
pub fn convex_intersection(a: &[Point], b: &[Point]) -> Result<Vec<Point>, GeometryError> {
    check_convex_input(a, "subject")?;
    check_convex_input(b, "clip")?;
    Ok(clip_convex(a, b))
}

fn clip_convex(a: &[Point], b: &[Point]) -> Vec<Point> {
    let mut result = a.to_vec();
    let n = b.len();
    for i in 0..n {
        result = clip_halfplane(&result, b[i], b[(i + 1) % n]);
        if result.len() < 3 {
            return Vec::new();
        }
    }
    dedup_ring(&mut result);
    if result.len() < 3 || polygon_area(&result) < AREA_EPS {
        return Vec::new();
    }
    result
}

/// Overlap of two footprints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub intersection_area: f64,
    pub iou: f64,
}

/// Computes intersection area and IoU. The arguments are put into a fixed
/// order first, so swapping them gives a bit-identical result, and all
/// coordinates are taken relative to the first rectangle's center.
pub fn footprint_overlap(a: &FootprintRect, b: &FootprintRect) -> Overlap {
    let (a, b) = if corner_order(a, b).is_gt() {
        (b, a)
    } else {
        (a, b)
    };
    let origin = a.center();
    let la: Vec<Point> = a.corners.iter().map(|&p| p - origin).collect();
    let lb: Vec<Point> = b.corners.iter().map(|&p| p - origin).collect();
    let inter = clip_convex(&la, &lb);
    if inter.is_empty() {
        return Overlap {
            intersection_area: 0.0,
            iou: 0.0,
        };
    }
    let area_a = polygon_area(&la);
    let area_b = polygon_area(&lb);
    let intersection_area = polygon_area(&inter).min(area_a).min(area_b);
    let union = area_a + area_b - intersection_area;
    Overlap {
        intersection_area,
        iou: (intersection_area / union).clamp(0.0, 1.0),
    }
}

pub fn footprint_iou(a: &FootprintRect, b: &FootprintRect) -> f64 {
    footprint_overlap(a, b).iou
}

fn corner_order(a: &FootprintRect, b: &FootprintRect) -> std::cmp::Ordering {
    for (p, q) in a.corners.iter().zip(&b.corners) {
        let ord = p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y));
        if ord.is_ne() {
            return ord;
        }
    }
    a.source_pose.cmp(&b.source_pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn sq(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ]
    }

    fn pose(x: f64, y: f64, yaw: f64) -> Pose {
        Pose::new("l", 0, 0.0, x, y, yaw)
    }

    fn assert_corners(rect: &FootprintRect, expected: [(f64, f64); 4]) {
        for (c, e) in rect.corners.iter().zip(expected) {
            assert!(
                (c.x - e.0).abs() < 1e-12 && (c.y - e.1).abs() < 1e-12,
                "{c:?} vs {e:?}"
            );
        }
    }

    #[test]
    fn footprint_axis_aligned() {
        let r = footprint(&pose(0.0, 0.0, 0.0), &FootprintConfig::new(15.0, 30.0).unwrap());
        assert_corners(&r, [(30.0, 15.0), (-30.0, 15.0), (-30.0, -15.0), (30.0, -15.0)]);
    }

    #[test]
    fn footprint_quarter_turn() {
        let r = footprint(
            &pose(0.0, 0.0, FRAC_PI_2),
            &FootprintConfig::new(15.0, 30.0).unwrap(),
        );
        assert_corners(&r, [(-15.0, 30.0), (-15.0, -30.0), (15.0, -30.0), (15.0, 30.0)]);
    }

    #[test]
    fn footprint_translated() {
        let r = footprint(&pose(10.0, 5.0, 0.0), &FootprintConfig::new(1.0, 1.0).unwrap());
        assert_corners(&r, [(11.0, 6.0), (9.0, 6.0), (9.0, 4.0), (11.0, 4.0)]);
        assert!((r.area() - 4.0).abs() < 1e-12);
        assert!(signed_area(&r.corners) > 0.0, "corners must be CCW");
    }

    #[test]
    fn invalid_config() {
        assert!(FootprintConfig::new(0.0, 1.0).is_err());
        assert!(FootprintConfig::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn area_examples() {
        assert_eq!(polygon_area(&sq(0.0, 0.0, 1.0, 1.0)), 1.0);
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert_eq!(polygon_area(&tri), 0.5);
        let mut rev = tri;
        rev.reverse();
        assert_eq!(polygon_area(&rev), 0.5);
    }

    #[test]
    fn intersection_idempotent() {
        let a = sq(0.0, 0.0, 1.0, 1.0);
        let r = convex_intersection(&a, &a).unwrap();
        assert!((polygon_area(&r) - 1.0).abs() < 1e-12);
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn intersection_disjoint() {
        let r = convex_intersection(&sq(0.0, 0.0, 1.0, 1.0), &sq(2.0, 0.0, 3.0, 1.0)).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn intersection_half_overlap() {
        let r = convex_intersection(&sq(0.0, 0.0, 1.0, 1.0), &sq(0.5, 0.0, 1.5, 1.0)).unwrap();
        assert!((polygon_area(&r) - 0.5).abs() < 1e-12);
        for p in &r {
            assert!(p.x >= 0.5 - 1e-9 && p.x <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn touching_squares_have_no_overlap() {
        let r = convex_intersection(&sq(0.0, 0.0, 1.0, 1.0), &sq(1.0, 0.0, 2.0, 1.0)).unwrap();
        assert!(r.is_empty());
        let r = convex_intersection(&sq(0.0, 0.0, 1.0, 1.0), &sq(1.0, 1.0, 2.0, 2.0)).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn degenerate_inputs() {
        let a = sq(0.0, 0.0, 1.0, 1.0);
        let two = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(matches!(
            convex_intersection(&two, &a),
            Err(GeometryError::DegenerateInput(_))
        ));
        let flat = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        assert!(matches!(
            convex_intersection(&a, &flat),
            Err(GeometryError::DegenerateInput(_))
        ));
    }

    #[test]
    fn iou_examples() {
        let cfg = FootprintConfig::new(0.5, 0.5).unwrap();
        let a = footprint(&pose(0.5, 0.5, 0.0), &cfg);
        assert!((footprint_iou(&a, &a) - 1.0).abs() < 1e-12);
        let b = footprint(&pose(1.0, 0.5, 0.0), &cfg);
        assert!((footprint_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
        let c = footprint(&pose(5.0, 0.5, 0.0), &cfg);
        assert_eq!(footprint_iou(&a, &c), 0.0);
    }

    #[test]
    fn iou_far_from_origin() {
        let cfg = FootprintConfig::default();
        let a = footprint(&pose(4.0e5, -3.0e6, 0.3), &cfg);
        let b = footprint(&pose(4.0e5 + 20.0 * 0.3f64.cos(), -3.0e6 + 20.0 * 0.3f64.sin(), 0.3), &cfg);
        assert!((footprint_iou(&a, &b) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn contains_boundary() {
        let r = footprint(&pose(0.0, 0.0, 0.0), &FootprintConfig::new(1.0, 2.0).unwrap());
        assert!(r.contains(Point::new(2.0, 1.0)));
        assert!(r.contains(Point::new(0.0, 0.0)));
        assert!(!r.contains(Point::new(2.0 + 1e-6, 0.0)));
    }
}
