//! R-tree over footprint bounding boxes, used to generate candidate pairs
//! before the exact oriented-rectangle test.

use rayon::prelude::*;
use rstar::{RTree, RTreeObject, AABB};

use crate::geometry::FootprintRect;

#[derive(Debug, Clone, Copy)]
struct IndexedBox {
    idx: usize,
    lo: [f64; 2],
    hi: [f64; 2],
}

impl RTreeObject for IndexedBox {
    type Envelope = AABB<[f64; 2]>;

    fn envelope(&self) -> Self::Envelope {
        AABB::from_corners(self.lo, self.hi)
    }
}

pub struct FootprintIndex {
    tree: RTree<IndexedBox>,
    boxes: Vec<IndexedBox>,
}

impl FootprintIndex {
    pub fn build(rects: &[FootprintRect]) -> Self {
        let boxes: Vec<IndexedBox> = rects
            .iter()
            .enumerate()
            .map(|(idx, r)| {
                let (lo, hi) = r.aabb();
                IndexedBox {
                    idx,
                    lo: [lo.x, lo.y],
                    hi: [hi.x, hi.y],
                }
            })
            .collect();
        let tree = RTree::bulk_load(boxes.clone());
        Self { tree, boxes }
    }

    /// Indices whose boxes touch the box of `idx`, excluding `idx` itself.
    pub fn candidates(&self, idx: usize) -> Vec<usize> {
        let b = &self.boxes[idx];
        let env = AABB::from_corners(b.lo, b.hi);
        let mut out: Vec<usize> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .map(|o| o.idx)
            .filter(|&j| j != idx)
            .collect();
        out.sort_unstable();
        out
    }

    /// All unordered candidate pairs `(i, j)`, `i < j`, that pass `keep`,
    /// sorted. Evaluated in parallel over `i`.
    pub fn pairs_where<F>(&self, keep: F) -> Vec<(usize, usize)>
    where
        F: Fn(usize, usize) -> bool + Sync,
    {
        let mut out: Vec<(usize, usize)> = (0..self.boxes.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                let cands = self.candidates(i);
                let keep = &keep;
                cands
                    .into_iter()
                    .filter(move |&j| j > i && keep(i, j))
                    .map(move |j| (i, j))
            })
            .collect();
        out.sort_unstable();
        out
    }
}
