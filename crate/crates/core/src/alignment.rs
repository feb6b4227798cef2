//! Desk-scale check that the contrastive objective aligns embeddings of
//! co-located BEV cells.
//!
//! Each cell observation is the scene's feature field at the cell center
//! plus light noise, concatenated with strong nuisance noise drawn
//! independently per observation. A linear encoder feeds the projection
//! head, and both are trained by full-batch gradient descent on the summed
//! InfoNCE loss averaged over anchors.

use serde::Serialize;
use thiserror::Error;

use crate::contrastive::{
    cosine_sim, gclr_grad, project, ContrastiveError, EmbeddingMatrix, NegativeMode,
    ProjectionHead,
};
use crate::correspondence::{
    cell_center_global, sample_pairs, BevGridSpec, CellRef, CorrespondenceError, PairBatch,
    SamplingConfig,
};
use crate::geometry::FootprintConfig;
use crate::pose_graph::{build_pose_graph, GraphError, DEFAULT_IOU_MAX, DEFAULT_IOU_MIN};
use crate::rng::SeededRng;
use crate::synth::Scene;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("scene has {available} reference-adjacent pairs, need {needed}")]
    NotEnoughPairs { needed: usize, available: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Correspondence(#[from] CorrespondenceError),
    #[error(transparent)]
    Contrastive(#[from] ContrastiveError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyConfig {
    pub steps: usize,
    pub lr: f64,
    pub tau: f64,
    pub pairs: usize,
    pub anchors_per_pair: usize,
    pub negatives_per_pair: usize,
    /// Std-dev of the noise added to the field part of an observation.
    pub signal_noise: f64,
    /// Width and std-dev of the nuisance part of an observation.
    pub nuisance_dim: usize,
    pub nuisance_std: f64,
    /// Number of final steps over which the loss must not increase.
    pub trailing_window: usize,
    pub grid: BevGridSpec,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 1e-2,
            tau: 0.1,
            pairs: 8,
            anchors_per_pair: 32,
            negatives_per_pair: 64,
            signal_noise: 0.05,
            nuisance_dim: 16,
            nuisance_std: 1.0,
            trailing_window: 50,
            grid: BevGridSpec::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyMetrics {
    pub pos_cos_mean: f64,
    pub neg_cos_mean: f64,
    pub initial_pos_cos_mean: f64,
    pub initial_neg_cos_mean: f64,
    /// Mean per-anchor loss before each step, then after the last one.
    pub loss_curve: Vec<f64>,
    pub trailing_non_increasing: bool,
}

/// Fixed observations for one reference-adjacent pair.
struct PairPool {
    anchors: EmbeddingMatrix,
    positives: EmbeddingMatrix,
    negatives: EmbeddingMatrix,
}

/// Linear encoder, `out x in`, row-major, no bias.
struct Encoder {
    dim_in: usize,
    dim_out: usize,
    w: Vec<f64>,
}

impl Encoder {
    fn seeded(dim_in: usize, dim_out: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (dim_in as f64).sqrt();
        let w = (0..dim_in * dim_out).map(|_| rng.uniform_in(-bound, bound)).collect();
        Self { dim_in, dim_out, w }
    }

    fn apply(&self, x: &EmbeddingMatrix) -> EmbeddingMatrix {
        let mut out = EmbeddingMatrix::zeros(x.rows, self.dim_out);
        for r in 0..x.rows {
            let xr = x.row(r);
            for (o, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = self.w[o * self.dim_in..(o + 1) * self.dim_in]
                    .iter()
                    .zip(xr)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        out
    }

    fn accumulate_grad(&self, x: &EmbeddingMatrix, df: &EmbeddingMatrix, grad: &mut [f64]) {
        for r in 0..x.rows {
            let xr = x.row(r);
            for (o, &g) in df.row(r).iter().enumerate() {
                for (gw, &xi) in grad[o * self.dim_in..(o + 1) * self.dim_in].iter_mut().zip(xr) {
                    *gw += g * xi;
                }
            }
        }
    }
}

fn observe(
    scene: &Scene,
    grid: &BevGridSpec,
    cells: &[CellRef],
    cfg: &ToyConfig,
    rng: &mut SeededRng,
) -> Result<EmbeddingMatrix, AlignmentError> {
    let dim = scene.field.dim + cfg.nuisance_dim;
    let mut m = EmbeddingMatrix::zeros(cells.len(), dim);
    for (r, c) in cells.iter().enumerate() {
        let pose = scene
            .dataset
            .pose(&c.pose)
            .expect("sampled cell belongs to the scene");
        let center = cell_center_global(pose, grid, c.row, c.col)?;
        let row = m.row_mut(r);
        scene.field.eval_into(center, &mut row[..scene.field.dim]);
        for v in &mut row[..scene.field.dim] {
            *v += cfg.signal_noise * rng.normal();
        }
        for v in &mut row[scene.field.dim..] {
            *v = cfg.nuisance_std * rng.normal();
        }
    }
    Ok(m)
}

/// Mean anchor-positive and anchor-negative cosine in the head output space.
fn cosine_stats(enc: &Encoder, head: &ProjectionHead, pools: &[PairPool]) -> Result<(f64, f64), AlignmentError> {
    let (mut pos, mut npos, mut neg, mut nneg) = (0.0, 0usize, 0.0, 0usize);
    for p in pools {
        let za = project(head, &enc.apply(&p.anchors))?;
        let zp = project(head, &enc.apply(&p.positives))?;
        let zn = project(head, &enc.apply(&p.negatives))?;
        for i in 0..za.rows {
            pos += cosine_sim(za.row(i), zp.row(i)).value;
            npos += 1;
            for j in 0..zn.rows {
                neg += cosine_sim(za.row(i), zn.row(j)).value;
                nneg += 1;
            }
        }
    }
    Ok((pos / npos as f64, neg / nneg as f64))
}

pub fn toy_alignment_experiment(scene: &Scene, cfg: &ToyConfig) -> Result<ToyMetrics, AlignmentError> {
    let footprint = FootprintConfig::default();
    let graph = build_pose_graph(&scene.dataset, &footprint, DEFAULT_IOU_MIN, DEFAULT_IOU_MAX, true)?;
    if graph.edges.len() < cfg.pairs {
        return Err(AlignmentError::NotEnoughPairs {
            needed: cfg.pairs,
            available: graph.edges.len(),
        });
    }
    let mut rng = SeededRng::new(cfg.seed);
    let edges = rng.sample_without_replacement(&graph.edges, cfg.pairs);
    let sampling = SamplingConfig {
        n_anchors: cfg.anchors_per_pair,
        n_negatives: cfg.negatives_per_pair,
        ..Default::default()
    };
    let mut pools = Vec::with_capacity(edges.len());
    for e in &edges {
        let (a, b) = graph.edge_keys(e);
        let ra = scene.dataset.pose(a).expect("graph vertex in dataset");
        let rb = scene.dataset.pose(b).expect("graph vertex in dataset");
        let batch: PairBatch = sample_pairs(ra, rb, &cfg.grid, &footprint, &sampling, rng.next_u64())?;
        pools.push(PairPool {
            anchors: observe(scene, &cfg.grid, &batch.anchors, cfg, &mut rng)?,
            positives: observe(scene, &cfg.grid, &batch.positives, cfg, &mut rng)?,
            negatives: observe(scene, &cfg.grid, &batch.negatives, cfg, &mut rng)?,
        });
    }

    let dim_in = scene.field.dim + cfg.nuisance_dim;
    let mut enc = Encoder::seeded(dim_in, scene.field.dim, &mut rng);
    let mut head = ProjectionHead::with_default_dims(scene.field.dim, rng.next_u64());
    let (initial_pos, initial_neg) = cosine_stats(&enc, &head, &pools)?;
    let n_anchors = (cfg.pairs * cfg.anchors_per_pair) as f64;

    let mut loss_curve = Vec::with_capacity(cfg.steps + 1);
    for step in 0..=cfg.steps {
        let mut loss = 0.0;
        let mut g_enc = vec![0.0; enc.w.len()];
        let mut g_head = ProjectionHead::zeros(head.dim_in, head.dim_hidden, head.dim_out);
        for p in &pools {
            let fa = enc.apply(&p.anchors);
            let fp = enc.apply(&p.positives);
            let fn_ = enc.apply(&p.negatives);
            let g = gclr_grad(&head, &fa, &fp, &fn_, cfg.tau, NegativeMode::Shared)?;
            loss += g.loss.total;
            enc.accumulate_grad(&p.anchors, &g.anchors, &mut g_enc);
            enc.accumulate_grad(&p.positives, &g.positives, &mut g_enc);
            enc.accumulate_grad(&p.negatives, &g.negatives, &mut g_enc);
            g_head.step(&g.head, -1.0);
        }
        let loss = loss / n_anchors;
        if !loss.is_finite() {
            return Err(ContrastiveError::Divergence { step }.into());
        }
        loss_curve.push(loss);
        if step == cfg.steps {
            break;
        }
        let scale = cfg.lr / n_anchors;
        for (w, g) in enc.w.iter_mut().zip(&g_enc) {
            *w -= scale * g;
        }
        head.step(&g_head, scale);
    }

    let (pos, neg) = cosine_stats(&enc, &head, &pools)?;
    let window = cfg.trailing_window.min(loss_curve.len());
    let tail = &loss_curve[loss_curve.len() - window..];
    Ok(ToyMetrics {
        pos_cos_mean: pos,
        neg_cos_mean: neg,
        initial_pos_cos_mean: initial_pos,
        initial_neg_cos_mean: initial_neg,
        trailing_non_increasing: tail.windows(2).all(|w| w[1] <= w[0]),
        loss_curve,
    })
}
