//! Projection head, cosine similarity and the geospatial InfoNCE loss with
//! analytic gradients.
//!
//! All reductions run sequentially in index order so results are bit-stable
//! across runs and thread counts.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTau(f64),
    #[error("loss weights must be finite and >= 0, got ({0}, {1})")]
    InvalidWeight(f64, f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("loss became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, ContrastiveError>;

/// Row-major `rows x dim` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub rows: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(ContrastiveError::ShapeMismatch("dim must be >= 1".into()));
        }
        if values.len() != rows * dim {
            return Err(ContrastiveError::ShapeMismatch(format!(
                "{} values for a {rows}x{dim} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ContrastiveError::NonFinite("embedding matrix"));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            values: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(ContrastiveError::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Stacks matrices of equal width vertically.
    pub fn vstack(parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let dim = parts.first().map_or(1, |m| m.dim);
        if parts.iter().any(|m| m.dim != dim) {
            return Err(ContrastiveError::ShapeMismatch("vstack width mismatch".into()));
        }
        let rows = parts.iter().map(|m| m.rows).sum();
        let values = parts.iter().flat_map(|m| m.values.iter().copied()).collect();
        Ok(Self { rows, dim, values })
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            dim: self.dim,
            values: self.values[start * self.dim..end * self.dim].to_vec(),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-layer MLP `z = W2 relu(W1 f + b1) + b2`. Weights are stored
/// output-major: `w1[h * dim_in + i]` maps input `i` to hidden unit `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub dim_in: usize,
    pub dim_hidden: usize,
    pub dim_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ProjectionHead {
    pub fn zeros(dim_in: usize, dim_hidden: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_hidden,
            dim_out,
            w1: vec![0.0; dim_in * dim_hidden],
            b1: vec![0.0; dim_hidden],
            w2: vec![0.0; dim_hidden * dim_out],
            b2: vec![0.0; dim_out],
        }
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn seeded(dim_in: usize, dim_hidden: usize, dim_out: usize, seed: u64) -> Self {
        let mut h = Self::zeros(dim_in, dim_hidden, dim_out);
        let mut rng = SeededRng::new(seed);
        let b1 = 1.0 / (dim_in as f64).sqrt();
        let b2 = 1.0 / (dim_hidden as f64).sqrt();
        h.w1.iter_mut().chain(h.b1.iter_mut()).for_each(|w| *w = rng.uniform_in(-b1, b1));
        h.w2.iter_mut().chain(h.b2.iter_mut()).for_each(|w| *w = rng.uniform_in(-b2, b2));
        h
    }

    /// Default shape: hidden = input width, output = half of it (at least 1).
    pub fn with_default_dims(dim_in: usize, seed: u64) -> Self {
        Self::seeded(dim_in, dim_in, (dim_in / 2).max(1), seed)
    }

    pub fn identity(dim: usize) -> Self {
        let mut h = Self::zeros(dim, dim, dim);
        for i in 0..dim {
            h.w1[i * dim + i] = 1.0;
            h.w2[i * dim + i] = 1.0;
        }
        h
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flat parameter access in the order w1, b1, w2, b2.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for block in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            if idx < block.len() {
                return &mut block[idx];
            }
            idx -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn param(&self, idx: usize) -> f64 {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .nth(idx)
            .copied()
            .expect("parameter index out of range")
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.w1.len() == self.dim_in * self.dim_hidden
            && self.b1.len() == self.dim_hidden
            && self.w2.len() == self.dim_hidden * self.dim_out
            && self.b2.len() == self.dim_out
            && self.dim_in > 0
            && self.dim_hidden > 0
            && self.dim_out > 0;
        if !ok {
            return Err(ContrastiveError::ShapeMismatch("inconsistent head shapes".into()));
        }
        if self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).any(|v| !v.is_finite()) {
            return Err(ContrastiveError::NonFinite("projection head"));
        }
        Ok(())
    }

    /// `self -= lr * grad`, element-wise.
    pub fn step(&mut self, grad: &ProjectionHead, lr: f64) {
        for (w, g) in self
            .w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
            .zip(grad.w1.iter().chain(&grad.b1).chain(&grad.w2).chain(&grad.b2))
        {
            *w -= lr * g;
        }
    }
}

/// Forward pass with the hidden pre-activations kept for backprop.
struct HeadCache {
    pre: Vec<f64>,
    out: EmbeddingMatrix,
}

fn head_forward(h: &ProjectionHead, f: &EmbeddingMatrix) -> Result<HeadCache> {
    if f.dim != h.dim_in {
        return Err(ContrastiveError::ShapeMismatch(format!(
            "input width {} but head expects {}",
            f.dim, h.dim_in
        )));
    }
    let mut pre = vec![0.0; f.rows * h.dim_hidden];
    let mut out = EmbeddingMatrix::zeros(f.rows, h.dim_out);
    let mut act = vec![0.0; h.dim_hidden];
    for r in 0..f.rows {
        let x = f.row(r);
        for k in 0..h.dim_hidden {
            let a = h.b1[k] + dot(&h.w1[k * h.dim_in..(k + 1) * h.dim_in], x);
            pre[r * h.dim_hidden + k] = a;
            act[k] = a.max(0.0);
        }
        let z = out.row_mut(r);
        for (o, zo) in z.iter_mut().enumerate() {
            *zo = h.b2[o] + dot(&h.w2[o * h.dim_hidden..(o + 1) * h.dim_hidden], &act);
        }
    }
    Ok(HeadCache { pre, out })
}

/// Accumulates parameter gradients into `grad` and returns the gradient
/// with respect to the head input.
fn head_backward(
    h: &ProjectionHead,
    f: &EmbeddingMatrix,
    cache: &HeadCache,
    dz: &EmbeddingMatrix,
    grad: &mut ProjectionHead,
) -> EmbeddingMatrix {
    let mut df = EmbeddingMatrix::zeros(f.rows, h.dim_in);
    let mut da = vec![0.0; h.dim_hidden];
    for r in 0..f.rows {
        let x = f.row(r);
        let pre = &cache.pre[r * h.dim_hidden..(r + 1) * h.dim_hidden];
        let g = dz.row(r);
        da.iter_mut().for_each(|v| *v = 0.0);
        for (o, &go) in g.iter().enumerate() {
            grad.b2[o] += go;
            for k in 0..h.dim_hidden {
                grad.w2[o * h.dim_hidden + k] += go * pre[k].max(0.0);
                da[k] += go * h.w2[o * h.dim_hidden + k];
            }
        }
        let dx = df.row_mut(r);
        for k in 0..h.dim_hidden {
            if pre[k] <= 0.0 {
                continue;
            }
            grad.b1[k] += da[k];
            for i in 0..h.dim_in {
                grad.w1[k * h.dim_in + i] += da[k] * x[i];
                dx[i] += da[k] * h.w1[k * h.dim_in + i];
            }
        }
    }
    df
}

pub fn project(h: &ProjectionHead, f: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    Ok(head_forward(h, f)?.out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSim {
    pub value: f64,
    /// Set when either vector has zero norm; `value` is then 0.
    pub degenerate: bool,
}

pub fn cosine_sim(u: &[f64], v: &[f64]) -> CosineSim {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return CosineSim {
            value: 0.0,
            degenerate: true,
        };
    }
    CosineSim {
        value: (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// Per-anchor InfoNCE from raw similarities, stabilized by subtracting the
/// largest logit.
pub fn info_nce(pos_sim: f64, neg_sims: &[f64], tau: f64) -> f64 {
    let s0 = pos_sim / tau;
    let m = neg_sims.iter().map(|s| s / tau).fold(s0, f64::max);
    if m == s0 {
        let tail: f64 = neg_sims.iter().map(|s| libm::exp(s / tau - s0)).sum();
        libm::log1p(tail)
    } else {
        let sum: f64 = libm::exp(s0 - m) + neg_sims.iter().map(|s| libm::exp(s / tau - m)).sum::<f64>();
        (m - s0) + libm::log(sum)
    }
}

/// Softmax weights over `[pos, negs...]` logits.
fn softmax_weights(pos_sim: f64, neg_sims: &[f64], tau: f64, out: &mut Vec<f64>) {
    let s0 = pos_sim / tau;
    let m = neg_sims.iter().map(|s| s / tau).fold(s0, f64::max);
    out.clear();
    out.push(libm::exp(s0 - m));
    out.extend(neg_sims.iter().map(|s| libm::exp(s / tau - m)));
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|w| *w /= total);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    /// Every anchor is contrasted against all negative rows.
    #[default]
    Shared,
    /// Negatives hold `K` consecutive rows per anchor.
    PerAnchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub total: f64,
    pub per_anchor: Vec<f64>,
    /// Number of similarity evaluations that hit a zero-norm row.
    pub degenerate: usize,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(ContrastiveError::NonPositiveTau(tau))
    }
}

/// Negative row range for anchor `i`.
fn negatives_per_anchor(
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    mode: NegativeMode,
) -> Result<usize> {
    if anchors.dim != positives.dim || anchors.dim != negatives.dim {
        return Err(ContrastiveError::ShapeMismatch("embedding widths differ".into()));
    }
    if anchors.rows != positives.rows {
        return Err(ContrastiveError::ShapeMismatch(format!(
            "{} anchors but {} positives",
            anchors.rows, positives.rows
        )));
    }
    let k = match mode {
        NegativeMode::Shared => negatives.rows,
        NegativeMode::PerAnchor => {
            if anchors.rows == 0 || !negatives.rows.is_multiple_of(anchors.rows) {
                return Err(ContrastiveError::ShapeMismatch(format!(
                    "{} negatives do not split evenly over {} anchors",
                    negatives.rows, anchors.rows
                )));
            }
            negatives.rows / anchors.rows
        }
    };
    if k == 0 {
        return Err(ContrastiveError::ShapeMismatch("need at least one negative".into()));
    }
    Ok(k)
}

fn neg_start(mode: NegativeMode, i: usize, k: usize) -> usize {
    match mode {
        NegativeMode::Shared => 0,
        NegativeMode::PerAnchor => i * k,
    }
}

/// Sum over anchors of the per-anchor InfoNCE loss on cosine similarities.
pub fn gclr_loss(
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    tau: f64,
    mode: NegativeMode,
) -> Result<LossOutput> {
    check_tau(tau)?;
    let k = negatives_per_anchor(anchors, positives, negatives, mode)?;
    let mut degenerate = 0;
    let mut sims = Vec::with_capacity(k);
    let mut per_anchor = Vec::with_capacity(anchors.rows);
    for i in 0..anchors.rows {
        let a = anchors.row(i);
        let pos = cosine_sim(a, positives.row(i));
        degenerate += pos.degenerate as usize;
        sims.clear();
        let start = neg_start(mode, i, k);
        for j in start..start + k {
            let s = cosine_sim(a, negatives.row(j));
            degenerate += s.degenerate as usize;
            sims.push(s.value);
        }
        per_anchor.push(info_nce(pos.value, &sims, tau));
    }
    Ok(LossOutput {
        total: per_anchor.iter().sum(),
        per_anchor,
        degenerate,
    })
}

/// Adds `coef * d cos(u, v) / du` to `gu` and `coef * d cos(u, v) / dv` to `gv`.
fn accumulate_cos_grad(u: &[f64], v: &[f64], coef: f64, gu: &mut [f64], gv: &mut [f64]) {
    let nu = norm(u);
    let nv = norm(v);
    if nu == 0.0 || nv == 0.0 {
        return;
    }
    let inv = 1.0 / (nu * nv);
    let c = dot(u, v) * inv;
    for d in 0..u.len() {
        gu[d] += coef * (v[d] * inv - c * u[d] / (nu * nu));
        gv[d] += coef * (u[d] * inv - c * v[d] / (nv * nv));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrads {
    pub loss: LossOutput,
    pub anchors: EmbeddingMatrix,
    pub positives: EmbeddingMatrix,
    pub negatives: EmbeddingMatrix,
}

/// Loss and its gradient with respect to the three embedding matrices.
pub fn gclr_grad_embeddings(
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    tau: f64,
    mode: NegativeMode,
) -> Result<EmbeddingGrads> {
    let loss = gclr_loss(anchors, positives, negatives, tau, mode)?;
    let k = negatives_per_anchor(anchors, positives, negatives, mode)?;
    let mut ga = EmbeddingMatrix::zeros(anchors.rows, anchors.dim);
    let mut gp = EmbeddingMatrix::zeros(positives.rows, positives.dim);
    let mut gn = EmbeddingMatrix::zeros(negatives.rows, negatives.dim);
    let mut sims = Vec::with_capacity(k);
    let mut w = Vec::with_capacity(k + 1);
    for i in 0..anchors.rows {
        let a = anchors.row(i);
        let pos = cosine_sim(a, positives.row(i)).value;
        let start = neg_start(mode, i, k);
        sims.clear();
        sims.extend((start..start + k).map(|j| cosine_sim(a, negatives.row(j)).value));
        softmax_weights(pos, &sims, tau, &mut w);
        // dL/dsim_pos = (w0 - 1)/tau, dL/dsim_neg_k = w_k/tau.
        accumulate_cos_grad(a, positives.row(i), (w[0] - 1.0) / tau, ga.row_mut(i), gp.row_mut(i));
        for (off, j) in (start..start + k).enumerate() {
            let coef = w[off + 1] / tau;
            accumulate_cos_grad(a, negatives.row(j), coef, ga.row_mut(i), gn.row_mut(j));
        }
    }
    Ok(EmbeddingGrads {
        loss,
        anchors: ga,
        positives: gp,
        negatives: gn,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineGrads {
    pub loss: LossOutput,
    /// Gradients with respect to the head inputs.
    pub anchors: EmbeddingMatrix,
    pub positives: EmbeddingMatrix,
    pub negatives: EmbeddingMatrix,
    /// Parameter gradients, shaped like the head.
    pub head: ProjectionHead,
}

/// Loss of the composed project, normalize, InfoNCE pipeline on features.
pub fn pipeline_loss(
    head: &ProjectionHead,
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    tau: f64,
    mode: NegativeMode,
) -> Result<LossOutput> {
    gclr_loss(
        &project(head, anchors)?,
        &project(head, positives)?,
        &project(head, negatives)?,
        tau,
        mode,
    )
}

/// Analytic gradients of [`pipeline_loss`] with respect to the features and
/// the head parameters.
pub fn gclr_grad(
    head: &ProjectionHead,
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    tau: f64,
    mode: NegativeMode,
) -> Result<PipelineGrads> {
    head.validate()?;
    let ca = head_forward(head, anchors)?;
    let cp = head_forward(head, positives)?;
    let cn = head_forward(head, negatives)?;
    let gz = gclr_grad_embeddings(&ca.out, &cp.out, &cn.out, tau, mode)?;
    let mut gh = ProjectionHead::zeros(head.dim_in, head.dim_hidden, head.dim_out);
    let ga = head_backward(head, anchors, &ca, &gz.anchors, &mut gh);
    let gp = head_backward(head, positives, &cp, &gz.positives, &mut gh);
    let gn = head_backward(head, negatives, &cn, &gz.negatives, &mut gh);
    Ok(PipelineGrads {
        loss: gz.loss,
        anchors: ga,
        positives: gp,
        negatives: gn,
        head: gh,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda_sup: f64,
    pub lambda_gclr: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            lambda_sup: 1.0,
            lambda_gclr: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        check_tau(self.tau)?;
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.lambda_sup) || !ok(self.lambda_gclr) {
            return Err(ContrastiveError::InvalidWeight(self.lambda_sup, self.lambda_gclr));
        }
        Ok(())
    }
}

pub fn combine_losses(l_sup: f64, l_gclr: f64, cfg: &LossConfig) -> f64 {
    cfg.lambda_sup * l_sup + cfg.lambda_gclr * l_gclr
}

/// Relative error floor for gradient checks: entries whose magnitude is
/// below it are compared on an absolute scale.
pub const GRAD_REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates skipped because the probe moved a ReLU input across 0.
    pub skipped_kinks: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Description of the coordinate with the largest relative error.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

fn relu_pattern(head: &ProjectionHead, mats: [&EmbeddingMatrix; 3]) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for m in mats {
        out.extend(head_forward(head, m)?.pre.iter().map(|&a| a > 0.0));
    }
    Ok(out)
}

/// Compares [`gclr_grad`] against central finite differences with step `h`
/// over every feature entry and head parameter.
pub fn gradcheck(
    head: &ProjectionHead,
    anchors: &EmbeddingMatrix,
    positives: &EmbeddingMatrix,
    negatives: &EmbeddingMatrix,
    tau: f64,
    mode: NegativeMode,
    h: f64,
) -> Result<GradCheckReport> {
    let analytic = gclr_grad(head, anchors, positives, negatives, tau, mode)?;
    let base = relu_pattern(head, [anchors, positives, negatives])?;
    let mut rep = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let record = |rep: &mut GradCheckReport, name: String, a: f64, n: f64| {
        let abs = (a - n).abs();
        let rel = abs / a.abs().max(n.abs()).max(GRAD_REL_FLOOR);
        rep.checked += 1;
        rep.max_abs_err = rep.max_abs_err.max(abs);
        if rel > rep.max_rel_err || rep.worst.is_empty() {
            rep.max_rel_err = rep.max_rel_err.max(rel);
            rep.worst = format!("{name}: analytic {a:e} numeric {n:e}");
        }
    };

    let mut probe = head.clone();
    for idx in 0..head.num_params() {
        let orig = head.param(idx);
        let mut eval = |delta: f64| -> Result<(f64, bool)> {
            *probe.param_mut(idx) = orig + delta;
            let loss = pipeline_loss(&probe, anchors, positives, negatives, tau, mode)?.total;
            let same = relu_pattern(&probe, [anchors, positives, negatives])? == base;
            Ok((loss, same))
        };
        let (lp, sp) = eval(h)?;
        let (lm, sm) = eval(-h)?;
        *probe.param_mut(idx) = orig;
        if !(sp && sm) {
            rep.skipped_kinks += 1;
            continue;
        }
        record(&mut rep, format!("head[{idx}]"), analytic.head.param(idx), (lp - lm) / (2.0 * h));
    }

    let grads = [&analytic.anchors, &analytic.positives, &analytic.negatives];
    let names = ["anchor", "positive", "negative"];
    let mut mats = [anchors.clone(), positives.clone(), negatives.clone()];
    for which in 0..3 {
        for idx in 0..mats[which].values.len() {
            let orig = mats[which].values[idx];
            let mut probe_at = |delta: f64| -> Result<(f64, bool)> {
                mats[which].values[idx] = orig + delta;
                let [a, p, n] = &mats;
                let loss = pipeline_loss(head, a, p, n, tau, mode)?.total;
                Ok((loss, relu_pattern(head, [a, p, n])? == base))
            };
            let (lp, sp) = probe_at(h)?;
            let (lm, sm) = probe_at(-h)?;
            mats[which].values[idx] = orig;
            if !(sp && sm) {
                rep.skipped_kinks += 1;
                continue;
            }
            record(
                &mut rep,
                format!("{}[{idx}]", names[which]),
                grads[which].values[idx],
                (lp - lm) / (2.0 * h),
            );
        }
    }
    Ok(rep)
}

pub const EMBEDDING_MAGIC: &[u8; 8] = b"GTEMBF64";

/// Writes `magic, u64 rows, u64 dim, rows*dim f64`, all little-endian.
pub fn write_embeddings(m: &EmbeddingMatrix, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(m.rows as u64).to_le_bytes())?;
    w.write_all(&(m.dim as u64).to_le_bytes())?;
    for v in &m.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embeddings(r: &mut impl Read) -> Result<EmbeddingMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 24 || &bytes[..8] != EMBEDDING_MAGIC {
        return Err(ContrastiveError::Format("missing header".into()));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let rows = usize::try_from(u64_at(8)).map_err(|_| ContrastiveError::Format("rows overflow".into()))?;
    let dim = usize::try_from(u64_at(16)).map_err(|_| ContrastiveError::Format("dim overflow".into()))?;
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| ContrastiveError::Format("shape overflow".into()))?;
    if bytes.len() - 24 != expected {
        return Err(ContrastiveError::Format(format!(
            "{} payload bytes for a {rows}x{dim} matrix",
            bytes.len() - 24
        )));
    }
    let values = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingMatrix::new(rows, dim, values)
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_embeddings(m, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    read_embeddings(&mut std::fs::File::open(path)?)
}
