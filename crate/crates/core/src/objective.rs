//! Training objective: token cross-entropy plus a supervised span contrastive
//! term with hard-negative amplification.
//!
//! For an anchor span `i` with positives `P(i)` (same label, `j ≠ i`) and
//! logits `ℓ_ij = z_i·z_j / τ`:
//!
//! ```text
//! L_reg(i)  = −log Σ_{p∈P(i)} e^ℓip / Σ_{j≠i} e^ℓij
//! L_hard(i) = −log Σ_{p∈P(i)} e^ℓip / (Σ_{j≠i} e^ℓij + Σ_{j∈TopK(i)} e^ℓij)
//! L(i)      = ½ L_reg(i) + ½ L_hard(i)
//! ```
//!
//! `TopK(i)` holds the `k` most similar spans with a different label. The span
//! loss averages `L(i)` over anchors that have at least one positive and is 0
//! when there are none.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Matrix, NodeId};
use crate::error::{Error, Result};
use crate::spans::Span;

/// Weight a selected hard negative receives in the hard denominator: it is
/// counted once as an ordinary negative and once more as a hard one.
pub const HARD_NEGATIVE_WEIGHT: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub normalize_spans: bool,
    pub lambda_span: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            temperature: 0.07,
            top_k: 5,
            normalize_spans: true,
            lambda_span: 0.0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if !(self.lambda_span >= 0.0 && self.lambda_span.is_finite()) {
            return Err(Error::Config(format!("lambda_span must be >= 0, got {}", self.lambda_span)));
        }
        Ok(())
    }
}

/// Span embeddings of one minibatch with their class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanBatch {
    pub embeddings: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub spans: Vec<Span>,
}

impl SpanBatch {
    pub fn new(embeddings: Vec<Vec<f64>>, labels: Vec<String>, spans: Vec<Span>) -> Result<Self> {
        if embeddings.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} span embeddings but {} labels",
                embeddings.len(),
                labels.len()
            )));
        }
        if !spans.is_empty() && spans.len() != labels.len() {
            return Err(Error::Shape(format!("{} spans but {} labels", spans.len(), labels.len())));
        }
        if let Some(d) = embeddings.first().map(Vec::len) {
            if embeddings.iter().any(|z| z.len() != d) {
                return Err(Error::Shape("span embeddings differ in dimension".into()));
            }
        }
        if embeddings.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("span embeddings must be finite".into()));
        }
        Ok(SpanBatch {
            embeddings,
            labels,
            spans,
        })
    }

    /// Batch without provenance, for tests and analysis.
    pub fn from_parts(embeddings: Vec<Vec<f64>>, labels: &[&str]) -> Result<Self> {
        Self::new(embeddings, labels.iter().map(|s| s.to_string()).collect(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub slot: f64,
    pub span_reg: f64,
    pub span_hard: f64,
    pub span: f64,
    pub total: f64,
    pub eligible_anchors: usize,
}

/// Mean cross-entropy over unmasked rows of `logits` (`positions × labels`).
pub fn slot_loss(logits: &Matrix, gold: &[usize], mask: &[bool]) -> Result<f64> {
    slot_loss_and_grad(logits, gold, mask).map(|(v, _)| v)
}

/// Slot loss and its gradient with respect to the logits.
pub fn slot_loss_and_grad(logits: &Matrix, gold: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    if gold.len() != logits.rows || mask.len() != logits.rows {
        return Err(Error::Shape(format!(
            "{} logit rows, {} gold labels, {} mask entries",
            logits.rows,
            gold.len(),
            mask.len()
        )));
    }
    if let Some(&g) = gold.iter().find(|&&g| g >= logits.cols) {
        return Err(Error::Shape(format!("gold label {g} outside {} classes", logits.cols)));
    }
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::InvalidInput("slot loss needs at least one supervised position".into()));
    }
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut total = 0.0;
    for r in (0..logits.rows).filter(|&r| mask[r]) {
        let row = logits.row(r);
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[gold[r]];
        for (c, g) in grad.row_mut(r).iter_mut().enumerate() {
            let p = (row[c] - lse).exp();
            *g = (p - f64::from(u8::from(c == gold[r]))) / count as f64;
        }
    }
    Ok((total / count as f64, grad))
}

/// `ℓ_ij = z_i·z_j / τ` over the batch embeddings as given.
pub fn similarity_logits(batch: &SpanBatch, temperature: f64) -> Matrix {
    logits_of(&batch.embeddings, temperature)
}

fn logits_of(z: &[Vec<f64>], temperature: f64) -> Matrix {
    let n = z.len();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = crate::autodiff::dot(&z[i], &z[j]) / temperature;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-anchor `L_reg`; `None` marks anchors without a positive.
pub fn span_contrastive_regular(logits: &Matrix, labels: &[String]) -> Vec<Option<f64>> {
    (0..labels.len())
        .map(|i| anchor_terms(logits, labels, i, &[]).map(|t| t.denom - t.pos))
        .collect()
}

/// Up to `k` highest-similarity spans with a different label per anchor,
/// ties broken by lower index.
pub fn topk_hard_negatives(logits: &Matrix, labels: &[String], k: usize) -> Vec<Vec<usize>> {
    (0..labels.len())
        .map(|i| {
            let mut neg: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != labels[i]).collect();
            neg.sort_by(|&a, &b| logits.get(i, b).total_cmp(&logits.get(i, a)).then(a.cmp(&b)));
            neg.truncate(k);
            neg
        })
        .collect()
}

/// Per-anchor `L_hard`; `None` marks anchors without a positive.
pub fn span_contrastive_hard(logits: &Matrix, labels: &[String], k: usize) -> Vec<Option<f64>> {
    let hard = topk_hard_negatives(logits, labels, k);
    (0..labels.len())
        .map(|i| anchor_terms(logits, labels, i, &hard[i]).map(|t| t.denom - t.pos))
        .collect()
}

/// Log numerator and log denominator for one anchor; `hard` lists spans whose
/// term is counted [`HARD_NEGATIVE_WEIGHT`] times.
struct AnchorTerms {
    pos: f64,
    denom: f64,
}

fn weight(j: usize, hard: &[usize]) -> f64 {
    if hard.contains(&j) {
        HARD_NEGATIVE_WEIGHT
    } else {
        1.0
    }
}

fn anchor_terms(logits: &Matrix, labels: &[String], i: usize, hard: &[usize]) -> Option<AnchorTerms> {
    let n = labels.len();
    let row = logits.row(i);
    let positives = (0..n).filter(|&j| j != i && labels[j] == labels[i]);
    if positives.clone().next().is_none() {
        return None;
    }
    let pos = log_sum_exp(positives.map(|j| row[j]));
    let denom = log_sum_exp((0..n).filter(|&j| j != i).map(|j| row[j] + weight(j, hard).ln()));
    Some(AnchorTerms { pos, denom })
}

/// Result of the span contrastive objective on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanLoss {
    /// Mean of `½L_reg + ½L_hard` over eligible anchors (0 if none).
    pub value: f64,
    pub reg: f64,
    pub hard: f64,
    pub eligible: usize,
    pub per_anchor: Vec<Option<f64>>,
}

impl SpanLoss {
    fn empty(n: usize) -> Self {
        SpanLoss {
            value: 0.0,
            reg: 0.0,
            hard: 0.0,
            eligible: 0,
            per_anchor: vec![None; n],
        }
    }
}

fn normalized(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    z.iter()
        .map(|v| {
            let norm = crate::autodiff::dot(v, v).sqrt();
            if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                v.clone()
            }
        })
        .collect()
}

/// Span contrastive loss, normalizing the embeddings first if configured.
pub fn span_contrastive_loss(batch: &SpanBatch, cfg: &ContrastiveConfig) -> SpanLoss {
    let z = if cfg.normalize_spans {
        normalized(&batch.embeddings)
    } else {
        batch.embeddings.clone()
    };
    span_loss_and_grad(&z, &batch.labels, cfg).0
}

/// Loss and `∂L/∂Z` for embeddings used exactly as given (no normalization).
/// Hard-negative membership is treated as fixed when differentiating.
pub fn span_loss_and_grad(z: &[Vec<f64>], labels: &[String], cfg: &ContrastiveConfig) -> (SpanLoss, Matrix) {
    let n = labels.len();
    let d = z.first().map_or(0, Vec::len);
    let mut grad_z = Matrix::zeros(n, d);
    if n < 2 {
        return (SpanLoss::empty(n), grad_z);
    }
    let logits = logits_of(z, cfg.temperature);
    let hard = topk_hard_negatives(&logits, labels, cfg.top_k);

    let mut out = SpanLoss::empty(n);
    // ∂L/∂ℓ, filled per anchor row then scaled by 1/eligible
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let (Some(reg), Some(hrd)) = (
            anchor_terms(&logits, labels, i, &[]),
            anchor_terms(&logits, labels, i, &hard[i]),
        ) else {
            continue;
        };
        let l_reg = reg.denom - reg.pos;
        let l_hard = hrd.denom - hrd.pos;
        out.per_anchor[i] = Some(0.5 * l_reg + 0.5 * l_hard);
        out.reg += l_reg;
        out.hard += l_hard;
        out.eligible += 1;
        let row = logits.row(i);
        for j in (0..n).filter(|&j| j != i) {
            let positive = if labels[j] == labels[i] {
                (row[j] - reg.pos).exp()
            } else {
                0.0
            };
            let d_reg = (row[j] - reg.denom).exp() - positive;
            let d_hard = weight(j, &hard[i]) * (row[j] - hrd.denom).exp() - positive;
            g.set(i, j, 0.5 * (d_reg + d_hard));
        }
    }
    if out.eligible == 0 {
        return (out, grad_z);
    }
    let e = out.eligible as f64;
    out.reg /= e;
    out.hard /= e;
    out.value = 0.5 * out.reg + 0.5 * out.hard;
    // ℓ_ij = z_i·z_j/τ  ⇒  ∂L/∂Z = (G + Gᵀ) Z / (τ·E)
    let scale = 1.0 / (cfg.temperature * e);
    for i in 0..n {
        for j in 0..n {
            let gij = (g.get(i, j) + g.get(j, i)) * scale;
            if gij != 0.0 {
                for (dst, src) in grad_z.row_mut(i).iter_mut().zip(&z[j]) {
                    *dst += gij * src;
                }
            }
        }
    }
    (out, grad_z)
}

/// `slot + λ·span`.
pub fn total_loss(slot: f64, span: f64, lambda_span: f64) -> f64 {
    debug_assert!(lambda_span >= 0.0);
    slot + lambda_span * span
}

/// Slot loss as a tape node over `logits` (`positions × labels`).
pub fn slot_loss_node(g: &mut Graph, logits: NodeId, gold: &[usize], mask: &[bool]) -> Result<(NodeId, f64)> {
    let (value, grad) = slot_loss_and_grad(g.value(logits), gold, mask)?;
    Ok((g.scalar_fn(logits, value, grad), value))
}

/// Span contrastive loss as a tape node over span embeddings `z`
/// (`spans × d`), normalized on the tape if configured.
pub fn span_loss_node(g: &mut Graph, z: NodeId, labels: &[String], cfg: &ContrastiveConfig) -> (NodeId, SpanLoss) {
    let z = if cfg.normalize_spans { g.l2_normalize_rows(z) } else { z };
    let rows = g.value(z).to_rows();
    let (loss, grad) = span_loss_and_grad(&rows, labels, cfg);
    (g.scalar_fn(z, loss.value, grad), loss)
}

/// Builds `slot + λ·span` on the tape. With `λ = 0` the span term is skipped
/// and reported as zero.
pub fn total_loss_node(
    g: &mut Graph,
    logits: NodeId,
    gold: &[usize],
    mask: &[bool],
    spans: Option<(NodeId, &[String])>,
    cfg: &ContrastiveConfig,
) -> Result<(NodeId, LossBreakdown)> {
    let (slot_node, slot) = slot_loss_node(g, logits, gold, mask)?;
    let mut out = LossBreakdown {
        slot,
        total: slot,
        ..LossBreakdown::default()
    };
    let root = match spans {
        Some((z, labels)) if cfg.lambda_span > 0.0 && labels.len() >= 2 => {
            let (span_node, loss) = span_loss_node(g, z, labels, cfg);
            out.span_reg = loss.reg;
            out.span_hard = loss.hard;
            out.span = loss.value;
            out.eligible_anchors = loss.eligible;
            out.total = total_loss(slot, loss.value, cfg.lambda_span);
            g.weighted_sum(&[(slot_node, 1.0), (span_node, cfg.lambda_span)])
        }
        _ => slot_node,
    };
    Ok((root, out))
}
