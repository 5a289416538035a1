//! Post-norm bidirectional transformer in the BERT layout.
//!
//! Parameter names follow `embeddings.*`, `layer.{i}.*` and `head.*` so a
//! BERT-format checkpoint maps onto them one to one.

use rand::Rng;

use super::params::{filled, uniform, xavier, Bound, ParamStore};
use super::EncoderConfig;
use crate::autodiff::{Graph, NodeId};

pub(crate) fn init_params(cfg: &EncoderConfig, vocab: usize, labels: usize, rng: &mut impl Rng) -> ParamStore {
    let d = cfg.hidden_size;
    let ff = cfg.intermediate_size;
    let mut p = ParamStore::new();
    p.insert("embeddings.word", uniform(vocab, d, 0.1, rng));
    p.insert("embeddings.position", uniform(cfg.max_len, d, 0.1, rng));
    p.insert("embeddings.token_type", uniform(1, d, 0.1, rng));
    p.insert("embeddings.ln.gamma", filled(1, d, 1.0));
    p.insert("embeddings.ln.beta", filled(1, d, 0.0));
    for l in 0..cfg.layers {
        for m in ["query", "key", "value", "attn_out"] {
            p.insert(format!("layer.{l}.{m}.weight"), xavier(d, d, rng));
            p.insert(format!("layer.{l}.{m}.bias"), filled(1, d, 0.0));
        }
        p.insert(format!("layer.{l}.attn_ln.gamma"), filled(1, d, 1.0));
        p.insert(format!("layer.{l}.attn_ln.beta"), filled(1, d, 0.0));
        p.insert(format!("layer.{l}.ff_in.weight"), xavier(d, ff, rng));
        p.insert(format!("layer.{l}.ff_in.bias"), filled(1, ff, 0.0));
        p.insert(format!("layer.{l}.ff_out.weight"), xavier(ff, d, rng));
        p.insert(format!("layer.{l}.ff_out.bias"), filled(1, d, 0.0));
        p.insert(format!("layer.{l}.ff_ln.gamma"), filled(1, d, 1.0));
        p.insert(format!("layer.{l}.ff_ln.beta"), filled(1, d, 0.0));
    }
    p.insert("head.weight", xavier(labels, d, rng));
    p.insert("head.bias", filled(1, labels, 0.0));
    p
}

fn linear(g: &mut Graph, b: &Bound, x: NodeId, prefix: &str) -> NodeId {
    let h = g.matmul(x, b.node(&format!("{prefix}.weight")));
    g.add_row(h, b.node(&format!("{prefix}.bias")))
}

fn layer_norm(g: &mut Graph, b: &Bound, x: NodeId, prefix: &str, eps: f64) -> NodeId {
    let n = g.standardize_rows(x, eps);
    let n = g.mul_row(n, b.node(&format!("{prefix}.gamma")));
    g.add_row(n, b.node(&format!("{prefix}.beta")))
}

/// Runs the encoder over `ids` (already wrapped in CLS/SEP). Returns the
/// `len × d` hidden states.
pub(crate) fn forward(cfg: &EncoderConfig, g: &mut Graph, b: &Bound, ids: &[usize]) -> NodeId {
    let n = ids.len();
    let d = cfg.hidden_size;
    let heads = cfg.heads;
    let dh = d / heads;
    let positions: Vec<usize> = (0..n).collect();

    let tok = g.gather_rows(b.node("embeddings.word"), ids);
    let pos = g.gather_rows(b.node("embeddings.position"), &positions);
    let h = g.add(tok, pos);
    let h = g.add_row(h, b.node("embeddings.token_type"));
    let mut h = layer_norm(g, b, h, "embeddings.ln", cfg.layer_norm_eps);

    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.layers {
        let q = linear(g, b, h, &format!("layer.{l}.query"));
        let k = linear(g, b, h, &format!("layer.{l}.key"));
        let v = linear(g, b, h, &format!("layer.{l}.value"));
        let mut per_head = Vec::with_capacity(heads);
        for hd in 0..heads {
            let (s, e) = (hd * dh, (hd + 1) * dh);
            let qh = g.slice_cols(q, s, e);
            let kh = g.slice_cols(k, s, e);
            let vh = g.slice_cols(v, s, e);
            let scores = g.matmul_bt(qh, kh);
            let scores = g.scale(scores, scale);
            let att = g.softmax_rows(scores);
            per_head.push(g.matmul(att, vh));
        }
        let ctx = if heads == 1 { per_head[0] } else { g.concat_cols(&per_head) };
        let out = linear(g, b, ctx, &format!("layer.{l}.attn_out"));
        let res = g.add(out, h);
        let h1 = layer_norm(g, b, res, &format!("layer.{l}.attn_ln"), cfg.layer_norm_eps);
        let ff = linear(g, b, h1, &format!("layer.{l}.ff_in"));
        let ff = g.gelu(ff);
        let ff = linear(g, b, ff, &format!("layer.{l}.ff_out"));
        let res = g.add(ff, h1);
        h = layer_norm(g, b, res, &format!("layer.{l}.ff_ln"), cfg.layer_norm_eps);
    }
    h
}
