//! BERT-format checkpoints: `config.json`, `vocab.txt`, `model.safetensors`.
//!
//! Linear weights are stored `out × in` on disk and transposed on load.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::params::{filled, xavier, ParamStore};
use super::{EncoderConfig, TaggerModel, Tokenizer, WordPieceTokenizer};
use crate::autodiff::Matrix;
use crate::corpus::TagSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BertConfig {
    vocab_size: usize,
    hidden_size: usize,
    num_hidden_layers: usize,
    num_attention_heads: usize,
    intermediate_size: usize,
    max_position_embeddings: usize,
    #[serde(default = "default_eps")]
    layer_norm_eps: f64,
    #[serde(default = "default_act")]
    hidden_act: String,
}

fn default_eps() -> f64 {
    1e-12
}

fn default_act() -> String {
    "gelu".into()
}

#[derive(Deserialize)]
struct TokenizerConfig {
    #[serde(default = "yes")]
    do_lower_case: bool,
}

fn yes() -> bool {
    true
}

fn ckpt(msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(msg.to_string())
}

/// Our name, the on-disk suffix, and whether the tensor is a transposed linear weight.
fn name_map(layers: usize) -> Vec<(String, String, bool)> {
    let mut m = vec![
        ("embeddings.word".into(), "embeddings.word_embeddings.weight".into(), false),
        ("embeddings.position".into(), "embeddings.position_embeddings.weight".into(), false),
        ("embeddings.ln.gamma".into(), "embeddings.LayerNorm.weight".into(), false),
        ("embeddings.ln.beta".into(), "embeddings.LayerNorm.bias".into(), false),
    ];
    for l in 0..layers {
        let hf = format!("encoder.layer.{l}");
        let pairs = [
            ("query", "attention.self.query"),
            ("key", "attention.self.key"),
            ("value", "attention.self.value"),
            ("attn_out", "attention.output.dense"),
            ("ff_in", "intermediate.dense"),
            ("ff_out", "output.dense"),
        ];
        for (ours, theirs) in pairs {
            m.push((format!("layer.{l}.{ours}.weight"), format!("{hf}.{theirs}.weight"), true));
            m.push((format!("layer.{l}.{ours}.bias"), format!("{hf}.{theirs}.bias"), false));
        }
        for (ours, theirs) in [("attn_ln", "attention.output.LayerNorm"), ("ff_ln", "output.LayerNorm")] {
            m.push((format!("layer.{l}.{ours}.gamma"), format!("{hf}.{theirs}.weight"), false));
            m.push((format!("layer.{l}.{ours}.beta"), format!("{hf}.{theirs}.bias"), false));
        }
    }
    m
}

fn to_f64(view: &TensorView<'_>) -> Result<Vec<f64>> {
    let bytes = view.data();
    match view.dtype() {
        Dtype::F32 => Ok(bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect()),
        Dtype::F64 => Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect()),
        other => Err(ckpt(format!("unsupported tensor dtype {other:?}"))),
    }
}

fn as_matrix(view: &TensorView<'_>) -> Result<Matrix> {
    let data = to_f64(view)?;
    let (rows, cols) = match view.shape() {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        s => return Err(ckpt(format!("unexpected tensor rank {}", s.len()))),
    };
    Ok(Matrix { rows, cols, data })
}

fn lookup<'a>(st: &'a SafeTensors<'a>, suffix: &str) -> Result<TensorView<'a>> {
    st.tensor(suffix)
        .or_else(|_| st.tensor(&format!("bert.{suffix}")))
        // older checkpoints spell LayerNorm parameters gamma/beta
        .or_else(|_| st.tensor(&suffix.replace("LayerNorm.weight", "LayerNorm.gamma").replace("LayerNorm.bias", "LayerNorm.beta")))
        .map_err(|_| ckpt(format!("tensor `{suffix}` not found")))
}

pub(crate) fn load(dir: &Path, mut config: EncoderConfig, tags: TagSet) -> Result<TaggerModel> {
    let cfg_path = dir.join("config.json");
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let bert: BertConfig = serde_json::from_str(&text)?;
    if !bert.hidden_act.starts_with("gelu") {
        return Err(ckpt(format!("activation `{}` is not supported", bert.hidden_act)));
    }
    let lower = match std::fs::read_to_string(dir.join("tokenizer_config.json")) {
        Ok(t) => serde_json::from_str::<TokenizerConfig>(&t)?.do_lower_case,
        Err(_) => true,
    };
    let tokenizer = WordPieceTokenizer::from_file(&dir.join("vocab.txt"), lower)?;
    if tokenizer.vocab_size() != bert.vocab_size {
        return Err(ckpt(format!(
            "vocab.txt has {} entries but config says {}",
            tokenizer.vocab_size(),
            bert.vocab_size
        )));
    }

    config.hidden_size = bert.hidden_size;
    config.layers = bert.num_hidden_layers;
    config.heads = bert.num_attention_heads;
    config.intermediate_size = bert.intermediate_size;
    config.layer_norm_eps = bert.layer_norm_eps;
    config.max_len = config.max_len.min(bert.max_position_embeddings);
    config.validate()?;

    let weights_path = dir.join("model.safetensors");
    let bytes = std::fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(ckpt)?;

    let mut params = ParamStore::new();
    for (ours, theirs, transpose) in name_map(config.layers) {
        let m = as_matrix(&lookup(&st, &theirs)?)?;
        let m = if transpose { m.transpose() } else { m };
        params.insert(ours, m);
    }
    let tt = as_matrix(&lookup(&st, "embeddings.token_type_embeddings.weight")?)?;
    params.insert("embeddings.token_type", Matrix::from_vec(1, tt.cols, tt.row(0).to_vec())?);

    let d = config.hidden_size;
    let expect = |name: &str, rows: usize, cols: usize| -> Result<()> {
        let m = params.get(name)?;
        if m.shape() != (rows, cols) {
            return Err(ckpt(format!("{name} has shape {:?}, expected {:?}", m.shape(), (rows, cols))));
        }
        Ok(())
    };
    expect("embeddings.word", bert.vocab_size, d)?;
    for l in 0..config.layers {
        expect(&format!("layer.{l}.query.weight"), d, d)?;
        expect(&format!("layer.{l}.ff_in.weight"), d, config.intermediate_size)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    params.insert("head.weight", xavier(tags.len(), d, &mut rng));
    params.insert("head.bias", filled(1, tags.len(), 0.0));
    if !params.is_finite() {
        return Err(ckpt("checkpoint contains non-finite weights"));
    }
    Ok(TaggerModel {
        config,
        tokenizer: Tokenizer::WordPiece(tokenizer),
        tags,
        params,
    })
}

/// Writes an encoder in the BERT on-disk layout (f32 weights). The head is
/// not exported.
pub fn export_bert_checkpoint(model: &TaggerModel, vocab: &[String], dir: &Path) -> Result<()> {
    let cfg = &model.config;
    if vocab.len() != model.tokenizer.vocab_size() {
        return Err(Error::InvalidInput(format!(
            "vocabulary of {} entries for a model with {} embeddings",
            vocab.len(),
            model.tokenizer.vocab_size()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bert = BertConfig {
        vocab_size: vocab.len(),
        hidden_size: cfg.hidden_size,
        num_hidden_layers: cfg.layers,
        num_attention_heads: cfg.heads,
        intermediate_size: cfg.intermediate_size,
        max_position_embeddings: cfg.max_len,
        layer_norm_eps: cfg.layer_norm_eps,
        hidden_act: "gelu".into(),
    };
    crate::io::write_json(&dir.join("config.json"), &bert)?;
    let mut vocab_text = vocab.join("\n");
    vocab_text.push('\n');
    crate::io::write_atomic(&dir.join("vocab.txt"), vocab_text.as_bytes())?;

    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut push = |name: String, m: &Matrix, vector: bool| {
        let shape = if vector { vec![m.cols] } else { vec![m.rows, m.cols] };
        let bytes = m.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect();
        tensors.push((name, shape, bytes));
    };
    for (ours, theirs, transpose) in name_map(cfg.layers) {
        let m = model.params.get(&ours)?;
        let vector = m.rows == 1 && !ours.starts_with("embeddings.word") && !ours.starts_with("embeddings.position");
        if transpose {
            push(theirs, &m.transpose(), false);
        } else {
            push(theirs, m, vector);
        }
    }
    // BERT carries two segment rows; only the first is used
    let tt = model.params.get("embeddings.token_type")?;
    let mut two = tt.data.clone();
    two.extend(std::iter::repeat(0.0).take(tt.cols));
    push(
        "embeddings.token_type_embeddings.weight".into(),
        &Matrix::from_vec(2, tt.cols, two)?,
        false,
    );

    let views: HashMap<String, TensorView<'_>> = tensors
        .iter()
        .map(|(n, s, b)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b).map_err(ckpt)?)))
        .collect::<Result<_>>()?;
    let bytes = safetensors::tensor::serialize(views, &None).map_err(ckpt)?;
    crate::io::write_atomic(&dir.join("model.safetensors"), &bytes)
}
