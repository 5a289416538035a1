//! Contextual word representations and the token classifier on top of them.
//!
//! A [`TaggerModel`] bundles a transformer encoder, its subword tokenizer, the
//! tag inventory and a linear softmax head. Two bindings share the
//! architecture: a small randomly initialised encoder trained from scratch,
//! and a BERT-format pretrained checkpoint loaded from disk.

mod params;
mod pretrained;
mod tokenizer;
mod transformer;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Graph, Matrix, NodeId};
use crate::corpus::{repair_labels, LabeledSentence, SubwordAlignment, Tag, TagSet};
use crate::error::{Error, Result};

pub use params::{Bound, Param, ParamStore};
pub use pretrained::export_bert_checkpoint;
pub use tokenizer::{HashedTokenizer, Tokenizer, WordPieceTokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderMode {
    PretrainedTransformer,
    TinyFromScratch,
}

impl std::str::FromStr for EncoderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrained-transformer" => Ok(EncoderMode::PretrainedTransformer),
            "tiny-from-scratch" => Ok(EncoderMode::TinyFromScratch),
            other => Err(Error::Config(format!("unknown encoder mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub mode: EncoderMode,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub intermediate_size: usize,
    /// Maximum subword positions including the CLS and SEP markers.
    pub max_len: usize,
    pub layer_norm_eps: f64,
    /// Truncate overlong sentences (with a warning) instead of failing.
    pub truncate: bool,
    pub seed: u64,
    /// Hashed tokenizer: vocabulary cap, minimum word count, hash buckets.
    pub max_words: usize,
    pub min_word_count: usize,
    pub hash_buckets: usize,
    /// Directory holding `config.json`, `vocab.txt` and `model.safetensors`.
    pub pretrained_dir: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: EncoderMode::TinyFromScratch,
            hidden_size: 32,
            layers: 2,
            heads: 4,
            intermediate_size: 64,
            max_len: 64,
            layer_norm_eps: 1e-5,
            truncate: true,
            seed: 0,
            max_words: 4000,
            min_word_count: 1,
            hash_buckets: 256,
            pretrained_dir: None,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size < 8 {
            return Err(Error::Config(format!("hidden_size must be >= 8, got {}", self.hidden_size)));
        }
        if self.heads == 0 || self.hidden_size % self.heads != 0 {
            return Err(Error::Config(format!(
                "heads ({}) must divide hidden_size ({})",
                self.heads, self.hidden_size
            )));
        }
        if self.max_len < 3 {
            return Err(Error::Config("max_len must leave room for CLS, SEP and a word".into()));
        }
        if self.intermediate_size == 0 {
            return Err(Error::Config("intermediate_size must be positive".into()));
        }
        Ok(())
    }
}

/// Pooled sentence vector plus one contextual vector per word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedSentence {
    pub cls: Vec<f64>,
    pub word_vectors: Vec<Vec<f64>>,
}

impl EncodedSentence {
    pub fn dim(&self) -> usize {
        self.cls.len()
    }

    pub fn word_count(&self) -> usize {
        self.word_vectors.len()
    }
}

/// Linear layer mapping a word vector to tag logits: `W h + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHead {
    /// `labels × d`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows < 2 {
            return Err(Error::Shape("a classifier needs at least two labels".into()));
        }
        if bias.len() != weight.rows {
            return Err(Error::Shape(format!(
                "bias has {} entries for {} labels",
                bias.len(),
                weight.rows
            )));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("classifier parameters must be finite".into()));
        }
        Ok(ClassifierHead { weight, bias })
    }

    pub fn labels(&self) -> usize {
        self.weight.rows
    }

    pub fn dim(&self) -> usize {
        self.weight.cols
    }
}

/// Per-word tag distributions and their argmax indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenPredictions {
    pub probs: Vec<Vec<f64>>,
    pub argmax: Vec<usize>,
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise `softmax(W h_i + b)`.
pub fn classify_tokens(enc: &EncodedSentence, head: &ClassifierHead) -> Result<TokenPredictions> {
    let d = head.dim();
    if let Some(bad) = enc.word_vectors.iter().find(|v| v.len() != d) {
        return Err(Error::Shape(format!(
            "word vector of size {} does not match classifier input {d}",
            bad.len()
        )));
    }
    let words = Matrix::from_rows(&enc.word_vectors).unwrap_or_else(|_| Matrix::zeros(0, d));
    let mut logits = autodiff::matmul_bt(&words, &head.weight);
    for r in 0..logits.rows {
        for (x, b) in logits.row_mut(r).iter_mut().zip(&head.bias) {
            *x += b;
        }
    }
    let probs = autodiff::softmax_rows(&logits).to_rows();
    let argmax = probs.iter().map(|p| argmax(p)).collect();
    Ok(TokenPredictions { probs, argmax })
}

/// Argmax tags (lowest index wins ties), then IOB2 repair.
pub fn decode_labels(preds: &TokenPredictions, tags: &TagSet) -> Vec<Tag> {
    let raw: Vec<Tag> = preds
        .argmax
        .iter()
        .map(|&i| tags.get(i).cloned().unwrap_or(Tag::Outside))
        .collect();
    repair_labels(&raw)
}

/// Subword ids for one sentence plus where each word's vector is read from.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSentence {
    /// Piece ids wrapped as `[CLS] pieces [SEP]`.
    pub ids: Vec<usize>,
    /// Alignment over the pieces actually kept (without CLS/SEP).
    pub alignment: SubwordAlignment,
    /// Row of the hidden states each word reads from.
    pub word_rows: Vec<usize>,
    /// False for words cut off by truncation; they carry no supervision.
    pub supervised: Vec<bool>,
}

/// Tape nodes produced for one sentence.
#[derive(Debug, Clone, Copy)]
pub struct SentenceNodes {
    pub hidden: NodeId,
    pub cls: NodeId,
    pub words: NodeId,
    pub logits: NodeId,
}

const CHECKPOINT_FORMAT: &str = "idiomspan-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: EncoderConfig,
    tags: Vec<Tag>,
    tokenizer: Tokenizer,
    seed: u64,
    params: ParamStore,
}

/// Encoder, tokenizer, tag set and classifier head.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub config: EncoderConfig,
    pub tokenizer: Tokenizer,
    pub tags: TagSet,
    pub params: ParamStore,
}

impl TaggerModel {
    /// Randomly initialised encoder with a hashed tokenizer fitted on `train`.
    pub fn tiny(config: EncoderConfig, tags: TagSet, train: &[LabeledSentence]) -> Result<Self> {
        config.validate()?;
        let tokenizer = Tokenizer::Hashed(HashedTokenizer::fit(
            train,
            config.max_words,
            config.min_word_count,
            config.hash_buckets,
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = transformer::init_params(&config, tokenizer.vocab_size(), tags.len(), &mut rng);
        Ok(TaggerModel {
            config,
            tokenizer,
            tags,
            params,
        })
    }

    /// Loads a BERT-format checkpoint and attaches a freshly initialised head.
    pub fn pretrained(config: EncoderConfig, tags: TagSet) -> Result<Self> {
        let dir = config
            .pretrained_dir
            .clone()
            .ok_or_else(|| Error::Config("pretrained mode needs pretrained_dir".into()))?;
        pretrained::load(&dir, config, tags)
    }

    /// Dispatches on `config.mode`.
    pub fn build(config: EncoderConfig, tags: TagSet, train: &[LabeledSentence]) -> Result<Self> {
        match config.mode {
            EncoderMode::TinyFromScratch => Self::tiny(config, tags, train),
            EncoderMode::PretrainedTransformer => Self::pretrained(config, tags),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    pub fn head(&self) -> ClassifierHead {
        ClassifierHead {
            weight: self.params.get("head.weight").expect("head present").clone(),
            bias: self.params.get("head.bias").expect("head present").data.clone(),
        }
    }

    /// Tokenizes and aligns a sentence, truncating if configured.
    pub fn prepare(&self, sentence: &LabeledSentence) -> Result<PreparedSentence> {
        let mut pieces: Vec<Vec<usize>> = sentence.tokens.iter().map(|w| self.tokenizer.pieces(w)).collect();
        let budget = self.config.max_len - 2;
        let total: usize = pieces.iter().map(Vec::len).sum();
        if total > budget {
            if !self.config.truncate {
                return Err(Error::SequenceTooLong {
                    len: total + 2,
                    max: self.config.max_len,
                });
            }
            log::warn!(
                "sentence `{}` has {} subwords; truncating to {}",
                sentence.id,
                total + 2,
                self.config.max_len
            );
            // drop continuation pieces from the back first; labels only need the first piece
            let mut excess = total - budget;
            for p in pieces.iter_mut().rev() {
                if excess == 0 {
                    break;
                }
                let drop = (p.len() - 1).min(excess);
                p.truncate(p.len() - drop);
                excess -= drop;
            }
        }
        let kept_words = pieces.len().min(budget);
        let lengths: Vec<usize> = pieces[..kept_words].iter().map(Vec::len).collect();
        let alignment = crate::corpus::align::alignment_from_lengths(&lengths)?;

        let mut ids = Vec::with_capacity(alignment.subword_count() + 2);
        ids.push(self.tokenizer.cls_id());
        for p in &pieces[..kept_words] {
            ids.extend_from_slice(p);
        }
        ids.push(self.tokenizer.sep_id());
        let sep_row = ids.len() - 1;
        let mut word_rows: Vec<usize> = alignment.first_positions.iter().map(|p| p + 1).collect();
        let mut supervised = vec![true; kept_words];
        // words past the budget read the SEP position and are not supervised
        word_rows.resize(sentence.len(), sep_row);
        supervised.resize(sentence.len(), false);
        Ok(PreparedSentence {
            ids,
            alignment,
            word_rows,
            supervised,
        })
    }

    /// Builds the forward pass for one sentence on the tape.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, prepared: &PreparedSentence) -> SentenceNodes {
        let hidden = transformer::forward(&self.config, g, bound, &prepared.ids);
        let cls = g.gather_rows(hidden, &[0]);
        let words = g.gather_rows(hidden, &prepared.word_rows);
        let logits = g.matmul_bt(words, bound.node("head.weight"));
        let logits = g.add_row(logits, bound.node("head.bias"));
        SentenceNodes {
            hidden,
            cls,
            words,
            logits,
        }
    }

    /// Inference-mode encoding.
    pub fn encode(&self, sentence: &LabeledSentence) -> Result<EncodedSentence> {
        let prepared = self.prepare(sentence)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let nodes = self.forward(&mut g, &bound, &prepared);
        let enc = EncodedSentence {
            cls: g.value(nodes.cls).data.clone(),
            word_vectors: g.value(nodes.words).to_rows(),
        };
        debug_assert!(enc.word_vectors.iter().flatten().all(|v| v.is_finite()));
        Ok(enc)
    }

    pub fn predict(&self, sentence: &LabeledSentence) -> Result<Vec<Tag>> {
        let enc = self.encode(sentence)?;
        let preds = classify_tokens(&enc, &self.head())?;
        Ok(decode_labels(&preds, &self.tags))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            tags: self.tags.tags().to_vec(),
            tokenizer: self.tokenizer.clone(),
            seed: self.config.seed,
            params: self.params.clone(),
        };
        let text = serde_json::to_string(&file)?;
        crate::io::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                file.version
            )));
        }
        let mut tokenizer = file.tokenizer;
        tokenizer.rebuild();
        Ok(TaggerModel {
            config: file.config,
            tokenizer,
            tags: TagSet::from_tags(file.tags)?,
            params: file.params,
        })
    }
}

#[cfg(test)]
mod tests;
