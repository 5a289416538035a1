//! Subword tokenizers. Each word maps to one or more piece ids; labels live on
//! the first piece.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSentence;
use crate::error::{Error, Result};

// ids 0 and 1 are padding and unknown
pub const CLS: usize = 2;
pub const SEP: usize = 3;
const RESERVED: usize = 4;

/// FNV-1a, stable across platforms and releases.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Whole-word vocabulary learned from training data; out-of-vocabulary words
/// fall back to hashed three-character pieces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedTokenizer {
    words: Vec<String>,
    buckets: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl HashedTokenizer {
    /// Keeps at most `max_words` words seen at least `min_count` times
    /// (most frequent first, ties alphabetical).
    pub fn fit(sentences: &[LabeledSentence], max_words: usize, min_count: usize, buckets: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in sentences {
            for t in &s.tokens {
                *counts.entry(t.to_lowercase()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_words);
        Self::from_words(ranked.into_iter().map(|(w, _)| w).collect(), buckets.max(1))
    }

    pub fn from_words(words: Vec<String>, buckets: usize) -> Self {
        let mut t = HashedTokenizer {
            words,
            buckets,
            index: HashMap::new(),
        };
        t.rebuild_index();
        t
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), RESERVED + i))
            .collect();
    }

    pub fn vocab_size(&self) -> usize {
        RESERVED + self.words.len() + self.buckets
    }

    pub fn pieces(&self, word: &str) -> Vec<usize> {
        let lower = word.to_lowercase();
        if let Some(&id) = self.index.get(&lower) {
            return vec![id];
        }
        let chars: Vec<char> = lower.chars().collect();
        let base = RESERVED + self.words.len();
        chars
            .chunks(3)
            .enumerate()
            .map(|(i, chunk)| {
                let piece: String = chunk.iter().collect();
                let key = if i == 0 { piece } else { format!("##{piece}") };
                base + (fnv1a(&key) % self.buckets as u64) as usize
            })
            .collect()
    }
}

/// Greedy longest-match WordPiece over a `vocab.txt` (one piece per line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordPieceTokenizer {
    vocab: Vec<String>,
    lowercase: bool,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl WordPieceTokenizer {
    const MAX_CHARS: usize = 100;

    pub fn from_vocab(vocab: Vec<String>, lowercase: bool) -> Result<Self> {
        let mut t = WordPieceTokenizer {
            vocab,
            lowercase,
            index: HashMap::new(),
        };
        t.rebuild_index();
        for special in ["[UNK]", "[CLS]", "[SEP]"] {
            if !t.index.contains_key(special) {
                return Err(Error::Checkpoint(format!("vocabulary lacks {special}")));
            }
        }
        Ok(t)
    }

    pub fn from_file(path: &Path, lowercase: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_vocab(text.lines().map(str::to_string).collect(), lowercase)
    }

    fn rebuild_index(&mut self) {
        // first occurrence wins, as in the reference tokenizer
        let mut index = HashMap::new();
        for (i, p) in self.vocab.iter().enumerate() {
            index.entry(p.clone()).or_insert(i);
        }
        self.index = index;
    }

    fn id(&self, piece: &str) -> usize {
        self.index[piece]
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Splits punctuation off, then WordPieces each fragment.
    pub fn pieces(&self, word: &str) -> Vec<usize> {
        let text = if self.lowercase { word.to_lowercase() } else { word.to_string() };
        let mut fragments: Vec<String> = Vec::new();
        let mut current = String::new();
        for ch in text.chars() {
            if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
                if !current.is_empty() {
                    fragments.push(std::mem::take(&mut current));
                }
                fragments.push(ch.to_string());
            } else if !ch.is_whitespace() {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            fragments.push(current);
        }
        let mut out = Vec::new();
        for frag in fragments {
            out.extend(self.wordpiece(&frag));
        }
        if out.is_empty() {
            out.push(self.id("[UNK]"));
        }
        out
    }

    fn wordpiece(&self, fragment: &str) -> Vec<usize> {
        let chars: Vec<char> = fragment.chars().collect();
        if chars.len() > Self::MAX_CHARS {
            return vec![self.id("[UNK]")];
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.index.get(&piece) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![self.id("[UNK]")],
            }
        }
        out
    }
}

/// The tokenizer attached to a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Tokenizer {
    Hashed(HashedTokenizer),
    WordPiece(WordPieceTokenizer),
}

impl Tokenizer {
    pub fn vocab_size(&self) -> usize {
        match self {
            Tokenizer::Hashed(t) => t.vocab_size(),
            Tokenizer::WordPiece(t) => t.vocab_size(),
        }
    }

    pub fn pieces(&self, word: &str) -> Vec<usize> {
        match self {
            Tokenizer::Hashed(t) => t.pieces(word),
            Tokenizer::WordPiece(t) => t.pieces(word),
        }
    }

    pub fn cls_id(&self) -> usize {
        match self {
            Tokenizer::Hashed(_) => CLS,
            Tokenizer::WordPiece(t) => t.id("[CLS]"),
        }
    }

    pub fn sep_id(&self) -> usize {
        match self {
            Tokenizer::Hashed(_) => SEP,
            Tokenizer::WordPiece(t) => t.id("[SEP]"),
        }
    }

    /// Restores lookup tables after deserialization.
    pub(crate) fn rebuild(&mut self) {
        match self {
            Tokenizer::Hashed(t) => t.rebuild_index(),
            Tokenizer::WordPiece(t) => t.rebuild_index(),
        }
    }
}
