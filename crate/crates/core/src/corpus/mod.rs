//! Labeled sentences, file formats, dataset splitting, subword alignment and
//! the synthetic literal/figurative corpus generator.

pub(crate) mod align;
mod format;
mod split;
mod synth;
mod tag;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{align_to_subwords, SubwordAlignment};
pub use format::{
    parse_conll, parse_jsonl, read_corpus, to_conll, to_jsonl, write_corpus, CorpusFormat,
};
pub use split::{split_dataset, DatasetSplit, SplitRatios};
pub use synth::{
    generate_synthetic_corpus, PhraseEntry, SynthesisConfig, DEFAULT_CLASS,
};
pub use tag::{parse_tags, repair_labels, validate_iob2, Tag, TagSet};

/// Word tokens with one IOB2 tag per word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub labels: Vec<Tag>,
}

impl LabeledSentence {
    /// Builds a sentence, checking that tokens and labels line up.
    ///
    /// Labels are not repaired here; see [`LabeledSentence::repaired`].
    pub fn new(id: impl Into<String>, tokens: Vec<String>, labels: Vec<Tag>) -> Result<Self> {
        let id = id.into();
        if tokens.is_empty() {
            return Err(Error::InvalidInput(format!("sentence `{id}` has no tokens")));
        }
        if tokens.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "sentence `{id}` has {} tokens but {} labels",
                tokens.len(),
                labels.len()
            )));
        }
        if let Some(bad) = tokens.iter().find(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(Error::InvalidInput(format!(
                "sentence `{id}` has token {bad:?} that is empty or contains whitespace"
            )));
        }
        Ok(LabeledSentence { id, tokens, labels })
    }

    /// Convenience constructor from string slices.
    pub fn from_strs(id: &str, tokens: &[&str], labels: &[&str]) -> Result<Self> {
        Self::new(
            id,
            tokens.iter().map(|t| t.to_string()).collect(),
            parse_tags(labels)?,
        )
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn repaired(mut self) -> Self {
        self.labels = repair_labels(&self.labels);
        self
    }

    pub fn is_valid_iob2(&self) -> bool {
        validate_iob2(&self.labels).is_ok()
    }

    /// Classes that occur in this sentence's labels.
    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().filter_map(Tag::class)
    }
}

/// Collects every class mentioned by a set of sentences, sorted and deduplicated.
pub fn classes_of<'a>(sentences: impl IntoIterator<Item = &'a LabeledSentence>) -> Vec<String> {
    let mut out: Vec<String> = sentences
        .into_iter()
        .flat_map(|s| s.classes().map(str::to_string).collect::<Vec<_>>())
        .collect();
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_lengths() {
        assert!(LabeledSentence::from_strs("a", &["x", "y"], &["O"]).is_err());
        assert!(LabeledSentence::from_strs("a", &[], &[]).is_err());
        assert!(LabeledSentence::from_strs("a", &["x y"], &["O"]).is_err());
    }

    #[test]
    fn collects_classes() {
        let a = LabeledSentence::from_strs("a", &["x", "y"], &["B-idiom", "O"]).unwrap();
        let b = LabeledSentence::from_strs("b", &["x"], &["B-metaphor"]).unwrap();
        assert_eq!(classes_of([&a, &b]), ["idiom", "metaphor"]);
    }
}
