use serde::{Deserialize, Serialize};

use super::LabeledSentence;
use crate::error::{Error, Result};

/// Maps words onto subword positions. Only a word's first subword is supervised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordAlignment {
    /// Subword index of each word's first piece.
    pub first_positions: Vec<usize>,
    /// One flag per subword, true only at first pieces.
    pub mask: Vec<bool>,
}

impl SubwordAlignment {
    pub fn word_count(&self) -> usize {
        self.first_positions.len()
    }

    pub fn subword_count(&self) -> usize {
        self.mask.len()
    }

    /// Identity alignment: one subword per word.
    pub fn identity(words: usize) -> Self {
        SubwordAlignment {
            first_positions: (0..words).collect(),
            mask: vec![true; words],
        }
    }
}

pub fn align_to_subwords(
    sentence: &LabeledSentence,
    subword_lengths: &[usize],
) -> Result<SubwordAlignment> {
    if subword_lengths.len() != sentence.len() {
        return Err(Error::Shape(format!(
            "sentence `{}` has {} words but {} subword lengths",
            sentence.id,
            sentence.len(),
            subword_lengths.len()
        )));
    }
    alignment_from_lengths(subword_lengths)
}

pub(crate) fn alignment_from_lengths(subword_lengths: &[usize]) -> Result<SubwordAlignment> {
    let mut first_positions = Vec::with_capacity(subword_lengths.len());
    let mut mask = Vec::with_capacity(subword_lengths.iter().sum());
    for (word, &len) in subword_lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::InvalidInput(format!("word {word} has zero subwords")));
        }
        first_positions.push(mask.len());
        mask.push(true);
        mask.extend(std::iter::repeat(false).take(len - 1));
    }
    Ok(SubwordAlignment {
        first_positions,
        mask,
    })
}
