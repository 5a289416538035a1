use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledSentence;
use crate::error::{Error, Result};

/// Train/dev/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const EIGHTY_TEN_TEN: SplitRatios = SplitRatios {
        train: 0.8,
        dev: 0.1,
        test: 0.1,
    };

    pub fn new(train: f64, dev: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, dev, test };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidInput(format!("split ratios must be non-negative: {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("split ratios must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// Partition sizes for `n` items: cumulative boundaries, each floored.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs representation error such as 0.8 + 0.1 = 0.9000000000000001
        let cut = |c: f64| (((n as f64) * c) + 1e-9).floor().min(n as f64) as usize;
        let b1 = cut(self.train);
        let b2 = cut(self.train + self.dev).max(b1);
        (b1, b2 - b1, n - b2)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::EIGHTY_TEN_TEN
    }
}

/// A seeded train/dev/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
    pub seed: u64,
    pub ratios: SplitRatios,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }
}

/// Shuffles with a ChaCha8 permutation seeded by `seed`, then cuts at the
/// floored cumulative ratios.
pub fn split_dataset(
    sentences: &[LabeledSentence],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit> {
    ratios.validate()?;
    if sentences.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty dataset".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = sentences.iter().find(|s| !seen.insert(s.id.as_str())) {
        return Err(Error::InvalidInput(format!("duplicate sentence id `{}`", dup.id)));
    }

    let mut order: Vec<usize> = (0..sentences.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let (n_train, n_dev, _) = ratios.sizes(sentences.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| sentences[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        dev: pick(&order[n_train..n_train + n_dev]),
        test: pick(&order[n_train + n_dev..]),
        seed,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(n: usize) -> Vec<LabeledSentence> {
        (0..n)
            .map(|i| LabeledSentence::from_strs(&format!("s{i}"), &["w"], &["O"]).unwrap())
            .collect()
    }

    fn ids(v: &[LabeledSentence]) -> Vec<&str> {
        v.iter().map(|s| s.id.as_str()).collect()
    }

    #[test]
    fn eighty_ten_ten() {
        let s = split_dataset(&corpus(10), SplitRatios::EIGHTY_TEN_TEN, 1).unwrap();
        assert_eq!(s.sizes(), (8, 1, 1));
    }

    #[test]
    fn single_sentence_all_train() {
        let s = split_dataset(&corpus(1), SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(s.sizes(), (1, 0, 0));
    }

    #[test]
    fn nine_sentences_two_seeds() {
        let data = corpus(9);
        let a = split_dataset(&data, SplitRatios::EIGHTY_TEN_TEN, 0).unwrap();
        let b = split_dataset(&data, SplitRatios::EIGHTY_TEN_TEN, 1).unwrap();
        assert_eq!(a.sizes(), (7, 1, 1));
        assert_eq!(b.sizes(), (7, 1, 1));
        let order = |s: &DatasetSplit| {
            [ids(&s.train), ids(&s.dev), ids(&s.test)].concat().join(",")
        };
        assert_ne!(order(&a), order(&b));
        assert_eq!(order(&a), order(&split_dataset(&data, SplitRatios::EIGHTY_TEN_TEN, 0).unwrap()));
    }

    #[test]
    fn errors() {
        assert!(split_dataset(&[], SplitRatios::EIGHTY_TEN_TEN, 0).is_err());
        assert!(SplitRatios::new(0.5, 0.1, 0.1).is_err());
        assert!(SplitRatios::new(1.2, -0.1, -0.1).is_err());
        let mut dup = corpus(2);
        dup[1].id = "s0".into();
        assert!(split_dataset(&dup, SplitRatios::EIGHTY_TEN_TEN, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_is_disjoint_and_complete(n in 1usize..200, seed in any::<u64>(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (train, rest) = (a, 1.0 - a);
            let ratios = SplitRatios::new(train, rest * b, rest * (1.0 - b)).unwrap();
            let s = split_dataset(&corpus(n), ratios, seed).unwrap();
            prop_assert_eq!(s.len(), n);
            let mut all: Vec<&str> = [ids(&s.train), ids(&s.dev), ids(&s.test)].concat();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
        }
    }
}
