//! Span extraction, mean-pooled span embeddings and negative-span mining.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_iob2, LabeledSentence, Tag};
use crate::encoder::EncodedSentence;
use crate::error::{Error, Result};

/// Label used for `O` runs and mined negatives.
pub const OUTSIDE_LABEL: &str = "O";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanSource {
    Gold,
    Predicted,
    MinedNegative,
    LabelAgnostic,
}

/// Half-open word range `[start, end)` in one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub sentence_id: String,
    pub start: usize,
    pub end: usize,
    pub label: String,
    pub source: SpanSource,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// A span and its pooled vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanEmbedding {
    pub span: Span,
    pub z: Vec<f64>,
    pub normalized: bool,
}

/// `(start, end, class)` runs of a valid IOB2 sequence.
pub(crate) fn iob2_runs(labels: &[Tag]) -> Vec<(usize, usize, String)> {
    let mut out = Vec::new();
    let mut open: Option<(usize, String)> = None;
    for (i, tag) in labels.iter().enumerate() {
        match tag {
            Tag::Inside(c) if open.as_ref().is_some_and(|(_, oc)| oc == c) => {}
            _ => {
                if let Some((s, c)) = open.take() {
                    out.push((s, i, c));
                }
                if let Tag::Begin(c) | Tag::Inside(c) = tag {
                    open = Some((i, c.clone()));
                }
            }
        }
    }
    if let Some((s, c)) = open {
        out.push((s, labels.len(), c));
    }
    out
}

/// One span per maximal `B-c I-c*` run. Fails on invalid IOB2.
pub fn extract_gold_spans(sentence: &LabeledSentence) -> Result<Vec<Span>> {
    validate_iob2(&sentence.labels)?;
    Ok(iob2_runs(&sentence.labels)
        .into_iter()
        .map(|(start, end, label)| Span {
            sentence_id: sentence.id.clone(),
            start,
            end,
            label,
            source: SpanSource::Gold,
        })
        .collect())
}

/// Every maximal run of identical tags, `O` runs included.
///
/// A run's label is the tag's class (`O` for outside), so `B-c I-c I-c`
/// forms one run: `B-` and `I-` of one class count as the same label and a
/// new `B-c` starts a new run.
pub fn extract_label_agnostic_spans(sentence_id: &str, labels: &[Tag]) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    for (i, tag) in labels.iter().enumerate() {
        let label = tag.class().unwrap_or(OUTSIDE_LABEL);
        let extends = match (out.last(), tag) {
            (Some(last), Tag::Inside(_) | Tag::Outside) => last.end == i && last.label == label,
            _ => false,
        };
        if extends {
            out.last_mut().unwrap().end = i + 1;
        } else {
            out.push(Span {
                sentence_id: sentence_id.to_string(),
                start: i,
                end: i + 1,
                label: label.to_string(),
                source: SpanSource::LabelAgnostic,
            });
        }
    }
    out
}

/// Mean of rows `start..end` of `rows × dim` data, optionally L2-normalized.
pub fn mean_pool(rows: &[Vec<f64>], start: usize, end: usize, normalize: bool) -> Result<Vec<f64>> {
    if start >= end {
        return Err(Error::InvalidInput(format!("zero-length span {start}..{end}")));
    }
    if end > rows.len() {
        return Err(Error::Shape(format!(
            "span {start}..{end} exceeds {} word vectors",
            rows.len()
        )));
    }
    let dim = rows[start].len();
    let mut z = vec![0.0; dim];
    for row in &rows[start..end] {
        for (acc, x) in z.iter_mut().zip(row) {
            *acc += x;
        }
    }
    let n = (end - start) as f64;
    z.iter_mut().for_each(|v| *v /= n);
    if normalize {
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Degenerate(format!(
                "span {start}..{end} pools to a vector of norm {norm}"
            )));
        }
        z.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(z)
}

pub fn pool_span(enc: &EncodedSentence, span: &Span, normalize: bool) -> Result<SpanEmbedding> {
    let z = mean_pool(&enc.word_vectors, span.start, span.end, normalize)?;
    Ok(SpanEmbedding {
        span: span.clone(),
        z,
        normalized: normalize,
    })
}

/// How negatives are mined from `O` regions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum MiningPolicy {
    /// `O` windows whose words match a known phrase surface form.
    SurfaceMatch { phrases: Vec<Vec<String>> },
    /// Up to `count` random `O` windows of length `1..=max_len`.
    RandomWindow { count: usize, max_len: usize },
    /// Surface matches first, padded with random windows up to `cap` spans.
    Combined {
        phrases: Vec<Vec<String>>,
        cap: usize,
        max_len: usize,
    },
}

impl MiningPolicy {
    pub fn by_name(name: &str, phrases: Vec<Vec<String>>, cap: usize, max_len: usize) -> Result<Self> {
        match name {
            "surface-match" => Ok(MiningPolicy::SurfaceMatch { phrases }),
            "random-window" => Ok(MiningPolicy::RandomWindow { count: cap, max_len }),
            "combined" => Ok(MiningPolicy::Combined { phrases, cap, max_len }),
            other => Err(Error::Config(format!(
                "unknown mining policy `{other}` (expected surface-match, random-window or combined)"
            ))),
        }
    }

    /// Lowercased surface forms of all gold spans, deduplicated and sorted.
    pub fn phrases_from(sentences: &[LabeledSentence]) -> Vec<Vec<String>> {
        let mut set = HashSet::new();
        for s in sentences {
            for (start, end, _) in iob2_runs(&s.labels) {
                set.insert(s.tokens[start..end].iter().map(|t| t.to_lowercase()).collect::<Vec<_>>());
            }
        }
        let mut out: Vec<Vec<String>> = set.into_iter().collect();
        out.sort();
        out
    }
}

/// Maximal `O` stretches `[start, end)`.
fn outside_regions(labels: &[Tag]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, t) in labels.iter().enumerate() {
        match (t.is_outside(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, labels.len()));
    }
    out
}

fn negative(sentence: &LabeledSentence, start: usize, end: usize) -> Span {
    Span {
        sentence_id: sentence.id.clone(),
        start,
        end,
        label: OUTSIDE_LABEL.to_string(),
        source: SpanSource::MinedNegative,
    }
}

fn surface_matches(sentence: &LabeledSentence, phrases: &[Vec<String>]) -> Vec<Span> {
    let lower: Vec<String> = sentence.tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut found: Vec<Span> = Vec::new();
    for (rs, re) in outside_regions(&sentence.labels) {
        let mut i = rs;
        while i < re {
            // longest phrase starting at i wins; matches do not overlap
            let hit = phrases
                .iter()
                .filter(|p| !p.is_empty() && i + p.len() <= re && lower[i..i + p.len()] == p[..])
                .map(Vec::len)
                .max();
            match hit {
                Some(len) => {
                    found.push(negative(sentence, i, i + len));
                    i += len;
                }
                None => i += 1,
            }
        }
    }
    found
}

fn random_windows(
    sentence: &LabeledSentence,
    count: usize,
    max_len: usize,
    taken: &[Span],
    rng: &mut ChaCha8Rng,
) -> Vec<Span> {
    let mut out: Vec<Span> = Vec::new();
    if count == 0 || max_len == 0 {
        return out;
    }
    // candidate windows inside O regions, not overlapping anything already taken
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for (rs, re) in outside_regions(&sentence.labels) {
        for start in rs..re {
            for len in 1..=max_len.min(re - start) {
                candidates.push((start, start + len));
            }
        }
    }
    candidates.shuffle(rng);
    for (start, end) in candidates {
        if out.len() == count {
            break;
        }
        let span = negative(sentence, start, end);
        if taken.iter().chain(&out).any(|t| t.overlaps(&span)) {
            continue;
        }
        out.push(span);
    }
    out.sort_by_key(|s| (s.start, s.end));
    out
}

/// Mines negative (`O`-labeled) spans from a sentence's outside regions.
///
/// Mined spans never overlap gold spans. Results are deterministic for a given seed.
pub fn mine_negative_spans(
    sentence: &LabeledSentence,
    policy: &MiningPolicy,
    seed: u64,
) -> Result<Vec<Span>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_5a5);
    // burn one draw so nearby seeds diverge quickly
    let _: u64 = rng.gen();
    Ok(match policy {
        MiningPolicy::SurfaceMatch { phrases } => surface_matches(sentence, phrases),
        MiningPolicy::RandomWindow { count, max_len } => {
            random_windows(sentence, *count, *max_len, &[], &mut rng)
        }
        MiningPolicy::Combined { phrases, cap, max_len } => {
            let mut spans = surface_matches(sentence, phrases);
            spans.truncate(*cap);
            let pad = cap.saturating_sub(spans.len());
            let extra = random_windows(sentence, pad, *max_len, &spans, &mut rng);
            spans.extend(extra);
            spans
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_tags;
    use proptest::prelude::*;

    fn sent(tokens: &[&str], labels: &[&str]) -> LabeledSentence {
        LabeledSentence::from_strs("s", tokens, labels).unwrap()
    }

    fn bounds(spans: &[Span]) -> Vec<(usize, usize, &str)> {
        spans.iter().map(|s| (s.start, s.end, s.label.as_str())).collect()
    }

    #[test]
    fn gold_spans() {
        let s = sent(&["a", "b", "c", "d"], &["B-idiom", "I-idiom", "I-idiom", "O"]);
        assert_eq!(bounds(&extract_gold_spans(&s).unwrap()), [(0, 3, "idiom")]);
        let s = sent(&["a", "b"], &["O", "O"]);
        assert!(extract_gold_spans(&s).unwrap().is_empty());
        let s = sent(&["a", "b", "c"], &["B-idiom", "O", "B-idiom"]);
        assert_eq!(bounds(&extract_gold_spans(&s).unwrap()), [(0, 1, "idiom"), (2, 3, "idiom")]);
        let s = sent(&["a", "b"], &["B-idiom", "B-idiom"]);
        assert_eq!(extract_gold_spans(&s).unwrap().len(), 2);
        let bad = sent(&["a"], &["I-idiom"]);
        assert!(extract_gold_spans(&bad).is_err());
    }

    #[test]
    fn label_agnostic_runs() {
        let labels = parse_tags(&["O", "O", "B-idiom", "I-idiom"]).unwrap();
        assert_eq!(
            bounds(&extract_label_agnostic_spans("s", &labels)),
            [(0, 2, "O"), (2, 4, "idiom")]
        );
        assert!(extract_label_agnostic_spans("s", &[]).is_empty());
        let alt = parse_tags(&["O", "B-a", "O", "B-a", "O"]).unwrap();
        assert_eq!(extract_label_agnostic_spans("s", &alt).len(), 5);
    }

    #[test]
    fn pooling() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(mean_pool(&rows, 1, 2, false).unwrap(), [0.0, 1.0]);
        assert_eq!(mean_pool(&rows, 0, 1, false).unwrap(), rows[0]);
        let z = mean_pool(&rows, 0, 2, true).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((z[0] - h).abs() < 1e-15 && (z[1] - h).abs() < 1e-15);
        let same = vec![vec![0.3, -2.0], vec![0.3, -2.0]];
        assert_eq!(mean_pool(&same, 0, 2, false).unwrap(), [0.3, -2.0]);
        assert!(mean_pool(&rows, 1, 1, false).is_err());
        assert!(mean_pool(&rows, 2, 4, false).is_err());
        let zeros = vec![vec![0.0, 0.0]];
        assert!(matches!(mean_pool(&zeros, 0, 1, true), Err(Error::Degenerate(_))));
    }

    fn saw_the_light() -> LabeledSentence {
        sent(
            &["he", "saw", "the", "light", "in", "the", "window"],
            &["O", "O", "O", "O", "O", "O", "O"],
        )
    }

    #[test]
    fn surface_match_finds_literal_usage() {
        let policy = MiningPolicy::SurfaceMatch {
            phrases: vec![vec!["saw".into(), "the".into(), "light".into()]],
        };
        let got = mine_negative_spans(&saw_the_light(), &policy, 0).unwrap();
        assert_eq!(bounds(&got), [(1, 4, "O")]);
        assert_eq!(got[0].source, SpanSource::MinedNegative);
    }

    #[test]
    fn no_outside_tokens_no_negatives() {
        let s = sent(&["a", "b"], &["B-idiom", "I-idiom"]);
        for policy in [
            MiningPolicy::SurfaceMatch { phrases: vec![vec!["a".into()]] },
            MiningPolicy::RandomWindow { count: 3, max_len: 2 },
        ] {
            assert!(mine_negative_spans(&s, &policy, 1).unwrap().is_empty());
        }
    }

    #[test]
    fn random_window_is_deterministic() {
        let policy = MiningPolicy::RandomWindow { count: 2, max_len: 3 };
        let a = mine_negative_spans(&saw_the_light(), &policy, 42).unwrap();
        let b = mine_negative_spans(&saw_the_light(), &policy, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(!a[0].overlaps(&a[1]));
    }

    #[test]
    fn combined_pads_to_cap() {
        let policy = MiningPolicy::Combined {
            phrases: vec![vec!["saw".into(), "the".into(), "light".into()]],
            cap: 2,
            max_len: 2,
        };
        let got = mine_negative_spans(&saw_the_light(), &policy, 3).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!((got[0].start, got[0].end), (1, 4));
        assert!(!got[1].overlaps(&got[0]));
    }

    #[test]
    fn unknown_policy() {
        assert!(MiningPolicy::by_name("hardest", vec![], 2, 3).is_err());
        assert!(MiningPolicy::by_name("combined", vec![], 2, 3).is_ok());
    }

    fn arb_labels() -> impl Strategy<Value = Vec<Tag>> {
        proptest::collection::vec(0u8..5, 1..16).prop_map(|raw| {
            let tags: Vec<Tag> = raw
                .iter()
                .map(|r| match r {
                    0 | 1 => Tag::Outside,
                    2 => Tag::begin("a"),
                    3 => Tag::inside("a"),
                    _ => Tag::begin("b"),
                })
                .collect();
            crate::corpus::repair_labels(&tags)
        })
    }

    proptest! {
        #[test]
        fn gold_equals_non_outside_agnostic(labels in arb_labels()) {
            let tokens = vec!["w".to_string(); labels.len()];
            let s = LabeledSentence::new("s", tokens, labels.clone()).unwrap();
            let gold: Vec<_> = extract_gold_spans(&s).unwrap().iter().map(|s| (s.start, s.end, s.label.clone())).collect();
            let agnostic: Vec<_> = extract_label_agnostic_spans("s", &labels)
                .into_iter()
                .filter(|s| s.label != OUTSIDE_LABEL)
                .map(|s| (s.start, s.end, s.label))
                .collect();
            prop_assert_eq!(gold, agnostic);
        }

        #[test]
        fn mined_never_overlap_gold(labels in arb_labels(), seed in any::<u64>()) {
            let tokens: Vec<String> = (0..labels.len()).map(|i| ["x", "y"][i % 2].to_string()).collect();
            let s = LabeledSentence::new("s", tokens, labels).unwrap();
            let gold = extract_gold_spans(&s).unwrap();
            let policy = MiningPolicy::Combined {
                phrases: vec![vec!["x".into(), "y".into()]],
                cap: 3,
                max_len: 3,
            };
            for m in mine_negative_spans(&s, &policy, seed).unwrap() {
                prop_assert!(gold.iter().all(|g| !g.overlaps(&m)));
                prop_assert!(s.labels[m.start..m.end].iter().all(Tag::is_outside));
            }
        }

        #[test]
        fn pooling_is_linear_and_order_free(
            rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 3), 1..6),
            alpha in -3.0f64..3.0,
        ) {
            let n = rows.len();
            let z = mean_pool(&rows, 0, n, false).unwrap();
            let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * alpha).collect()).collect();
            let zs = mean_pool(&scaled, 0, n, false).unwrap();
            let mut rev = rows.clone();
            rev.reverse();
            let zr = mean_pool(&rev, 0, n, false).unwrap();
            for k in 0..3 {
                prop_assert!((zs[k] - alpha * z[k]).abs() < 1e-9);
                prop_assert!((zr[k] - z[k]).abs() < 1e-12);
            }
        }
    }
}
